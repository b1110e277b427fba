//! Federated averaging of learner weights.
//!
//! Every n0 steps, ceil(participation_fraction * N) candidate agents
//! (always including the leader) attempt to upload their models over the
//! Rician channel; the leader averages whatever arrives in time and
//! broadcasts the result back to the whole swarm. Which weight families are
//! shared depends on the variant: HJB only, FPK only, or both.

use crate::channel::{upload, ChannelParams, PayloadLedger, Upload};
use crate::error::{Result, SimError};
use crate::fpk::FpkModel;
use crate::hjb::HjbModel;
use crate::rng::{substream, Domain};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlVariant {
    /// Share value-model weights only.
    Hjb,
    /// Share density-model weights only.
    Fpk,
    /// Share both weight families.
    Both,
}

impl FlVariant {
    pub fn shares_hjb(self) -> bool {
        matches!(self, FlVariant::Hjb | FlVariant::Both)
    }

    pub fn shares_fpk(self) -> bool {
        matches!(self, FlVariant::Fpk | FlVariant::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    /// Steps between aggregation rounds (single-family variants).
    pub n0: u64,
    /// Steps between rounds when both weight families are shared.
    pub n0_hf: u64,
    /// Fraction of the swarm drawn as candidates each round.
    pub participation_fraction: f64,
    /// Agent acting as the aggregator; never suffers uplink outage to itself.
    pub leader: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            n0: 100,
            n0_hf: 200,
            participation_fraction: 0.8,
            leader: 0,
        }
    }
}

impl FlConfig {
    /// Round period for a variant.
    pub fn effective_n0(&self, variant: FlVariant) -> u64 {
        match variant {
            FlVariant::Both => self.n0_hf,
            _ => self.n0,
        }
    }

    pub fn validate(&self, n_agents: usize) -> std::result::Result<(), String> {
        if self.n0 == 0 || self.n0_hf == 0 {
            return Err("federation.n0 and federation.n0_hf must be >= 1".into());
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err("federation.participation_fraction must be in (0, 1]".into());
        }
        if self.leader >= n_agents {
            return Err("federation.leader out of range".into());
        }
        Ok(())
    }

    pub fn candidate_count(&self, n_agents: usize) -> usize {
        ((self.participation_fraction * n_agents as f64).ceil() as usize).min(n_agents)
    }
}

/// One agent's shareable weights plus the fingerprint of the basis they were
/// trained over.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub agent: usize,
    pub fingerprint: u64,
    pub hjb: Option<HjbModel>,
    pub fpk: Option<FpkModel>,
}

impl ModelBundle {
    /// Number of scalar weights in the bundle (the uplink payload).
    pub fn components(&self) -> usize {
        let h = self.hjb.as_ref().map_or(0, |m| m.w0.len() + m.w1.len());
        let f = self.fpk.as_ref().map_or(0, |m| m.w0.len() + m.w1.len());
        h + f
    }
}

/// Draw this round's candidate set: the leader plus a uniform sample of the
/// rest, sorted by agent id. Deterministic in (seed, round).
pub fn select_candidates(cfg: &FlConfig, n_agents: usize, seed: u64, round: u64) -> Vec<usize> {
    let k = cfg.candidate_count(n_agents);
    let mut others: Vec<usize> = (0..n_agents).filter(|&i| i != cfg.leader).collect();
    let mut rng = substream(seed, Domain::Federation, round);
    others.shuffle(&mut rng);
    let mut picked: Vec<usize> = std::iter::once(cfg.leader)
        .chain(others.into_iter().take(k.saturating_sub(1)))
        .collect();
    picked.sort_unstable();
    picked
}

/// Outcome of one aggregation round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: u64,
    pub candidates: Vec<usize>,
    /// Candidates whose upload fit the latency budget (always includes the
    /// leader).
    pub participants: Vec<usize>,
    pub aggregated: ModelBundle,
    pub ledger: PayloadLedger,
}

/// Run one aggregation round: channel-gate the candidates' uploads, average
/// the arrivals componentwise, and account bits for the uplinks plus the
/// broadcast receptions of the non-participants.
///
/// `bundles` must hold one entry per agent, indexed by id; `dist_to_leader`
/// gives each candidate's distance for path loss.
pub fn run_round(
    cfg: &FlConfig,
    chan: &ChannelParams,
    bundles: &[ModelBundle],
    dist_to_leader: &[f64],
    seed: u64,
    round: u64,
) -> Result<RoundOutcome> {
    let n = bundles.len();
    let candidates = select_candidates(cfg, n, seed, round);
    let mut ledger = PayloadLedger::default();
    let mut participants = Vec::with_capacity(candidates.len());
    for &i in &candidates {
        let components = bundles[i].components();
        if i == cfg.leader {
            // the leader's model is already at the aggregator: charge a
            // deterministic full delivery with no channel draw
            let bits = components as f64 * chan.b_res as f64;
            let slots = (bits / chan.slot_bits()).ceil().max(1.0) as u64;
            ledger.record_upload(&Upload {
                slots,
                delivered: true,
                bits,
            });
            participants.push(i);
            continue;
        }
        let mut rng = substream(seed, Domain::Reception, round * n as u64 + i as u64);
        let u = upload(chan, components, dist_to_leader[i], &mut rng)?;
        ledger.record_upload(&u);
        if u.delivered {
            participants.push(i);
        }
    }

    let received: Vec<&ModelBundle> = participants.iter().map(|&i| &bundles[i]).collect();
    let aggregated = aggregate(&received)?;

    // broadcast: every agent that did not contribute receives the new model
    for i in 0..n {
        if !participants.contains(&i) {
            ledger.record_reception(aggregated.components(), chan.b_res);
        }
    }

    Ok(RoundOutcome {
        round,
        candidates,
        participants,
        aggregated,
        ledger,
    })
}

/// Componentwise mean of the received bundles, processed in agent-id order.
/// All bundles must share a basis fingerprint and weight dimensions.
pub fn aggregate(received: &[&ModelBundle]) -> Result<ModelBundle> {
    let first = received.first().ok_or(SimError::Config(
        "aggregation requires at least one received model".into(),
    ))?;
    let mut ordered: Vec<&&ModelBundle> = received.iter().collect();
    ordered.sort_by_key(|b| b.agent);

    for b in &ordered {
        if b.fingerprint != first.fingerprint {
            return Err(SimError::FingerprintMismatch);
        }
        if b.hjb.is_some() != first.hjb.is_some() || b.fpk.is_some() != first.fpk.is_some() {
            return Err(SimError::Config("mixed bundle shapes in aggregation".into()));
        }
    }
    let inv = 1.0 / ordered.len() as f64;

    let mean_pair = |get: &dyn Fn(&ModelBundle) -> (&[f64], &[f64])| -> Result<(Vec<f64>, Vec<f64>)> {
        let (w0_0, w1_0) = get(first);
        let mut w0 = vec![0.0; w0_0.len()];
        let mut w1 = vec![0.0; w1_0.len()];
        for b in &ordered {
            let (b0, b1) = get(b);
            if b0.len() != w0.len() || b1.len() != w1.len() {
                return Err(SimError::DimensionMismatch {
                    expected: w0.len(),
                    got: b0.len(),
                });
            }
            for (acc, x) in w0.iter_mut().zip(b0) {
                *acc += x * inv;
            }
            for (acc, x) in w1.iter_mut().zip(b1) {
                *acc += x * inv;
            }
        }
        Ok((w0, w1))
    };

    let hjb = if first.hjb.is_some() {
        let (w0, w1) = mean_pair(&|b: &ModelBundle| {
            let m = b.hjb.as_ref().unwrap();
            (m.w0.as_slice(), m.w1.as_slice())
        })?;
        Some(HjbModel { w0, w1 })
    } else {
        None
    };
    let fpk = if first.fpk.is_some() {
        let (w0, w1) = mean_pair(&|b: &ModelBundle| {
            let m = b.fpk.as_ref().unwrap();
            (m.w0.as_slice(), m.w1.as_slice())
        })?;
        Some(FpkModel { w0, w1 })
    } else {
        None
    };

    Ok(ModelBundle {
        agent: ordered[0].agent,
        fingerprint: first.fingerprint,
        hjb,
        fpk,
    })
}

/// Overwrite the shared families of every agent's local models with the
/// broadcast result.
pub fn apply_broadcast(
    variant: FlVariant,
    aggregated: &ModelBundle,
    hjb_models: &mut [HjbModel],
    fpk_models: &mut [FpkModel],
) {
    if variant.shares_hjb() {
        if let Some(m) = &aggregated.hjb {
            for local in hjb_models.iter_mut() {
                local.clone_from(m);
            }
        }
    }
    if variant.shares_fpk() {
        if let Some(m) = &aggregated.fpk {
            for local in fpk_models.iter_mut() {
                local.clone_from(m);
            }
        }
    }
}
