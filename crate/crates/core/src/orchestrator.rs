//! Scenario assembly and the four control loops: state-sharing HJB control,
//! mean-field game control, its federated variants, and the open-loop
//! offline baseline. Owns step scheduling, arrival latching, termination,
//! payload accounting, and metric collection.
//!
//! Concurrency: each step runs a parallel per-agent phase (sense, learn,
//! act) against the previous barrier's state snapshot; federation, event
//! detection, and metric accumulation are serialized at the barrier. Every
//! random draw comes from a per-agent or per-round substream, so thread
//! scheduling cannot change results.

use crate::basis::Basis;
use crate::channel::{snr, sample_rice_power, PayloadLedger};
use crate::config::ScenarioConfig;
use crate::cost::{
    detect_collision_events, motion_power, phi_global_over, travel_times,
};
use crate::diagnostics::BoundednessMonitor;
use crate::dynamics::{step as integrate, Action, UavState};
use crate::error::{Result, SimError};
use crate::federation::{apply_broadcast, run_round, FlVariant, ModelBundle};
use crate::fpk::{control_field, FpkModel, MeanField};
use crate::hjb::{self, HjbModel};
use crate::report::{MetricsRow, RoundRecord, SimReport, Summary, TrajectoryRow};
use crate::rng::{substream, Domain};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Offline baseline profile: cruise speed and ramp acceleration of the
/// pre-programmed trapezoidal speed plan.
const OFFLINE_VMAX: f64 = 12.0;
const OFFLINE_ACCEL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Hjb,
    Mfg,
    MfgflH,
    MfgflF,
    MfgflHf,
    Offline,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::Hjb,
        Algo::Mfg,
        Algo::MfgflH,
        Algo::MfgflF,
        Algo::MfgflHf,
        Algo::Offline,
    ];

    pub const LEARNING: [Algo; 5] = [
        Algo::Hjb,
        Algo::Mfg,
        Algo::MfgflH,
        Algo::MfgflF,
        Algo::MfgflHf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Hjb => "hjb",
            Algo::Mfg => "mfg",
            Algo::MfgflH => "mfgfl-h",
            Algo::MfgflF => "mfgfl-f",
            Algo::MfgflHf => "mfgfl-hf",
            Algo::Offline => "offline",
        }
    }

    /// Federation variant, if this algorithm aggregates models.
    pub fn variant(self) -> Option<FlVariant> {
        match self {
            Algo::MfgflH => Some(FlVariant::Hjb),
            Algo::MfgflF => Some(FlVariant::Fpk),
            Algo::MfgflHf => Some(FlVariant::Both),
            _ => None,
        }
    }

    /// Whether the algorithm runs the coupled mean-field learners.
    pub fn uses_mean_field(self) -> bool {
        matches!(self, Algo::Mfg | Algo::MfgflH | Algo::MfgflF | Algo::MfgflHf)
    }

    pub fn is_learning(self) -> bool {
        self != Algo::Offline
    }
}

impl FromStr for Algo {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown algorithm '{s}'")))
    }
}

struct AgentCtx {
    state: UavState,
    hjb: HjbModel,
    fpk: FpkModel,
    /// Consensus value model from the last federation broadcast; variants
    /// that federate HJB weights keep their local model proximally tied to
    /// it between rounds so agent policies cannot drift far apart.
    policy: HjbModel,
    /// Agent-centric destination anchor: the agent's initial lattice offset
    /// from the swarm center. The HJB learner sees its state shifted by this
    /// offset, so identical weights across agents describe a rigid
    /// translation of the lattice into the destination region instead of a
    /// funnel into the exact origin; the funnel compresses the lattice below
    /// the collision distance near arrival, the translation does not. All
    /// anchors lie well inside the destination region.
    anchor: [f64; 2],
    /// Shared value prior (profile-tracking law); the learner's weight caps
    /// are deviation balls about it.
    prior: HjbModel,
    /// Completed-step count at first entry into the destination region.
    entry: Option<u64>,
    energy: f64,
    wind: ChaCha12Rng,
    recep: ChaCha12Rng,
    // per-step outputs read back at the barrier
    action: Action,
    e_h: f64,
    e_f: f64,
    degenerate: bool,
    // pre-arrival speed statistics
    speed_max: f64,
    speed_min: f64,
    speed_sum: f64,
    speed_samples: u64,
}

impl AgentCtx {
    fn arrived(&self) -> bool {
        self.entry.is_some()
    }
}

/// Regulated stop once inside the destination region: cancel the drag and
/// mean-wind terms and damp the velocity.
fn stop_action(s: &UavState, c0: f64, v_o: [f64; 2]) -> Action {
    Action::new([
        c0 * (s.v[0] - v_o[0]) - s.v[0],
        c0 * (s.v[1] - v_o[1]) - s.v[1],
    ])
}

fn clamp_action(a: Action, limit: f64) -> Action {
    let n = (a.a[0] * a.a[0] + a.a[1] * a.a[1]).sqrt();
    if n > limit {
        let k = limit / n;
        Action::new([a.a[0] * k, a.a[1] * k])
    } else {
        a
    }
}

/// Pre-programmed common velocity profile of the offline baseline: a
/// trapezoidal speed plan along the straight line from the lattice center to
/// the origin, identical for every agent so the lattice translates rigidly.
struct OfflineProfile {
    dir: [f64; 2],
    t_ramp: f64,
    t_cruise: f64,
    v_peak: f64,
}

impl OfflineProfile {
    fn new(center: [f64; 2]) -> Self {
        let dist = (center[0] * center[0] + center[1] * center[1]).sqrt();
        let dir = [-center[0] / dist, -center[1] / dist];
        let d_ramps = OFFLINE_VMAX * OFFLINE_VMAX / OFFLINE_ACCEL;
        if dist >= d_ramps {
            Self {
                dir,
                t_ramp: OFFLINE_VMAX / OFFLINE_ACCEL,
                t_cruise: (dist - d_ramps) / OFFLINE_VMAX,
                v_peak: OFFLINE_VMAX,
            }
        } else {
            let v_peak = (OFFLINE_ACCEL * dist).sqrt();
            Self {
                dir,
                t_ramp: v_peak / OFFLINE_ACCEL,
                t_cruise: 0.0,
                v_peak,
            }
        }
    }

    fn speed(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t < self.t_ramp {
            OFFLINE_ACCEL * t
        } else if t < self.t_ramp + self.t_cruise {
            self.v_peak
        } else {
            (self.v_peak - OFFLINE_ACCEL * (t - self.t_ramp - self.t_cruise)).max(0.0)
        }
    }

    /// Open-loop action at step n: track the planned velocity assuming the
    /// plan is being followed exactly (no feedback).
    fn action(&self, n: u64, dt: f64, c0: f64, v_o: [f64; 2]) -> Action {
        let t = n as f64 * dt;
        let v_now = self.speed(t);
        let v_next = self.speed(t + dt);
        let accel = (v_next - v_now) / dt;
        Action::new([
            accel * self.dir[0] + c0 * (v_now * self.dir[0] - v_o[0]),
            accel * self.dir[1] + c0 * (v_now * self.dir[1] - v_o[1]),
        ])
    }
}

/// Run one scenario with the given algorithm and seed.
pub fn run(cfg: &ScenarioConfig, algo: Algo, seed: u64) -> Result<SimReport> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let basis = Basis::new(cfg.basis);
    let fingerprint = basis.fingerprint();
    let init_states = cfg.swarm.positions(n);

    let mean_field = if algo.uses_mean_field() {
        Some(MeanField::new(basis.clone(), cfg.quadrature))
    } else {
        None
    };
    let init_fpk = match &mean_field {
        Some(mf) => mf.fit_from_swarm(&init_states, cfg.fpk.bandwidth, cfg.fpk.ridge),
        None => FpkModel::zeros(basis.len()),
    };

    let offline = OfflineProfile::new(cfg.swarm.center);

    // run-local hyperparameters: a certified replanning round may tighten
    // the deviation cap mid-run
    let mut hyper = cfg.hjb;

    // value prior: every learner starts from the same solo-speed profile-
    // tracking policy and refines it online within a bounded deviation.
    // Mean-field variants anchor the common plan on the lattice center and
    // translate it per agent (see AgentCtx::anchor); the state-sharing
    // baseline has no shared plan to anchor, so each agent tracks the
    // straight line from its own start to the literal origin, which funnels
    // the lattice together near arrival.
    let init_hjb = hjb::init_profile(
        &basis,
        &hyper,
        &cfg.dynamics,
        cfg.cost.c3,
        cfg.swarm.center,
        hyper.v_prior,
    );

    let mut agents: Vec<AgentCtx> = init_states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (anchor, prior) = if algo.uses_mean_field() {
                (
                    [
                        s.r[0] - cfg.swarm.center[0],
                        s.r[1] - cfg.swarm.center[1],
                    ],
                    init_hjb.clone(),
                )
            } else {
                (
                    [0.0, 0.0],
                    hjb::init_profile(
                        &basis,
                        &hyper,
                        &cfg.dynamics,
                        cfg.cost.c3,
                        s.r,
                        hyper.v_prior,
                    ),
                )
            };
            AgentCtx {
                state: *s,
                hjb: prior.clone(),
                fpk: init_fpk.clone(),
                policy: prior.clone(),
                anchor,
                prior,
                entry: None,
                energy: 0.0,
                wind: substream(seed, Domain::Wind, i as u64),
                recep: substream(seed, Domain::Reception, i as u64),
                action: Action::new([0.0, 0.0]),
                e_h: 0.0,
                e_f: 0.0,
                degenerate: false,
                speed_max: f64::NEG_INFINITY,
                speed_min: f64::INFINITY,
                speed_sum: 0.0,
                speed_samples: 0,
            }
        })
        .collect();

    let mut ledger = PayloadLedger::default();
    if algo.uses_mean_field() {
        // the one-time t = 0 state exchange that seeds the shared density
        ledger.record_state_exchange(n, cfg.channel.b_res);
    }

    let mut monitor = BoundednessMonitor::default();
    let mut trajectories = Vec::new();
    let mut metrics = Vec::new();
    let mut rounds = Vec::new();
    // running metric accumulators; snapshots per step preserve the exact
    // floating-point summation order of the offline recomputation
    let mut align_acc = 0.0f64;
    let mut coll_acc = 0u64;
    let mut collision_events = 0u64;
    let mut degenerate_density = false;
    let mut steps_run = 0u64;

    let r_c_sq = cfg.safety.r_c * cfg.safety.r_c;
    let variant = algo.variant();
    let n0 = variant.map(|v| cfg.federation.effective_n0(v));
    // whether the one-time certified replanning has happened (both-family
    // federation only)
    let mut replanned = false;

    // per-step phi accumulator snapshots for the T_avg cut
    let mut align_snapshots = Vec::with_capacity(cfg.max_steps as usize);
    let mut coll_snapshots = Vec::with_capacity(cfg.max_steps as usize);

    for step in 0..cfg.max_steps {
        let snapshot: Vec<UavState> = agents.iter().map(|a| a.state).collect();

        // ---- parallel per-agent phase ----
        let results: Vec<Result<()>> = agents
            .par_iter_mut()
            .enumerate()
            .map(|(i, agent)| {
                agent_step(
                    i, agent, step, algo, cfg, &hyper, &basis, mean_field.as_ref(), &snapshot,
                    &offline,
                )
            })
            .collect();
        for r in results {
            r?;
        }

        // ---- barrier: records, events, metrics, federation ----
        for (i, agent) in agents.iter().enumerate() {
            trajectories.push(TrajectoryRow {
                step,
                agent: i,
                x: snapshot[i].r[0],
                y: snapshot[i].r[1],
                v_x: snapshot[i].v[0],
                v_y: snapshot[i].v[1],
                a_x: agent.action.a[0],
                a_y: agent.action.a[1],
            });
            monitor.observe_hjb(agent.e_h);
            monitor.observe_fpk(agent.e_f);
            degenerate_density |= agent.degenerate;
        }

        // arrival latching against the post-integration states
        for agent in agents.iter_mut() {
            if agent.entry.is_none() && agent.state.norm() <= cfg.safety.dest_norm {
                agent.entry = Some(step + 1);
            }
        }

        let new_states: Vec<UavState> = agents.iter().map(|a| a.state).collect();
        // arrived agents have landed; collisions are a flight-phase event
        let flying: Vec<UavState> = agents
            .iter()
            .filter(|a| a.entry.is_none())
            .map(|a| a.state)
            .collect();
        collision_events += detect_collision_events(&flying, cfg.safety.r_coll).len() as u64;

        // ordered-pair metric sums over the new snapshot, self-pairs included
        for si in &new_states {
            for sj in &new_states {
                let dv = [sj.v[0] - si.v[0], sj.v[1] - si.v[1]];
                align_acc += (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
                let dr = [sj.r[0] - si.r[0], sj.r[1] - si.r[1]];
                if dr[0] * dr[0] + dr[1] * dr[1] <= r_c_sq {
                    coll_acc += 1;
                }
            }
        }
        align_snapshots.push(align_acc);
        coll_snapshots.push(coll_acc);

        // payload: state broadcasts every step (Hjb), model rounds (MfgFL)
        if algo == Algo::Hjb {
            ledger.record_state_exchange(n, cfg.channel.b_res);
        }
        if let (Some(variant), Some(n0)) = (variant, n0) {
            let completed = step + 1;
            if completed % n0 == 0 && completed >= cfg.warmup_steps {
                let round = completed / n0;
                let bundles: Vec<ModelBundle> = agents
                    .iter()
                    .enumerate()
                    .map(|(i, a)| ModelBundle {
                        agent: i,
                        fingerprint,
                        hjb: variant.shares_hjb().then(|| a.hjb.clone()),
                        fpk: variant.shares_fpk().then(|| a.fpk.clone()),
                    })
                    .collect();
                let leader = cfg.federation.leader;
                let dists: Vec<f64> = new_states
                    .iter()
                    .map(|s| {
                        let dr = [
                            s.r[0] - new_states[leader].r[0],
                            s.r[1] - new_states[leader].r[1],
                        ];
                        (dr[0] * dr[0] + dr[1] * dr[1]).sqrt()
                    })
                    .collect();
                let outcome = run_round(&cfg.federation, &cfg.channel, &bundles, &dists, seed, round)?;
                let mut hjb_owned: Vec<HjbModel> = agents.iter().map(|a| a.hjb.clone()).collect();
                let mut fpk_owned: Vec<FpkModel> = agents.iter().map(|a| a.fpk.clone()).collect();
                apply_broadcast(variant, &outcome.aggregated, &mut hjb_owned, &mut fpk_owned);
                for (agent, (h, f)) in agents
                    .iter_mut()
                    .zip(hjb_owned.into_iter().zip(fpk_owned.into_iter()))
                {
                    agent.hjb = h;
                    agent.fpk = f;
                    if variant.shares_hjb() {
                        agent.policy = agent.hjb.clone();
                    }
                }
                // Certified replanning: the first round that federates both
                // the value and the density family establishes that every
                // agent holds the same coupled picture of the swarm, so the
                // solo-speed plan is replaced once by a congestion-
                // discounted cruise, and the trust region tightens to the
                // consensus noise floor (refined_cap_scale / sqrt(N)). The
                // same prior delta is added to every agent's weights, so the
                // broadcast consensus is preserved exactly.
                if variant == FlVariant::Both && !replanned {
                    replanned = true;
                    let c_hat = congestion_estimate(&init_states);
                    let v_ref = hyper.v_prior / (1.0 + hyper.kappa * c_hat);
                    let stiff = crate::hjb::HjbHyper {
                        k_d: hyper.refined_k_d,
                        ..hyper
                    };
                    let refined = hjb::init_profile(
                        &basis,
                        &stiff,
                        &cfg.dynamics,
                        cfg.cost.c3,
                        cfg.swarm.center,
                        v_ref,
                    );
                    let cap = if hyper.w_cap > 0.0 {
                        hyper
                            .w_cap
                            .min(hyper.refined_cap_scale / (n as f64).sqrt())
                    } else {
                        hyper.w_cap
                    };
                    for agent in agents.iter_mut() {
                        for ((w, r), p) in agent
                            .hjb
                            .w0
                            .iter_mut()
                            .zip(&refined.w0)
                            .zip(&agent.prior.w0)
                        {
                            *w += r - p;
                        }
                        agent.prior = refined.clone();
                        hjb::project_ball_about(&mut agent.hjb.w0, &agent.prior.w0, cap);
                        agent.policy = agent.hjb.clone();
                    }
                    hyper.w_cap = cap;
                }
                ledger.merge(&outcome.ledger);
                rounds.push(RoundRecord {
                    round,
                    step: completed,
                    candidates: outcome.candidates,
                    participants: outcome.participants.clone(),
                    outages: outcome.ledger.outages,
                    bits: outcome.ledger.bits,
                });
            }
        }

        let steps_done = step + 1;
        let mean_energy = agents.iter().map(|a| a.energy).sum::<f64>() / n as f64;
        let denom = steps_done as f64 * (n * n) as f64;
        metrics.push(MetricsRow {
            step,
            mean_energy,
            phi_a: align_acc / denom,
            phi_c: coll_acc as f64 / denom,
            hjb_residual_max: agents.iter().map(|a| a.e_h.abs()).fold(0.0, f64::max),
            fpk_residual_max: agents.iter().map(|a| a.e_f.abs()).fold(0.0, f64::max),
            cum_bits: ledger.bits,
        });

        steps_run = steps_done;
        if agents.iter().all(|a| a.arrived()) {
            break;
        }
    }

    // ---- summary ----
    let entries: Vec<Option<usize>> = agents
        .iter()
        .map(|a| a.entry.map(|e| e as usize))
        .collect();
    let (t_avg, t_max, truncated) =
        travel_times(&entries, steps_run as usize, cfg.dynamics.dt);
    // cut the cumulative phi metrics at T_avg
    let cut = ((t_avg / cfg.dynamics.dt).round() as usize)
        .clamp(1, steps_run.max(1) as usize);
    let denom_cut = cut as f64 * (n * n) as f64;
    let phi_a_at_t_avg = align_snapshots[cut - 1] / denom_cut;
    let phi_c_at_t_avg = coll_snapshots[cut - 1] as f64 / denom_cut;

    let energy_mean = agents.iter().map(|a| a.energy).sum::<f64>() / n as f64;
    let energy_var = agents
        .iter()
        .map(|a| (a.energy - energy_mean) * (a.energy - energy_mean))
        .sum::<f64>()
        / n as f64;

    let speed_samples: u64 = agents.iter().map(|a| a.speed_samples).sum();
    let speed_mean = if speed_samples > 0 {
        agents.iter().map(|a| a.speed_sum).sum::<f64>() / speed_samples as f64
    } else {
        0.0
    };
    let speed_max = agents
        .iter()
        .map(|a| a.speed_max)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let speed_min = agents
        .iter()
        .map(|a| a.speed_min)
        .fold(f64::INFINITY, f64::min)
        .min(speed_max);

    let bounded = monitor.within(&cfg.limits);

    Ok(SimReport {
        summary: Summary {
            algo: algo.name().to_string(),
            seed,
            n_agents: n,
            steps_run,
            arrived: agents.iter().filter(|a| a.arrived()).count(),
            t_avg,
            t_max,
            truncated,
            phi_a_at_t_avg,
            phi_c_at_t_avg,
            energy_mean,
            energy_var,
            collision_events,
            speed_max,
            speed_mean,
            speed_min,
            payload: ledger,
            max_abs_hjb_residual: monitor.max_abs_hjb,
            max_abs_fpk_residual: monitor.max_abs_fpk,
            bounded,
            degenerate_density,
        },
        trajectories,
        metrics,
        rounds,
    })
}

/// Lattice congestion estimate used by the certified replanning: fit an
/// axis-aligned Gaussian to the initial formation (the t = 0 exchanged
/// states) and return (N - 1) times the mean fitted density over the agent
/// positions — the expected crowding each vehicle flies through when the
/// whole formation moves together. Zero for fewer than two agents or a
/// degenerate (collinear) formation.
fn congestion_estimate(init_states: &[UavState]) -> f64 {
    let n = init_states.len();
    if n < 2 {
        return 0.0;
    }
    let inv = 1.0 / n as f64;
    let mut mean = [0.0f64; 2];
    for s in init_states {
        mean[0] += s.r[0] * inv;
        mean[1] += s.r[1] * inv;
    }
    let mut var = [0.0f64; 2];
    for s in init_states {
        var[0] += (s.r[0] - mean[0]) * (s.r[0] - mean[0]) * inv;
        var[1] += (s.r[1] - mean[1]) * (s.r[1] - mean[1]) * inv;
    }
    if var[0] <= 1e-12 || var[1] <= 1e-12 {
        return 0.0;
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * (var[0] * var[1]).sqrt());
    let mut dens = 0.0;
    for s in init_states {
        let dx = s.r[0] - mean[0];
        let dy = s.r[1] - mean[1];
        dens += norm * (-0.5 * (dx * dx / var[0] + dy * dy / var[1])).exp() * inv;
    }
    (n as f64 - 1.0) * dens
}

/// One agent's sense → learn → act phase against the step snapshot.
#[allow(clippy::too_many_arguments)]
fn agent_step(
    i: usize,
    agent: &mut AgentCtx,
    step: u64,
    algo: Algo,
    cfg: &ScenarioConfig,
    hyper: &crate::hjb::HjbHyper,
    basis: &Basis,
    mean_field: Option<&MeanField>,
    snapshot: &[UavState],
    offline: &OfflineProfile,
) -> Result<()> {
    let dyn_p = &cfg.dynamics;
    let cost_p = &cfg.cost;
    let state = agent.state;

    agent.e_h = 0.0;
    agent.e_f = 0.0;
    agent.degenerate = false;

    let action = if agent.arrived() {
        stop_action(&state, dyn_p.c0, dyn_p.v_o)
    } else if algo == Algo::Offline {
        offline.action(step, dyn_p.dt, dyn_p.c0, dyn_p.v_o)
    } else {
        // the learner works in anchor-shifted coordinates (see AgentCtx::anchor)
        let hjb_state = UavState::new(
            [state.r[0] - agent.anchor[0], state.r[1] - agent.anchor[1]],
            state.v,
        );
        let eval = basis.eval(&hjb_state, dyn_p.sigma_wind).map_err(|e| match e {
            SimError::EnvelopeExceeded { value, envelope, .. } => SimError::EnvelopeExceeded {
                value,
                envelope,
                agent: i,
                step: step as usize,
            },
            other => other,
        })?;

        let phi_g = match algo {
            Algo::Hjb => {
                // channel-gated state broadcast: one fading draw per peer,
                // reception requires range and SNR threshold
                let mut neighbors = Vec::with_capacity(snapshot.len() - 1);
                for (j, sj) in snapshot.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let z = sample_rice_power(&cfg.channel, &mut agent.recep);
                    let dr = [sj.r[0] - state.r[0], sj.r[1] - state.r[1]];
                    let dist = (dr[0] * dr[0] + dr[1] * dr[1]).sqrt();
                    if dist <= cfg.comm_range && snr(&cfg.channel, z, dist.max(1e-9))? >= cfg.channel.eta
                    {
                        neighbors.push(*sj);
                    }
                }
                phi_global_over(&state, &neighbors, cost_p)
            }
            _ => {
                // Mean-field variants evaluate the interaction at the
                // anchor-shifted state: the population density is common to
                // the swarm, so the congestion the learner prices is that of
                // the shared plan's representative trajectory, not the
                // agent's private lattice slot. (A per-slot evaluation would
                // feed each agent a systematically different residual and
                // scatter the learned policies apart.)
                if step < cfg.warmup_steps || snapshot.len() == 1 {
                    // warm-up: empirical kernel over the t = 0 exchanged
                    // states (no further state traffic afterwards)
                    if snapshot.len() == 1 {
                        0.0
                    } else {
                        let others: Vec<UavState> = cfg
                            .swarm
                            .positions(snapshot.len())
                            .into_iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, s)| s)
                            .collect();
                        phi_global_over(&hjb_state, &others, cost_p)
                    }
                } else {
                    let mf = mean_field.expect("mean-field algorithms carry a quadrature");
                    let inter = mf.interaction(&hjb_state, &agent.fpk.w0, cost_p);
                    agent.degenerate = inter.degenerate;
                    inter.value
                }
            }
        };

        // learning-rate warm-up: ramp the policy and density step sizes
        // linearly over the warm-up window so per-agent noise cannot
        // diverge the fresh models (the w1 residual-absorber inside
        // hjb::update always runs at full rate)
        let ramp = if cfg.warmup_steps == 0 {
            1.0
        } else {
            ((step + 1) as f64 / cfg.warmup_steps as f64).min(1.0)
        };
        agent.e_h = hjb::update(
            &mut agent.hjb,
            &eval,
            &hjb_state,
            phi_g,
            hyper,
            dyn_p,
            cost_p,
            Some(&agent.prior),
            ramp,
        );
        if !agent.e_h.is_finite() {
            return Err(SimError::NonFinite {
                context: "hjb residual".into(),
                agent: i,
                step: step as usize,
            });
        }

        if algo.uses_mean_field() {
            // the density lives over true (unshifted) states; the control
            // field combines the policy (anchor-shifted eval) with the
            // position-independent drift
            let fpk_eval = basis.eval(&state, dyn_p.sigma_wind)?;
            let ctrl = control_field(&agent.hjb, &eval, &state, dyn_p, cost_p.c3);
            agent.e_f = crate::fpk::update(&mut agent.fpk, &fpk_eval, &ctrl, cfg.fpk.mu * ramp);
            if !agent.e_f.is_finite() {
                return Err(SimError::NonFinite {
                    context: "fpk residual".into(),
                    agent: i,
                    step: step as usize,
                });
            }
        }

        // weight-federating variants keep their local model proximally tied
        // to the last consensus, bounding inter-agent policy spread
        if matches!(algo.variant(), Some(v) if v.shares_hjb()) {
            hjb::proximal_pull(&mut agent.hjb, &agent.policy, hyper.prox);
        }
        clamp_action(hjb::action(&agent.hjb, &eval, cost_p.c3), cfg.action_limit)
    };

    // pre-arrival bookkeeping at the left endpoint
    if !agent.arrived() {
        let speed = state.speed();
        agent.energy += motion_power(speed, &cfg.power) * dyn_p.dt;
        agent.speed_max = agent.speed_max.max(speed);
        agent.speed_min = agent.speed_min.min(speed);
        agent.speed_sum += speed;
        agent.speed_samples += 1;
    }

    let noise = [
        agent.wind.sample::<f64, _>(StandardNormal),
        agent.wind.sample::<f64, _>(StandardNormal),
    ];
    agent.action = action;
    agent.state = integrate(&state, &action, dyn_p, noise);
    if !agent.state.is_finite() {
        return Err(SimError::NonFinite {
            context: "state".into(),
            agent: i,
            step: step as usize,
        });
    }
    Ok(())
}

/// FPK regressor samples [g0; sigma] collected along a short mean-field
/// run's dumped trajectory, evaluated at the run's initial models (HJB at
/// zero, FPK at the swarm fit). Feeds the spectral step-bound and MSD
/// diagnostics.
pub fn fpk_regressor_samples(
    cfg: &ScenarioConfig,
    seed: u64,
    steps: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut cfg = cfg.clone();
    cfg.max_steps = steps;
    let rep = run(&cfg, Algo::Mfg, seed)?;
    let basis = Basis::new(cfg.basis);
    let hjb_init = HjbModel::zeros(basis.len());
    let mut samples = Vec::with_capacity(rep.trajectories.len());
    for row in &rep.trajectories {
        let s = UavState::new([row.x, row.y], [row.v_x, row.v_y]);
        let eval = basis.eval(&s, cfg.dynamics.sigma_wind)?;
        let ctrl = control_field(&hjb_init, &eval, &s, &cfg.dynamics, cfg.cost.c3);
        let mut g = crate::fpk::w0_gradient(&eval, &ctrl);
        g.extend_from_slice(&eval.sigma);
        samples.push(g);
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    N0,
    SigmaWind,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::N0 => "n0",
            SweepAxis::SigmaWind => "sigma_wind",
        }
    }

    /// Apply one axis value to a config copy.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            SweepAxis::N => cfg.n_agents = value.round() as usize,
            SweepAxis::N0 => {
                cfg.federation.n0 = value.round() as u64;
                cfg.federation.n0_hf = value.round() as u64;
            }
            SweepAxis::SigmaWind => cfg.dynamics.sigma_wind = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" | "N" => Ok(SweepAxis::N),
            "n0" => Ok(SweepAxis::N0),
            "sigma_wind" => Ok(SweepAxis::SigmaWind),
            other => Err(SimError::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub algo: String,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

/// Cross product of (value, seed, algo); individual failures are recorded
/// and the sweep continues.
pub fn sweep(
    template: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    algos: &[Algo],
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(values.len() * seeds.len() * algos.len());
    for &value in values {
        let mut cfg = template.clone();
        axis.apply(&mut cfg, value);
        for &seed in seeds {
            for &algo in algos {
                let cell = match run(&cfg, algo, seed) {
                    Ok(rep) => SweepCell {
                        axis: axis.name().into(),
                        value,
                        seed,
                        algo: algo.name().into(),
                        summary: Some(rep.summary),
                        error: None,
                    },
                    Err(e) => SweepCell {
                        axis: axis.name().into(),
                        value,
                        seed,
                        algo: algo.name().into(),
                        summary: None,
                        error: Some(e.to_string()),
                    },
                };
                cells.push(cell);
            }
        }
    }
    cells
}
