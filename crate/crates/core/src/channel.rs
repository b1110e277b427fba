//! Rician uplink model and the communication-payload ledger.
//!
//! Small-scale fading is Rician: a fixed line-of-sight component xi plus a
//! circular Gaussian scatter component scaled by chi. Each transmission slot
//! carries theta * W_o * log2(1 + eta) bits when the instantaneous SNR
//! reaches the decoding threshold eta; a weight vector of b bits needs
//! ceil(b / slot_bits) successful slots, and the upload is dropped (outage)
//! when that exceeds the latency budget D_M.

use crate::error::{Result, SimError};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Transmit power [W].
    pub p_o: f64,
    /// Bandwidth [Hz].
    pub w_o: f64,
    /// Noise power spectral density [W/Hz].
    pub sigma_n: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Line-of-sight amplitude.
    pub xi: f64,
    /// Scatter amplitude scale.
    pub chi: f64,
    /// SNR decoding threshold.
    pub eta: f64,
    /// Slot duration [s].
    pub theta: f64,
    /// Latency budget in slots per upload.
    pub d_m: u64,
    /// Bits per weight component.
    pub b_res: u32,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            p_o: 0.1,
            w_o: 2.0e6,
            sigma_n: 1.0e-14,
            alpha: 0.0,
            xi: 6.649,
            chi: 1.347,
            eta: 10.0,
            theta: 0.1,
            d_m: 50,
            b_res: 32,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.p_o > 0.0 && self.w_o > 0.0 && self.sigma_n > 0.0) {
            return Err("channel powers and bandwidth must be positive".into());
        }
        if self.alpha < 0.0 || self.xi < 0.0 || self.chi < 0.0 {
            return Err("channel alpha, xi, chi must be nonnegative".into());
        }
        if !(self.eta > 0.0 && self.theta > 0.0) {
            return Err("channel eta and theta must be positive".into());
        }
        if self.d_m == 0 || self.b_res == 0 {
            return Err("channel d_m and b_res must be >= 1".into());
        }
        Ok(())
    }

    /// Bits carried by one successful slot.
    pub fn slot_bits(&self) -> f64 {
        self.theta * self.w_o * (1.0 + self.eta).log2()
    }
}

/// Draw a squared Rician fading gain z = ||(xi + chi g1, chi g2)||^2 with
/// g1, g2 standard normal.
pub fn sample_rice_power<R: Rng + ?Sized>(p: &ChannelParams, rng: &mut R) -> f64 {
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    let re = p.xi + p.chi * g1;
    let im = p.chi * g2;
    re * re + im * im
}

/// Instantaneous SNR at distance `dist` for fading power gain `z`.
pub fn snr(p: &ChannelParams, z: f64, dist: f64) -> Result<f64> {
    let path = if p.alpha == 0.0 {
        1.0
    } else {
        if dist <= 0.0 {
            return Err(SimError::ZeroDistance);
        }
        dist.powf(-p.alpha)
    };
    Ok(p.p_o * z * path / (p.w_o * p.sigma_n))
}

/// Outcome of one model upload attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Upload {
    /// Slots consumed (successful ones; capped at the budget on outage).
    pub slots: u64,
    /// Whether the payload fit within the latency budget.
    pub delivered: bool,
    /// Bits of payload (delivered or attempted).
    pub bits: f64,
}

/// Simulate one upload of `components` weight components: slots are drawn
/// until the payload is through or the budget d_m is exhausted. Every slot
/// draws fresh fading; only slots whose SNR reaches eta carry bits.
pub fn upload<R: Rng + ?Sized>(
    p: &ChannelParams,
    components: usize,
    dist: f64,
    rng: &mut R,
) -> Result<Upload> {
    let bits = components as f64 * p.b_res as f64;
    let per_slot = p.slot_bits();
    let mut carried = 0.0;
    for slot in 1..=p.d_m {
        let z = sample_rice_power(p, rng);
        if snr(p, z, dist)? >= p.eta {
            carried += per_slot;
        }
        if carried >= bits {
            return Ok(Upload {
                slots: slot,
                delivered: true,
                bits,
            });
        }
    }
    Ok(Upload {
        slots: p.d_m,
        delivered: false,
        bits,
    })
}

/// Cumulative communication accounting for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PayloadLedger {
    /// Total payload bits exchanged (uplink + broadcast reception).
    pub bits: f64,
    /// Upload attempts that fit the latency budget.
    pub delivered: u64,
    /// Upload attempts dropped for exceeding the budget.
    pub outages: u64,
    /// Slots consumed across all attempts.
    pub slots: u64,
}

impl PayloadLedger {
    pub fn record_upload(&mut self, u: &Upload) {
        self.slots += u.slots;
        if u.delivered {
            self.delivered += 1;
            self.bits += u.bits;
        } else {
            self.outages += 1;
        }
    }

    /// Broadcast reception of `components` components by one agent.
    pub fn record_reception(&mut self, components: usize, b_res: u32) {
        self.bits += components as f64 * b_res as f64;
    }

    /// Whole-swarm state broadcast: every agent shares its 4-component
    /// state once.
    pub fn record_state_exchange(&mut self, n_agents: usize, b_res: u32) {
        self.bits += n_agents as f64 * 4.0 * b_res as f64;
    }

    pub fn merge(&mut self, other: &PayloadLedger) {
        self.bits += other.bits;
        self.delivered += other.delivered;
        self.outages += other.outages;
        self.slots += other.slots;
    }
}
