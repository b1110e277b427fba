//! Running cost, Cucker-Smale interaction kernel, rotary-wing motion power,
//! and the swarm comparison metrics (velocity alignment, collision risk,
//! travel times).

use crate::dynamics::{Action, UavState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Kernel softening, m^2.
    pub epsilon: f64,
    /// Kernel exponent.
    pub beta: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c1: 0.015,
            c2: 0.015,
            c3: 0.005,
            epsilon: 1.0,
            beta: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.c1 <= 0.0 || self.c2 <= 0.0 || self.c3 <= 0.0 {
            return Err("cost.c1, cost.c2, cost.c3 must be > 0".into());
        }
        if self.epsilon <= 0.0 {
            return Err("cost.epsilon must be > 0".into());
        }
        if self.beta <= 0.0 {
            return Err("cost.beta must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Blade tip speed, m/s.
    pub omega_tip: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub chi_o: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            lambda0: 0.0049,
            lambda1: 0.0887,
            lambda2: 0.0092,
            omega_tip: 15.0,
            chi_o: 1.6120,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda0 < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err("power.lambda* must be >= 0".into());
        }
        if self.omega_tip <= 0.0 || self.chi_o <= 0.0 {
            return Err("power.omega_tip and power.chi_o must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyParams {
    /// Collision distance, m.
    pub r_coll: f64,
    /// Hazard radius for the collision-risk metric, m.
    pub r_c: f64,
    /// Destination region radius in the mixed-unit 4-D state norm.
    pub dest_norm: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            r_coll: 0.1,
            r_c: std::f64::consts::SQRT_2 / 2.0,
            dest_norm: 10.0,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.r_coll && self.r_coll < self.r_c) {
            return Err("safety requires 0 < r_coll < r_c".into());
        }
        if self.dest_norm <= 0.0 {
            return Err("safety.dest_norm must be > 0".into());
        }
        Ok(())
    }
}

/// Local running-cost term v.r/||r|| + c1 ||v||^2. The projection term is 0
/// at r = 0 (direction undefined at the destination).
pub fn phi_local(s: &UavState, p: &CostParams) -> f64 {
    let r_norm = (s.r[0] * s.r[0] + s.r[1] * s.r[1]).sqrt();
    let proj = if r_norm > 0.0 {
        (s.v[0] * s.r[0] + s.v[1] * s.r[1]) / r_norm
    } else {
        0.0
    };
    proj + p.c1 * (s.v[0] * s.v[0] + s.v[1] * s.v[1])
}

/// Pairwise Cucker-Smale kernel ||v_j - v_i||^2 / (eps + ||r_j - r_i||^2)^beta.
pub fn cs_kernel(si: &UavState, sj: &UavState, p: &CostParams) -> f64 {
    let dv = [sj.v[0] - si.v[0], sj.v[1] - si.v[1]];
    let dr = [sj.r[0] - si.r[0], sj.r[1] - si.r[1]];
    let num = dv[0] * dv[0] + dv[1] * dv[1];
    let den = (p.epsilon + dr[0] * dr[0] + dr[1] * dr[1]).powf(p.beta);
    num / den
}

/// Empirical interaction term: (1/N) sum_j kernel(i, j). The i = j term is 0.
pub fn phi_global_empirical(i: usize, states: &[UavState], p: &CostParams) -> f64 {
    let n = states.len();
    let si = &states[i];
    let sum: f64 = states.iter().map(|sj| cs_kernel(si, sj, p)).sum();
    sum / n as f64
}

/// Interaction term against an explicit neighbor set (used when reception is
/// range- or channel-gated); normalizes by the received count.
pub fn phi_global_over(si: &UavState, neighbors: &[UavState], p: &CostParams) -> f64 {
    if neighbors.is_empty() {
        return 0.0;
    }
    let sum: f64 = neighbors.iter().map(|sj| cs_kernel(si, sj, p)).sum();
    sum / neighbors.len() as f64
}

/// g = phi_L + c3 ||a||^2 + c2 phi_G.
pub fn running_cost(a: &Action, s: &UavState, phi_g: f64, p: &CostParams) -> f64 {
    phi_local(s, p) + p.c3 * a.norm_sq() + p.c2 * phi_g
}

/// Instantaneous rotary-wing motion power at the given speed.
pub fn motion_power(speed: f64, p: &PowerParams) -> f64 {
    let v2 = speed * speed;
    let blade = p.lambda0 * (1.0 + 3.0 * v2 / (p.omega_tip * p.omega_tip));
    let chi4 = p.chi_o.powi(4);
    // Radicand can only go negative through rounding; clamp at 0.
    let radicand = ((1.0 + v2 * v2 / (4.0 * chi4)).sqrt() - v2 / (2.0 * p.chi_o * p.chi_o)).max(0.0);
    let induced = p.lambda1 * radicand.sqrt();
    let parasite = p.lambda2 * v2 * speed / 2.0;
    blade + induced + parasite
}

/// Left-Riemann energy integral over a power trace.
pub fn motion_energy(power_trace: &[f64], dt: f64) -> f64 {
    power_trace.iter().sum::<f64>() * dt
}

/// phi_A(t): time-averaged mean pairwise speed difference over the history
/// (per-step state snapshots, one inner Vec per step), left-Riemann in time.
pub fn velocity_alignment(history: &[Vec<UavState>], dt: f64) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let n = history[0].len();
    let t = history.len() as f64 * dt;
    let mut acc = 0.0;
    for snap in history {
        for si in snap {
            for sj in snap {
                let dv = [sj.v[0] - si.v[0], sj.v[1] - si.v[1]];
                acc += (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
            }
        }
    }
    acc * dt / (t * (n * n) as f64)
}

/// phi_C(t): time-averaged count of ordered pairs within the hazard radius.
/// The i = j pair always fires; `exclude_self` drops it (constant 1/N offset).
pub fn collision_risk(history: &[Vec<UavState>], r_c: f64, dt: f64, exclude_self: bool) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let n = history[0].len();
    let t = history.len() as f64 * dt;
    let r_c_sq = r_c * r_c;
    let mut acc = 0u64;
    for snap in history {
        for (i, si) in snap.iter().enumerate() {
            for (j, sj) in snap.iter().enumerate() {
                if exclude_self && i == j {
                    continue;
                }
                let dr = [sj.r[0] - si.r[0], sj.r[1] - si.r[1]];
                if dr[0] * dr[0] + dr[1] * dr[1] <= r_c_sq {
                    acc += 1;
                }
            }
        }
    }
    acc as f64 * dt / (t * (n * n) as f64)
}

/// Unordered pairs (i, j), i < j, closer than r_coll. Events are counted;
/// the simulation continues with no physical response.
pub fn detect_collision_events(states: &[UavState], r_coll: f64) -> Vec<(usize, usize)> {
    let r_sq = r_coll * r_coll;
    let mut events = Vec::new();
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            let dr = [
                states[j].r[0] - states[i].r[0],
                states[j].r[1] - states[i].r[1],
            ];
            if dr[0] * dr[0] + dr[1] * dr[1] < r_sq {
                events.push((i, j));
            }
        }
    }
    events
}

/// Travel-time summary from per-agent first-entry steps. Agents that never
/// entered contribute `max_steps` and set the truncation flag.
pub fn travel_times(entry_steps: &[Option<usize>], max_steps: usize, dt: f64) -> (f64, f64, bool) {
    let n = entry_steps.len() as f64;
    let mut truncated = false;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for e in entry_steps {
        let steps = match e {
            Some(k) => *k,
            None => {
                truncated = true;
                max_steps
            }
        };
        let t = steps as f64 * dt;
        sum += t;
        max = max.max(t);
    }
    (sum / n, max, truncated)
}
