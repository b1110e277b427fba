//! Wind-perturbed double-integrator dynamics.
//!
//! State s = [r, v] with dr = v dt and
//! dv = a dt - c0 (v - v_o) dt + sigma_wind dW, i.e. the velocity follows an
//! Ornstein-Uhlenbeck process around the mean wind v_o while the commanded
//! acceleration steers it. Integration is Euler-Maruyama with one noise draw
//! per velocity component per step.

use serde::{Deserialize, Serialize};

/// Planar position/velocity of one agent, meters and m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub r: [f64; 2],
    pub v: [f64; 2],
}

impl UavState {
    pub fn new(r: [f64; 2], v: [f64; 2]) -> Self {
        Self { r, v }
    }

    /// Flattened [x, y, vx, vy].
    pub fn flat(&self) -> [f64; 4] {
        [self.r[0], self.r[1], self.v[0], self.v[1]]
    }

    /// Mixed-unit 4-D state norm, used for the destination-entry test.
    pub fn norm(&self) -> f64 {
        (self.r[0] * self.r[0]
            + self.r[1] * self.r[1]
            + self.v[0] * self.v[0]
            + self.v[1] * self.v[1])
            .sqrt()
    }

    pub fn speed(&self) -> f64 {
        (self.v[0] * self.v[0] + self.v[1] * self.v[1]).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// Drag / wind mean-reversion rate, 1/s.
    pub c0: f64,
    /// Mean wind velocity, m/s.
    pub v_o: [f64; 2],
    /// Wind noise scale (V_o = sigma_wind * I).
    pub sigma_wind: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            c0: 0.1,
            v_o: [1.0, -1.0],
            sigma_wind: 0.1,
            dt: 0.1,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.c0 <= 0.0 {
            return Err("dynamics.c0 must be > 0".into());
        }
        if self.dt <= 0.0 {
            return Err("dynamics.dt must be > 0".into());
        }
        if self.sigma_wind < 0.0 {
            return Err("dynamics.sigma_wind must be >= 0".into());
        }
        Ok(())
    }
}

/// Commanded acceleration, m/s^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub a: [f64; 2],
}

impl Action {
    pub const ZERO: Action = Action { a: [0.0, 0.0] };

    pub fn new(a: [f64; 2]) -> Self {
        Self { a }
    }

    pub fn norm_sq(&self) -> f64 {
        self.a[0] * self.a[0] + self.a[1] * self.a[1]
    }
}

/// Uncontrolled drift f(s) = A s + c0 B v_o = [v; -c0 (v - v_o)].
pub fn drift(s: &UavState, p: &DynamicsParams) -> [f64; 4] {
    [
        s.v[0],
        s.v[1],
        -p.c0 * (s.v[0] - p.v_o[0]),
        -p.c0 * (s.v[1] - p.v_o[1]),
    ]
}

/// One Euler-Maruyama step. `noise` are i.i.d. standard normal draws for the
/// two velocity components; noise enters velocity only.
pub fn step(s: &UavState, a: &Action, p: &DynamicsParams, noise: [f64; 2]) -> UavState {
    let sqrt_dt = p.dt.sqrt();
    UavState {
        r: [s.r[0] + s.v[0] * p.dt, s.r[1] + s.v[1] * p.dt],
        v: [
            s.v[0] + (a.a[0] - p.c0 * (s.v[0] - p.v_o[0])) * p.dt + p.sigma_wind * sqrt_dt * noise[0],
            s.v[1] + (a.a[1] - p.c0 * (s.v[1] - p.v_o[1])) * p.dt + p.sigma_wind * sqrt_dt * noise[1],
        ],
    }
}
