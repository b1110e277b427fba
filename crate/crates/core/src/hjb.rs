//! Per-agent value-function learner.
//!
//! The value and its time derivative are linear models over the polynomial
//! basis. The HJB residual is the quantity that would vanish along optimal
//! play; gradient descent on half its square, plus a destination-stopping
//! regularizer, drives the weights. One update per agent per time step.

use crate::basis::{self, Basis, BasisEval};
use crate::cost::{phi_local, CostParams};
use crate::dynamics::{drift, Action, DynamicsParams, UavState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbModel {
    /// Value weights.
    pub w0: Vec<f64>,
    /// Time-derivative weights.
    pub w1: Vec<f64>,
}

impl HjbModel {
    pub fn zeros(m: usize) -> Self {
        Self {
            w0: vec![0.0; m],
            w1: vec![0.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.w0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.iter().chain(&self.w1).all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjbHyper {
    /// Gradient step size.
    pub mu: f64,
    /// Regularizer weight.
    pub c_reg: f64,
    /// Destination region radius in state norm; the stopping regularizer is
    /// active outside it.
    pub dest_norm: f64,
    /// Projection radius for the w0 weights, measured as L2 distance from
    /// the prior produced by `init_profile`; keeps the learned policy a
    /// bounded refinement of the prior so the polynomial extrapolation can
    /// never run away. 0 disables the cap.
    pub w_cap: f64,
    /// Projection radius for the w1 (time-derivative) weights about the
    /// prior (which is zero there). 0 disables the cap.
    pub w1_cap: f64,
    /// Per-step proximal pull toward the last federation consensus
    /// (FedProx-style); bounds how far agent policies drift apart between
    /// rounds. 0 disables the pull.
    pub prox: f64,
    /// Relative step-size factor for the w1 (time-derivative) weights.
    /// w1 tracks the slowly varying inhomogeneous part of the residual
    /// (dominated by the running cost along the flight); its normalized
    /// step must outpace that drift or the tracking lag shows up directly
    /// as residual, so it runs much faster than the policy pathway.
    pub w1_rate: f64,
    /// Peak speed of the solo (single-vehicle) flight plan [m/s]; <= 0
    /// disables the profile part of the prior.
    pub v_prior: f64,
    /// Congestion discount gain: once a federation round certifies swarm
    /// coherence, the replanned cruise peak is v_prior / (1 + kappa c) with
    /// c the lattice congestion estimate.
    pub kappa: f64,
    /// Post-replanning deviation cap about the refined prior, scaled by
    /// 1/sqrt(N): averaging over N vehicles shrinks the consensus noise
    /// floor, so the trust region tightens with the fleet size.
    pub refined_cap_scale: f64,
    /// Velocity-tracking gain of the refined (post-certification) plan
    /// [1/s]; a certified common plan can be held much more stiffly against
    /// wind than an exploratory one.
    pub refined_k_d: f64,
    /// Velocity-tracking gain of the value prior [1/s].
    pub k_d: f64,
}

impl Default for HjbHyper {
    fn default() -> Self {
        Self {
            mu: 0.01,
            c_reg: 0.5,
            dest_norm: 10.0,
            w_cap: 0.1,
            w1_cap: 0.0,
            prox: 0.05,
            w1_rate: 150.0,
            v_prior: 16.2,
            kappa: 0.526,
            refined_cap_scale: 0.175,
            refined_k_d: 6.0,
            k_d: 1.5,
        }
    }
}

/// Speed-profile shape conditions of the quartic sigma(p), where p in
/// [0, 1] is the traversed fraction of the straight line from the start to
/// the destination: a long launch crawl (value 0.15, zero slope at p = 0),
/// a late shoulder (value 1 at p = 0.8), and a creep-in terminal approach
/// (value 0.05, slope -0.8 at p = 1). The five conditions pin the quartic
/// uniquely; its interior maximum (near mid-route) is the cruise hump, and
/// callers rescale by `profile_sigma_max` so the hump hits the requested
/// peak speed exactly.
const PROFILE_START_VALUE: f64 = 0.15;
const PROFILE_START_SLOPE: f64 = 0.0;
const PROFILE_SHOULDER_P: f64 = 0.8;
const PROFILE_END_VALUE: f64 = 0.05;
const PROFILE_END_SLOPE: f64 = -0.8;

/// Monomial coefficients (ascending) of the quartic speed-profile shape.
pub fn profile_coefficients() -> [f64; 5] {
    let mut a = nalgebra::SMatrix::<f64, 5, 5>::zeros();
    let mut b = nalgebra::SVector::<f64, 5>::zeros();
    // rows: value at 0, slope at 0, value at shoulder, value at 1, slope at 1
    let nodes: [(f64, f64, bool); 5] = [
        (0.0, PROFILE_START_VALUE, false),
        (0.0, PROFILE_START_SLOPE, true),
        (PROFILE_SHOULDER_P, 1.0, false),
        (1.0, PROFILE_END_VALUE, false),
        (1.0, PROFILE_END_SLOPE, true),
    ];
    for (row, &(p, rhs, is_slope)) in nodes.iter().enumerate() {
        for k in 0..5 {
            a[(row, k)] = if is_slope {
                if k == 0 {
                    0.0
                } else {
                    k as f64 * p.powi(k as i32 - 1)
                }
            } else {
                p.powi(k as i32)
            };
        }
        b[row] = rhs;
    }
    let x = a
        .lu()
        .solve(&b)
        .expect("profile interpolation system is nonsingular");
    let mut out = [0.0; 5];
    out.copy_from_slice(x.as_slice());
    out
}

/// Maximum of the quartic shape over [0, 1], by dense deterministic
/// sampling; divides the requested peak speed into the per-axis amplitude.
pub fn profile_sigma_max(coef: &[f64; 5]) -> f64 {
    let mut max = 0.0f64;
    for k in 0..=4000 {
        let p = k as f64 / 4000.0;
        let mut sigma = 0.0;
        for c in coef.iter().rev() {
            sigma = sigma * p + c;
        }
        max = max.max(sigma);
    }
    max
}

/// Per-axis reference velocity of the prior at position `x` on the given
/// axis (`x0` = start coordinate, `v_axis` = signed cruise component).
pub fn profile_velocity(coef: &[f64; 5], x: f64, x0: f64, v_axis: f64) -> f64 {
    let p = 1.0 - x / x0;
    let mut sigma = 0.0;
    for c in coef.iter().rev() {
        sigma = sigma * p + c;
    }
    -v_axis * sigma
}

/// Value prior encoding a velocity-tracking law around a common speed
/// profile. Per axis, with F(x) the profile reference velocity, the prior is
/// psi0 = sum_axis 2 c3 [ k_d (v^2/2 - F(x) v) - c0 (F(x) - v_o) v ],
/// whose induced policy a = -(1/2 c3) d(psi0)/dv is
/// a = k_d (F(x) - v) + c0 (F(x) - v_o):
/// velocity tracking plus exact drag/wind feedforward, so the commanded
/// acceleration stays near the profile's own (small) ramp rates instead of
/// fighting drag, and the actuator clamp stays inactive in cruise. F is the
/// quartic shape rescaled so its interior maximum equals `v_peak`, split
/// across axes in proportion to the start coordinates, so the vehicle flies
/// the straight line from `start` to the origin. Every polynomial here has
/// position degree <= 4 alongside one velocity power, so the construction
/// is exact in grouped bases of degree >= 5. k_d <= 0 returns the zero
/// model.
pub fn init_profile(
    basis: &Basis,
    hyper: &HjbHyper,
    dyn_p: &DynamicsParams,
    c3: f64,
    start: [f64; 2],
    v_peak: f64,
) -> HjbModel {
    let mut model = HjbModel::zeros(basis.len());
    let k_d = hyper.k_d;
    if k_d <= 0.0 {
        return model;
    }
    let ps = basis.spec().pos_scale;
    let vs = basis.spec().vel_scale;
    for (k, t) in basis.terms().iter().enumerate() {
        if t.pos_pow == 0 && t.vel_pow == 2 {
            model.w0[k] = c3 * k_d * vs * vs;
        }
    }
    let dist = (start[0] * start[0] + start[1] * start[1]).sqrt();
    if v_peak <= 0.0 || dist == 0.0 {
        return model;
    }
    let sigma_coef = profile_coefficients();
    let amp = v_peak / profile_sigma_max(&sigma_coef);
    for axis in 0..2usize {
        let x0 = start[axis];
        // beta_j: coefficients of F_axis as a polynomial in x / pos_scale,
        // from the binomial expansion of sigma(1 - (ps / x0) xhat)
        let mut beta = [0.0; 5];
        if x0 != 0.0 {
            let v_axis = amp * x0 / dist;
            let t = ps / x0;
            for (k, &c) in sigma_coef.iter().enumerate() {
                let mut binom = 1.0f64;
                for (j, b) in beta.iter_mut().enumerate().take(k + 1) {
                    *b += -v_axis * c * binom * (-t).powi(j as i32);
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
            }
        }
        for (k, term) in basis.terms().iter().enumerate() {
            if term.group == axis as u8 && term.vel_pow == 1 && (term.pos_pow as usize) < 5 {
                let j = term.pos_pow as usize;
                let mut c = -2.0 * c3 * (k_d + dyn_p.c0) * beta[j] * vs;
                if j == 0 {
                    c += 2.0 * c3 * dyn_p.c0 * dyn_p.v_o[axis] * vs;
                }
                model.w0[k] = c;
            }
        }
    }
    model
}

/// Pull the policy weights toward a reference: w0 += rate (w0_ref - w0).
/// Only the w0 (policy) block is pulled; w1 tracks the fast inhomogeneous
/// part of the residual, and pinning it to a stale consensus would inject
/// tracking lag straight into the residual. No-op for rate <= 0.
pub fn proximal_pull(model: &mut HjbModel, reference: &HjbModel, rate: f64) {
    if rate <= 0.0 {
        return;
    }
    for (w, r) in model.w0.iter_mut().zip(&reference.w0) {
        *w += rate * (r - *w);
    }
}

/// Project a weight vector onto the L2 ball of radius `cap` (no-op for
/// cap <= 0).
pub fn project_ball(w: &mut [f64], cap: f64) {
    if cap <= 0.0 {
        return;
    }
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > cap {
        let k = cap / norm;
        for x in w.iter_mut() {
            *x *= k;
        }
    }
}

/// Project `w` onto the L2 ball of radius `cap` centered at `anchor`
/// (no-op for cap <= 0).
pub fn project_ball_about(w: &mut [f64], anchor: &[f64], cap: f64) {
    if cap <= 0.0 {
        return;
    }
    let norm = w
        .iter()
        .zip(anchor)
        .map(|(x, a)| (x - a) * (x - a))
        .sum::<f64>()
        .sqrt();
    if norm > cap {
        let k = cap / norm;
        for (x, a) in w.iter_mut().zip(anchor) {
            *x = a + (*x - a) * k;
        }
    }
}

impl HjbHyper {
    pub fn validate(&self) -> Result<(), String> {
        if self.mu <= 0.0 {
            return Err("hjb.mu must be > 0".into());
        }
        if self.c_reg < 0.0 {
            return Err("hjb.c_reg must be >= 0".into());
        }
        Ok(())
    }
}

/// Approximated value w0^T sigma.
pub fn value(model: &HjbModel, eval: &BasisEval) -> f64 {
    basis::dot(&model.w0, &eval.sigma)
}

/// Optimal action -(1/2 c3) B^T grad(w0^T sigma): the velocity components of
/// the value gradient, scaled.
pub fn action(model: &HjbModel, eval: &BasisEval, c3: f64) -> Action {
    let g = basis::weighted_grad(&model.w0, eval);
    let k = -1.0 / (2.0 * c3);
    Action::new([k * g[2], k * g[3]])
}

/// HJB residual at the given state:
/// w1.sigma + (f - (1/4c3) B B^T grad_psi)^T grad_psi
///   + (1/2) diffusion_trace . w0 + phi_L + c2 phi_G.
pub fn residual(
    model: &HjbModel,
    eval: &BasisEval,
    s: &UavState,
    phi_g: f64,
    dyn_p: &DynamicsParams,
    cost_p: &CostParams,
) -> f64 {
    let grad_psi = basis::weighted_grad(&model.w0, eval);
    let f = drift(s, dyn_p);
    let quarter = 1.0 / (4.0 * cost_p.c3);
    // B B^T zeroes the position block
    let adv = [
        f[0],
        f[1],
        f[2] - quarter * grad_psi[2],
        f[3] - quarter * grad_psi[3],
    ];
    let advection: f64 = (0..4).map(|i| adv[i] * grad_psi[i]).sum();
    let diffusion = 0.5 * basis::dot(&model.w0, &eval.diffusion_trace);
    basis::dot(&model.w1, &eval.sigma) + advection + diffusion + phi_local(s, cost_p)
        + cost_p.c2 * phi_g
}

/// Analytic gradient of the residual with respect to w0:
/// grad_sigma . f - (1/2c3) grad_sigma B B^T grad_sigma^T w0 + diffusion/2.
pub fn w0_gradient(
    model: &HjbModel,
    eval: &BasisEval,
    s: &UavState,
    dyn_p: &DynamicsParams,
    cost_p: &CostParams,
) -> Vec<f64> {
    let grad_psi = basis::weighted_grad(&model.w0, eval);
    let f = drift(s, dyn_p);
    let half = 1.0 / (2.0 * cost_p.c3);
    eval.grad
        .iter()
        .zip(&eval.diffusion_trace)
        .map(|(g, dt)| {
            let mut v: f64 = (0..4).map(|i| g[i] * f[i]).sum();
            v -= half * (g[2] * grad_psi[2] + g[3] * grad_psi[3]);
            v + 0.5 * dt
        })
        .collect()
}

/// Stopping-regularizer gradient. With L_s = ||s||^2 / 2 the time derivative
/// along the controlled flow is s^T (f + B a); the regularizer is active iff
/// the agent is outside the destination region and moving away.
pub fn regularizer_gradient(
    model: &HjbModel,
    eval: &BasisEval,
    s: &UavState,
    hyper: &HjbHyper,
    dyn_p: &DynamicsParams,
    cost_p: &CostParams,
) -> Option<Vec<f64>> {
    if s.norm() < hyper.dest_norm {
        return None;
    }
    let a = action(model, eval, cost_p.c3);
    let f = drift(s, dyn_p);
    let flat = s.flat();
    let sdot = [f[0], f[1], f[2] + a.a[0], f[3] + a.a[1]];
    let l_dot: f64 = (0..4).map(|i| flat[i] * sdot[i]).sum();
    if l_dot <= 0.0 {
        return None;
    }
    let half = 1.0 / (2.0 * cost_p.c3);
    Some(
        eval.grad
            .iter()
            .map(|g| -half * (g[2] * flat[2] + g[3] * flat[3]))
            .collect(),
    )
}

/// One gradient-descent step at the agent's current state sample. `prior`
/// is the shared initialization: the weight caps are deviation balls about
/// it, so the learned model stays a bounded refinement. `ramp` in (0, 1]
/// scales the w0 (policy) step only; the w1 pathway always runs at full
/// rate because it must absorb the inhomogeneous residual from the first
/// step. Returns the residual used for the update.
#[allow(clippy::too_many_arguments)]
pub fn update(
    model: &mut HjbModel,
    eval: &BasisEval,
    s: &UavState,
    phi_g: f64,
    hyper: &HjbHyper,
    dyn_p: &DynamicsParams,
    cost_p: &CostParams,
    prior: Option<&HjbModel>,
    ramp: f64,
) -> f64 {
    let e_h = residual(model, eval, s, phi_g, dyn_p, cost_p);
    let g0 = w0_gradient(model, eval, s, dyn_p, cost_p);
    let reg = regularizer_gradient(model, eval, s, hyper, dyn_p, cost_p);
    // per-branch normalized steps (NLMS with unit offset): each weight block
    // is scaled by its own regressor energy so the large basis norm cannot
    // throttle the w0 (policy) pathway
    let g0_norm_sq: f64 = g0.iter().map(|g| g * g).sum();
    let sig_norm_sq: f64 = eval.sigma.iter().map(|s| s * s).sum();
    let step0 = ramp * hyper.mu / (1.0 + g0_norm_sq);
    let step1 = hyper.mu * hyper.w1_rate / (1.0 + sig_norm_sq);
    for (w, g) in model.w0.iter_mut().zip(&g0) {
        *w -= step0 * g * e_h;
    }
    if let Some(reg) = reg {
        for (w, r) in model.w0.iter_mut().zip(&reg) {
            *w -= step0 * hyper.c_reg * r;
        }
    }
    for (w, sig) in model.w1.iter_mut().zip(&eval.sigma) {
        *w -= step1 * sig * e_h;
    }
    match prior {
        Some(p) => {
            project_ball_about(&mut model.w0, &p.w0, hyper.w_cap);
            project_ball_about(&mut model.w1, &p.w1, hyper.w1_cap);
        }
        None => {
            project_ball(&mut model.w0, hyper.w_cap);
            project_ball(&mut model.w1, hyper.w1_cap);
        }
    }
    e_h
}
