//! Polynomial feature maps for the value-function and density models.
//!
//! Terms come from two bivariate groups, (x, vx) and (y, vy): all monomials
//! x^p vx^q with p + q <= degree, plus the same for (y, vy), with the
//! constant monomial kept exactly once. This is the expansion of
//! (1 + x + vx)^degree + (1 + y + vy)^degree with deduplicated terms.
//!
//! Evaluation returns the term values together with analytic first
//! derivatives in all four state coordinates and second derivatives in the
//! velocity coordinates, which are the only ones the residuals need (the
//! diffusion and control blocks act on velocity only).
//!
//! States can be normalized before monomial evaluation (`pos_scale`,
//! `vel_scale`); all returned derivatives are with respect to the *physical*
//! coordinates, so callers never see the scaling.

use crate::dynamics::UavState;
use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    pub degree: u32,
    /// Position normalization divisor, m.
    pub pos_scale: f64,
    /// Velocity normalization divisor, m/s.
    pub vel_scale: f64,
    /// Guard on |physical state component| before evaluation.
    pub envelope: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            degree: 6,
            pos_scale: 1.0,
            vel_scale: 1.0,
            envelope: 1e3,
        }
    }
}

impl BasisSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.degree == 0 {
            return Err("basis.degree must be >= 1".into());
        }
        if !(self.pos_scale > 0.0 && self.vel_scale > 0.0) {
            return Err("basis scales must be positive".into());
        }
        if !(self.envelope > 0.0) {
            return Err("basis.envelope must be positive".into());
        }
        Ok(())
    }
}

/// One monomial: group 0 is (x, vx), group 1 is (y, vy).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub group: u8,
    pub pos_pow: u32,
    pub vel_pow: u32,
}

impl Term {
    pub fn total_degree(&self) -> u32 {
        self.pos_pow + self.vel_pow
    }

    pub fn describe(&self) -> String {
        if self.pos_pow == 0 && self.vel_pow == 0 {
            return "1".to_string();
        }
        let (pn, vn) = if self.group == 0 { ("x", "vx") } else { ("y", "vy") };
        let mut parts = Vec::new();
        match self.pos_pow {
            0 => {}
            1 => parts.push(pn.to_string()),
            p => parts.push(format!("{pn}^{p}")),
        }
        match self.vel_pow {
            0 => {}
            1 => parts.push(vn.to_string()),
            q => parts.push(format!("{vn}^{q}")),
        }
        parts.join("*")
    }
}

/// Evaluated features at one state.
#[derive(Debug, Clone)]
pub struct BasisEval {
    /// Term values, length M.
    pub sigma: Vec<f64>,
    /// d sigma_k / d (x, y, vx, vy), physical coordinates.
    pub grad: Vec<[f64; 4]>,
    /// Velocity-block Hessian [[d2/dvx2, d2/dvxdvy], [d2/dvydvx, d2/dvy2]].
    pub hess_vv: Vec<[[f64; 2]; 2]>,
    /// sigma_wind^2 * (d2 sigma_k / dvx^2 + d2 sigma_k / dvy^2).
    pub diffusion_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Basis {
    spec: BasisSpec,
    terms: Vec<Term>,
}

impl Basis {
    pub fn new(spec: BasisSpec) -> Self {
        assert!(spec.degree >= 1, "basis degree must be >= 1");
        assert!(spec.pos_scale > 0.0 && spec.vel_scale > 0.0);
        let mut terms = Vec::new();
        // graded lexicographic within each group, group 0 first; the
        // constant lives in group 0 only
        for group in 0..2u8 {
            let start = if group == 0 { 0 } else { 1 };
            for total in start..=spec.degree {
                for pos_pow in (0..=total).rev() {
                    terms.push(Term {
                        group,
                        pos_pow,
                        vel_pow: total - pos_pow,
                    });
                }
            }
        }
        Self { spec, terms }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// FNV-1a over the spec and the ordered term list. Models built over
    /// different bases carry different fingerprints and refuse to average.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u64| {
            for byte in b.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.spec.degree as u64);
        eat(self.spec.pos_scale.to_bits());
        eat(self.spec.vel_scale.to_bits());
        for t in &self.terms {
            eat(((t.group as u64) << 32) | ((t.pos_pow as u64) << 16) | t.vel_pow as u64);
        }
        h
    }

    fn check_envelope(&self, s: &UavState) -> Result<()> {
        for c in s.flat() {
            if !c.is_finite() {
                return Err(SimError::NonFinite {
                    context: "basis input state".into(),
                    agent: usize::MAX,
                    step: usize::MAX,
                });
            }
            if c.abs() > self.spec.envelope {
                return Err(SimError::EnvelopeExceeded {
                    value: c,
                    envelope: self.spec.envelope,
                    agent: usize::MAX,
                    step: usize::MAX,
                });
            }
        }
        Ok(())
    }

    /// Term values only (used for precomputed node tables).
    pub fn sigma_into(&self, s: &UavState, out: &mut [f64]) -> Result<()> {
        self.check_envelope(s)?;
        let d = self.spec.degree as usize;
        let xs = pow_table(s.r[0] / self.spec.pos_scale, d);
        let ys = pow_table(s.r[1] / self.spec.pos_scale, d);
        let vxs = pow_table(s.v[0] / self.spec.vel_scale, d);
        let vys = pow_table(s.v[1] / self.spec.vel_scale, d);
        for (o, t) in out.iter_mut().zip(&self.terms) {
            let (p, v) = if t.group == 0 { (&xs, &vxs) } else { (&ys, &vys) };
            *o = p[t.pos_pow as usize] * v[t.vel_pow as usize];
        }
        Ok(())
    }

    /// Full evaluation with analytic derivatives.
    pub fn eval(&self, s: &UavState, sigma_wind: f64) -> Result<BasisEval> {
        self.check_envelope(s)?;
        let m = self.terms.len();
        let d = self.spec.degree as usize;
        let inv_ps = 1.0 / self.spec.pos_scale;
        let inv_vs = 1.0 / self.spec.vel_scale;
        let xs = pow_table(s.r[0] * inv_ps, d);
        let ys = pow_table(s.r[1] * inv_ps, d);
        let vxs = pow_table(s.v[0] * inv_vs, d);
        let vys = pow_table(s.v[1] * inv_vs, d);
        let sw2 = sigma_wind * sigma_wind;

        let mut sigma = vec![0.0; m];
        let mut grad = vec![[0.0; 4]; m];
        let mut hess_vv = vec![[[0.0; 2]; 2]; m];
        let mut diffusion_trace = vec![0.0; m];

        for (k, t) in self.terms.iter().enumerate() {
            let p = t.pos_pow as usize;
            let q = t.vel_pow as usize;
            let (pt, vt) = if t.group == 0 { (&xs, &vxs) } else { (&ys, &vys) };
            sigma[k] = pt[p] * vt[q];
            let dpos = if p > 0 {
                p as f64 * inv_ps * pt[p - 1] * vt[q]
            } else {
                0.0
            };
            let dvel = if q > 0 {
                q as f64 * inv_vs * pt[p] * vt[q - 1]
            } else {
                0.0
            };
            let d2vel = if q > 1 {
                (q * (q - 1)) as f64 * inv_vs * inv_vs * pt[p] * vt[q - 2]
            } else {
                0.0
            };
            if t.group == 0 {
                grad[k] = [dpos, 0.0, dvel, 0.0];
                hess_vv[k][0][0] = d2vel;
            } else {
                grad[k] = [0.0, dpos, 0.0, dvel];
                hess_vv[k][1][1] = d2vel;
            }
            diffusion_trace[k] = sw2 * (hess_vv[k][0][0] + hess_vv[k][1][1]);
        }
        Ok(BasisEval {
            sigma,
            grad,
            hess_vv,
            diffusion_trace,
        })
    }
}

fn pow_table(x: f64, degree: usize) -> Vec<f64> {
    let mut t = vec![1.0; degree + 1];
    for i in 1..=degree {
        t[i] = t[i - 1] * x;
    }
    t
}

/// Value-field helpers: contract an evaluated basis with a weight vector.
pub fn dot(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

/// 4-gradient of w^T sigma.
pub fn weighted_grad(weights: &[f64], eval: &BasisEval) -> [f64; 4] {
    let mut g = [0.0; 4];
    for (w, gr) in weights.iter().zip(&eval.grad) {
        for i in 0..4 {
            g[i] += w * gr[i];
        }
    }
    g
}

/// Velocity-block Laplacian d2/dvx2 + d2/dvy2 of w^T sigma.
pub fn weighted_vv_laplacian(weights: &[f64], eval: &BasisEval) -> f64 {
    weights
        .iter()
        .zip(&eval.hess_vv)
        .map(|(w, h)| w * (h[0][0] + h[1][1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn spec(degree: u32) -> BasisSpec {
        BasisSpec {
            degree,
            ..Default::default()
        }
    }

    #[test]
    fn term_counts() {
        assert_eq!(Basis::new(spec(1)).len(), 5);
        assert_eq!(Basis::new(spec(2)).len(), 11);
        // C(8,2) = 28 per bivariate degree-6 group, constant shared
        assert_eq!(Basis::new(spec(6)).len(), 55);
    }

    #[test]
    fn degree_one_terms_in_order() {
        let b = Basis::new(spec(1));
        let names: Vec<_> = b.terms().iter().map(|t| t.describe()).collect();
        assert_eq!(names, vec!["1", "x", "vx", "y", "vy"]);
    }

    #[test]
    fn constant_appears_once() {
        let b = Basis::new(spec(6));
        let constants = b
            .terms()
            .iter()
            .filter(|t| t.total_degree() == 0)
            .count();
        assert_eq!(constants, 1);
    }

    #[test]
    fn eval_at_origin() {
        let b = Basis::new(spec(3));
        let e = b.eval(&UavState::new([0.0, 0.0], [0.0, 0.0]), 0.1).unwrap();
        for (k, t) in b.terms().iter().enumerate() {
            if t.total_degree() == 0 {
                assert_eq!(e.sigma[k], 1.0);
                assert_eq!(e.grad[k], [0.0; 4]);
            } else if t.total_degree() == 1 {
                assert_eq!(e.sigma[k], 0.0);
                assert_eq!(e.grad[k].iter().filter(|g| **g != 0.0).count(), 1);
            } else {
                assert_eq!(e.sigma[k], 0.0);
                assert_eq!(e.grad[k], [0.0; 4]);
            }
        }
    }

    #[test]
    fn vx_squared_diffusion_trace() {
        let b = Basis::new(spec(2));
        let k = b
            .terms()
            .iter()
            .position(|t| t.group == 0 && t.pos_pow == 0 && t.vel_pow == 2)
            .unwrap();
        let e = b.eval(&UavState::new([1.0, 1.0], [1.0, 1.0]), 0.1).unwrap();
        assert_relative_eq!(e.diffusion_trace[k], 0.1 * 0.1 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn envelope_violation_errors() {
        let b = Basis::new(spec(2));
        let err = b.eval(&UavState::new([2e3, 0.0], [0.0, 0.0]), 0.0);
        assert!(matches!(err, Err(SimError::EnvelopeExceeded { .. })));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = Basis::new(BasisSpec {
            degree: 6,
            pos_scale: 50.0,
            vel_scale: 10.0,
            envelope: 1e3,
        });
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let h = 1e-5;
        for _ in 0..20 {
            let s = UavState::new(
                [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)],
                [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)],
            );
            let e = b.eval(&s, 0.1).unwrap();
            for axis in 0..4 {
                let mut sp = s;
                let mut sm = s;
                match axis {
                    0 => {
                        sp.r[0] += h;
                        sm.r[0] -= h;
                    }
                    1 => {
                        sp.r[1] += h;
                        sm.r[1] -= h;
                    }
                    2 => {
                        sp.v[0] += h;
                        sm.v[0] -= h;
                    }
                    _ => {
                        sp.v[1] += h;
                        sm.v[1] -= h;
                    }
                }
                let ep = b.eval(&sp, 0.1).unwrap();
                let em = b.eval(&sm, 0.1).unwrap();
                for k in 0..b.len() {
                    let fd = (ep.sigma[k] - em.sigma[k]) / (2.0 * h);
                    let scale = fd.abs().max(e.grad[k][axis].abs()).max(1e-9);
                    assert!(
                        (fd - e.grad[k][axis]).abs() / scale < 1e-5,
                        "grad mismatch term {k} axis {axis}: fd={fd} analytic={}",
                        e.grad[k][axis]
                    );
                }
            }
            // velocity Hessian diagonal via second differences
            for (axis, vi) in [(2usize, 0usize), (3, 1)] {
                let mut sp = s;
                let mut sm = s;
                if vi == 0 {
                    sp.v[0] += h;
                    sm.v[0] -= h;
                } else {
                    sp.v[1] += h;
                    sm.v[1] -= h;
                }
                let _ = axis;
                let ep = b.eval(&sp, 0.1).unwrap();
                let em = b.eval(&sm, 0.1).unwrap();
                for k in 0..b.len() {
                    let fd = (ep.sigma[k] - 2.0 * e.sigma[k] + em.sigma[k]) / (h * h);
                    let analytic = e.hess_vv[k][vi][vi];
                    // second differences lose ~eps*|sigma|/h^2 absolute
                    // accuracy, so floor the scale at the term magnitude
                    let scale = fd.abs().max(analytic.abs()).max(e.sigma[k].abs()).max(1.0);
                    assert!(
                        (fd - analytic).abs() / scale < 1e-3,
                        "hess mismatch term {k}: fd={fd} analytic={analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn euler_identity_per_term() {
        // For a monomial of total degree d: s . grad sigma = d * sigma,
        // which survives the internal normalization.
        let b = Basis::new(BasisSpec {
            degree: 4,
            pos_scale: 30.0,
            vel_scale: 5.0,
            envelope: 1e3,
        });
        let s = UavState::new([12.0, -7.0], [3.0, 2.0]);
        let e = b.eval(&s, 0.0).unwrap();
        let flat = s.flat();
        for (k, t) in b.terms().iter().enumerate() {
            let dot: f64 = (0..4).map(|i| flat[i] * e.grad[k][i]).sum();
            assert_relative_eq!(
                dot,
                t.total_degree() as f64 * e.sigma[k],
                epsilon = 1e-10,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let b = Basis::new(spec(6));
        let s = UavState::new([3.7, -2.9], [1.1, 0.4]);
        let e1 = b.eval(&s, 0.1).unwrap();
        let e2 = b.eval(&s, 0.1).unwrap();
        assert_eq!(e1.sigma, e2.sigma);
        assert_eq!(e1.grad, e2.grad);
    }

    #[test]
    fn diffusion_trace_linear_in_sigma_wind_sq() {
        let b = Basis::new(spec(4));
        let s = UavState::new([2.0, 1.0], [0.5, -0.5]);
        let e1 = b.eval(&s, 0.1).unwrap();
        let e2 = b.eval(&s, 0.2).unwrap();
        for k in 0..b.len() {
            assert_relative_eq!(e2.diffusion_trace[k], 4.0 * e1.diffusion_trace[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn fingerprint_distinguishes_specs() {
        let a = Basis::new(spec(6));
        let b = Basis::new(spec(5));
        let c = Basis::new(BasisSpec {
            pos_scale: 2.0,
            ..spec(6)
        });
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint(), Basis::new(spec(6)).fingerprint());
    }
}
