//! Learning-theoretic diagnostics: regressor correlation spectrum, the
//! stable step-size bound, steady-state MSD, and runtime boundedness
//! monitors on the residuals.

use crate::error::{Result, SimError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Spectral summary of the empirical regressor correlation matrix
/// R = mean g g^T.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub dim: usize,
    pub samples: usize,
    pub lambda_max: f64,
    pub trace: f64,
    /// Largest stable LMS step size, 2 / lambda_max.
    pub mu_bound: f64,
}

/// Empirical correlation matrix of regressor samples (rows).
pub fn correlation_matrix(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let first = samples.first().ok_or(SimError::Config(
        "correlation matrix needs at least one sample".into(),
    ))?;
    let d = first.len();
    let mut r = DMatrix::zeros(d, d);
    for g in samples {
        if g.len() != d {
            return Err(SimError::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        for a in 0..d {
            for b in a..d {
                r[(a, b)] += g[a] * g[b];
            }
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for a in 0..d {
        for b in a..d {
            let v = r[(a, b)] * inv;
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    Ok(r)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration (tolerance 1e-8 on the Rayleigh quotient, at most 1000 sweeps).
pub fn power_iteration_lambda_max(r: &DMatrix<f64>) -> f64 {
    let d = r.nrows();
    if d == 0 {
        return 0.0;
    }
    let mut v = nalgebra::DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = r * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-8 * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn spectral_report(samples: &[Vec<f64>]) -> Result<SpectralReport> {
    let r = correlation_matrix(samples)?;
    let lambda_max = power_iteration_lambda_max(&r);
    Ok(SpectralReport {
        dim: r.nrows(),
        samples: samples.len(),
        lambda_max,
        trace: r.trace(),
        mu_bound: if lambda_max > 0.0 {
            2.0 / lambda_max
        } else {
            f64::INFINITY
        },
    })
}

/// Steady-state mean-square deviation of the LMS recursion
/// w_{k+1} = w_k - mu g_k (g_k^T w_k - d_k) with white residual power
/// epsilon^2:
/// MSD = mu^2 epsilon^2 vec(R)^T (I - F)^{-1} vec(I),
/// F = (I - mu R)^T (x) (I - mu R)^T.
///
/// Errors with `StepSizeDiverges` when the recursion is unstable. The
/// Kronecker solve is dense, so the dimension is capped.
pub fn msd_closed_form(r: &DMatrix<f64>, mu: f64, epsilon: f64) -> Result<f64> {
    let d = r.nrows();
    if d > 32 {
        return Err(SimError::Config(format!(
            "msd closed form capped at dim 32, got {d}"
        )));
    }
    let lambda_max = power_iteration_lambda_max(r);
    let bound = 2.0 / lambda_max;
    if mu >= bound {
        return Err(SimError::StepSizeDiverges { mu, bound });
    }
    let a = DMatrix::identity(d, d) - r.scale(mu); // I - mu R, symmetric
    let f = a.transpose().kronecker(&a.transpose());
    let sys = DMatrix::identity(d * d, d * d) - f;
    // vec(I)
    let mut vec_i = nalgebra::DVector::zeros(d * d);
    for k in 0..d {
        vec_i[k * d + k] = 1.0;
    }
    let x = sys
        .lu()
        .solve(&vec_i)
        .ok_or(SimError::StepSizeDiverges { mu, bound })?;
    // vec(R)^T x
    let mut acc = 0.0;
    for col in 0..d {
        for row in 0..d {
            acc += r[(row, col)] * x[col * d + row];
        }
    }
    Ok(mu * mu * epsilon * epsilon * acc)
}

/// Runtime residual envelopes; a violation marks the run as unbounded.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundednessLimits {
    pub hjb_residual: f64,
    pub fpk_residual: f64,
}

impl Default for BoundednessLimits {
    fn default() -> Self {
        Self {
            hjb_residual: 1.5,
            fpk_residual: 0.02,
        }
    }
}

/// Tracks running residual extrema against the limits.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BoundednessMonitor {
    pub max_abs_hjb: f64,
    pub max_abs_fpk: f64,
}

impl BoundednessMonitor {
    pub fn observe_hjb(&mut self, e: f64) {
        self.max_abs_hjb = self.max_abs_hjb.max(e.abs());
    }

    pub fn observe_fpk(&mut self, e: f64) {
        self.max_abs_fpk = self.max_abs_fpk.max(e.abs());
    }

    pub fn within(&self, limits: &BoundednessLimits) -> bool {
        self.max_abs_hjb <= limits.hjb_residual && self.max_abs_fpk <= limits.fpk_residual
    }

    pub fn merge(&mut self, other: &BoundednessMonitor) {
        self.max_abs_hjb = self.max_abs_hjb.max(other.max_abs_hjb);
        self.max_abs_fpk = self.max_abs_fpk.max(other.max_abs_fpk);
    }
}
