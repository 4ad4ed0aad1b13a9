//! Relative error summaries of replicated Lennard-Jones estimates.
//!
//! Errors are taken on `(log β, σ, ε)` and weighted by the squared true
//! value of each component. Variances use divisor `M`, so
//! `RWMSE² = RWSB² + RWV²` holds exactly in exact arithmetic.

use crate::error::{Error, Result};
use crate::model::LjParams;

/// Component names in report order.
pub const COMPONENTS: [&str; 3] = ["logbeta", "sigma", "eps"];

/// Summary of one set of replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rwmse: f64,
    pub rwsb: f64,
    pub rwv: f64,
    /// Mean error per component (`log β`, `σ`, `ε`).
    pub bias: [f64; 3],
    /// Population standard deviation per component.
    pub sd: [f64; 3],
    pub count: usize,
}

fn components(p: &LjParams) -> [f64; 3] {
    [libm::log(p.beta), p.sigma, p.epsilon]
}

/// RWMSE, RWSB and RWV of `estimates` against `truth`.
pub fn metrics(estimates: &[LjParams], truth: &LjParams) -> Result<Metrics> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::TooFewValues { needed: 2, got: m });
    }
    let t = components(truth);
    if t.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter("true log β, σ and ε must be non-zero"));
    }
    let inv_m = 1.0 / m as f64;
    let mut mean = [0.0; 3];
    let mut mse = [0.0; 3];
    for e in estimates {
        let c = components(e);
        for k in 0..3 {
            let d = c[k] - t[k];
            mean[k] += c[k];
            mse[k] += d * d;
        }
    }
    let mut var = [0.0; 3];
    for k in 0..3 {
        mean[k] *= inv_m;
        mse[k] *= inv_m;
    }
    for e in estimates {
        let c = components(e);
        for k in 0..3 {
            let d = c[k] - mean[k];
            var[k] += d * d;
        }
    }
    let mut bias = [0.0; 3];
    let mut sd = [0.0; 3];
    let (mut wmse, mut wsb, mut wv) = (0.0, 0.0, 0.0);
    for k in 0..3 {
        var[k] *= inv_m;
        bias[k] = mean[k] - t[k];
        sd[k] = libm::sqrt(var[k]);
        let w = 1.0 / (t[k] * t[k]);
        wmse += w * mse[k];
        wsb += w * bias[k] * bias[k];
        wv += w * var[k];
    }
    Ok(Metrics {
        rwmse: libm::sqrt(wmse),
        rwsb: libm::sqrt(wsb),
        rwv: libm::sqrt(wv),
        bias,
        sd,
        count: m,
    })
}

/// The `α` with the smallest RWMSE; ties go to the smaller `α`. Non-finite
/// RWMSE values are skipped.
pub fn alpha_argmin(table: &[(f64, f64)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(alpha, value) in table {
        if !value.is_finite() {
            continue;
        }
        best = match best {
            None => Some((alpha, value)),
            Some((ba, bv)) if value < bv || (value == bv && alpha < ba) => Some((alpha, value)),
            keep => keep,
        };
    }
    best.map(|(a, _)| a)
}
