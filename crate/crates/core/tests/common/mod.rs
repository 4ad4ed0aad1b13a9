#![allow(dead_code)]

use gibbspl_core::simulate::mh_sample;
use gibbspl_core::{Configuration, LjParams, MhConfig, ModelSpec, ThetaNatural, Window};

pub const MODERATE: LjParams = LjParams { beta: 100.0, sigma: 0.1, epsilon: 0.5 };

pub fn lj_model() -> ModelSpec {
    ModelSpec::lennard_jones(0.01).unwrap()
}

/// Short LJ chain: enough for a realistic-looking pattern, not for equilibrium.
pub fn lj_pattern(truth: &LjParams, half: f64, margin: f64, steps: u64, seed: u64) -> Configuration {
    let target = Window::centered_square(half).unwrap();
    let cfg = MhConfig { n_steps: steps, margin, seed, ..MhConfig::recommended(truth.beta, truth.sigma, &target) };
    mh_sample(&lj_model(), &truth.to_natural(), &target, &cfg).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-component typical magnitude of the data statistics, used to put
/// finite-difference steps on a sensible scale.
pub fn stat_scale(terms: &gibbspl_core::ContrastTerms) -> Vec<f64> {
    let p = terms.p();
    let mut d = vec![0.0; p];
    for i in 0..terms.n_data() {
        for m in 0..p {
            d[m] += terms.data_stat(i)[m].abs();
        }
    }
    d.iter().map(|v| if *v > 0.0 { v / terms.n_data() as f64 } else { 1.0 }).collect()
}

pub fn shifted(theta: &ThetaNatural, m: usize, delta: f64) -> ThetaNatural {
    let mut v = theta.as_slice().to_vec();
    v[m] += delta;
    ThetaNatural::new(v)
}
