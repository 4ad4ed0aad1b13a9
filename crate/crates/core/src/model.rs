//! Exponential-family pair potentials.
//!
//! A model is a list of basis functions `g_2, ..., g_p` of the interpoint
//! vector; with natural parameter `θ` the conditional intensity is
//! `λ_θ(u, x) = exp(-θᵀ t(u, x))` where `t_1 = 1` and
//! `t_m(u, x) = Σ_{v ∈ x} g_m(v - u)`. Hence `θ_1 = -log β` and the pair
//! potential is `Φ = Σ_{m ≥ 2} θ_m g_m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Point};

/// Radial basis function of the pair potential, evaluated from `|v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisFunction {
    /// `|v|^-γ`
    PowerLaw { gamma: f64 },
    /// `exp(-|v|) |v|^-γ`
    ExpPower { gamma: f64 },
}

impl BasisFunction {
    pub fn exponent(&self) -> f64 {
        match *self {
            BasisFunction::PowerLaw { gamma } | BasisFunction::ExpPower { gamma } => gamma,
        }
    }

    /// Value at squared distance `r2`; `+inf` at `r2 == 0`.
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        match *self {
            BasisFunction::PowerLaw { gamma } => inv_pow_r2(r2, gamma),
            BasisFunction::ExpPower { gamma } => {
                libm::exp(-libm::sqrt(r2)) * inv_pow_r2(r2, gamma)
            }
        }
    }

    pub fn eval(&self, v: &Point) -> f64 {
        self.eval_r2(v.x * v.x + v.y * v.y)
    }
}

/// `r^-γ` from `r² `, with an exact integer-power path for even `γ`.
#[inline]
fn inv_pow_r2(r2: f64, gamma: f64) -> f64 {
    let half = gamma * 0.5;
    if half == libm::trunc(half) && half <= 64.0 {
        powi(1.0 / r2, half as u32)
    } else {
        libm::pow(r2, -half)
    }
}

#[inline]
fn powi(mut base: f64, mut exp: u32) -> f64 {
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// Basis of an exponential-family pairwise interaction model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    basis: Vec<BasisFunction>,
    r0: f64,
}

impl ModelSpec {
    /// `basis[0]` must carry the largest exponent (it controls the behaviour
    /// at the origin); every exponent must exceed the dimension, 2.
    pub fn new(basis: Vec<BasisFunction>, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::InvalidModel("tail threshold r0 must be positive"));
        }
        if basis.iter().any(|b| !(b.exponent() > 2.0)) {
            return Err(Error::InvalidModel("basis exponents must exceed 2"));
        }
        if let Some(first) = basis.first() {
            if basis.iter().any(|b| b.exponent() > first.exponent()) {
                return Err(Error::InvalidModel("first basis function must have the largest exponent"));
            }
        }
        Ok(ModelSpec { basis, r0 })
    }

    /// Activity-only model, `Φ ≡ 0`.
    pub fn poisson() -> Self {
        ModelSpec { basis: Vec::new(), r0: 1.0 }
    }

    /// Basis `(r^-12, r^-6)` of the Lennard-Jones potential.
    pub fn lennard_jones(r0: f64) -> Result<Self> {
        ModelSpec::new(
            vec![BasisFunction::PowerLaw { gamma: 12.0 }, BasisFunction::PowerLaw { gamma: 6.0 }],
            r0,
        )
    }

    pub fn is_lennard_jones(&self) -> bool {
        self.basis
            == [BasisFunction::PowerLaw { gamma: 12.0 }, BasisFunction::PowerLaw { gamma: 6.0 }]
    }

    pub fn is_poisson(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    /// Parameter count, `1 + basis.len()`.
    pub fn p(&self) -> usize {
        self.basis.len() + 1
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn with_r0(mut self, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidModel("tail threshold r0 must be positive"));
        }
        self.r0 = r0;
        Ok(self)
    }

    /// Short-range exponent γ₁.
    pub fn gamma1(&self) -> Option<f64> {
        self.basis.first().map(|b| b.exponent())
    }

    /// Long-range exponent γ₂, the smallest in the basis.
    pub fn gamma2(&self) -> Option<f64> {
        self.basis.iter().map(|b| b.exponent()).reduce(f64::min)
    }

    /// Whether γ₂ > 2d (d = 2), the condition under which the estimator is
    /// asymptotically normal.
    pub fn clt_valid(&self) -> bool {
        self.gamma2().is_none_or(|g| g > 4.0)
    }

    pub fn all_power_law(&self) -> bool {
        self.basis.iter().all(|b| matches!(b, BasisFunction::PowerLaw { .. }))
    }

    pub(crate) fn check_theta(&self, theta: &ThetaNatural) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), got: theta.len() });
        }
        if theta.as_slice().iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("theta must be finite"));
        }
        Ok(())
    }

    /// Adds `g_m(v - u)` for `m = 2..p` into `acc[1..]`, given `|v - u|²`.
    #[inline]
    pub(crate) fn accumulate_r2(&self, r2: f64, acc: &mut [f64]) {
        for (slot, b) in acc[1..].iter_mut().zip(&self.basis) {
            *slot += b.eval_r2(r2);
        }
    }
}

/// Natural parameter `θ`, with `θ_1 = -log β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaNatural(Vec<f64>);

impl ThetaNatural {
    pub fn new(theta: Vec<f64>) -> Self {
        ThetaNatural(theta)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn beta(&self) -> f64 {
        libm::exp(-self.0[0])
    }

    /// Energy `θᵀt`. Zero coefficients never multiply an infinite statistic,
    /// and a positive hard-core coefficient facing an infinite `t_2` yields `+inf`.
    #[inline]
    pub fn energy(&self, t: &[f64]) -> f64 {
        dot_energy(&self.0, t)
    }
}

#[inline]
pub(crate) fn dot_energy(theta: &[f64], t: &[f64]) -> f64 {
    let mut e = 0.0;
    for (th, tm) in theta.iter().zip(t) {
        if *th != 0.0 {
            e += th * tm;
        }
    }
    if e.is_nan() && theta.len() > 1 && theta[1] > 0.0 && t[1] == f64::INFINITY {
        f64::INFINITY
    } else {
        e
    }
}

/// Lennard-Jones parameters: activity β, length scale σ, well depth ε.
///
/// The potential is `Φ(r) = 4ε{(σ/r)^12 - (σ/r)^6}`, repulsive below σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjParams {
    pub beta: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl LjParams {
    pub fn new(beta: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        if !(beta > 0.0 && sigma > 0.0 && epsilon >= 0.0)
            || !(beta.is_finite() && sigma.is_finite() && epsilon.is_finite())
        {
            return Err(Error::InvalidParameter("need beta > 0, sigma > 0, epsilon >= 0"));
        }
        Ok(LjParams { beta, sigma, epsilon })
    }

    /// `θ = (-log β, 4εσ¹², -4εσ⁶)`.
    pub fn to_natural(&self) -> ThetaNatural {
        let s6 = powi(self.sigma, 6);
        ThetaNatural(vec![
            -libm::log(self.beta),
            4.0 * self.epsilon * s6 * s6,
            -4.0 * self.epsilon * s6,
        ])
    }

    /// Inverse of [`LjParams::to_natural`]: `σ = (-θ₂/θ₃)^(1/6)`,
    /// `ε = θ₃²/(4θ₂)`. Requires `θ₂ > 0 > θ₃`.
    pub fn from_natural(theta: &ThetaNatural) -> Result<Self> {
        let t = theta.as_slice();
        if t.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: t.len() });
        }
        if !(t[1] > 0.0 && t[2] < 0.0) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("Lennard-Jones needs theta_2 > 0 > theta_3"));
        }
        Ok(LjParams {
            beta: libm::exp(-t[0]),
            sigma: libm::pow(-t[1] / t[2], 1.0 / 6.0),
            epsilon: t[2] * t[2] / (4.0 * t[1]),
        })
    }

    /// Position of the potential minimum, `2^(1/6) σ`.
    pub fn well_radius(&self) -> f64 {
        libm::pow(2.0, 1.0 / 6.0) * self.sigma
    }
}

/// `Φ_θ(v) = Σ_{m ≥ 2} θ_m g_m(v)`.
pub fn pair_potential(model: &ModelSpec, theta: &ThetaNatural, v: &Point) -> Result<f64> {
    model.check_theta(theta)?;
    let r2 = v.x * v.x + v.y * v.y;
    if r2 == 0.0 {
        return Err(Error::Singularity);
    }
    let mut t = vec![0.0; model.p()];
    model.accumulate_r2(r2, &mut t);
    Ok(dot_energy(&theta.as_slice()[1..], &t[1..]))
}

/// Sufficient statistic `t(u, x_{u,R})`, with `x_{u,R}` the points of `cfg`
/// within distance `range` of `u` (`range` may be infinite).
///
/// With `exclude_u` the point of `cfg` located at `u` is left out, as for the
/// data-point terms `t(u, x ∖ u)`; that point must exist.
pub fn sufficient_stats(
    model: &ModelSpec,
    cfg: &Configuration,
    u: &Point,
    range: f64,
    exclude_u: bool,
) -> Result<Vec<f64>> {
    let mut t = vec![0.0; model.p()];
    t[0] = 1.0;
    let r2max = range * range;
    let mut found = false;
    for v in cfg.points() {
        let r2 = v.dist2(u);
        if r2 == 0.0 && v == u {
            if exclude_u {
                found = true;
                continue;
            }
            return Err(Error::Singularity);
        }
        if r2 <= r2max {
            model.accumulate_r2(r2, &mut t);
        }
    }
    if exclude_u && !found {
        return Err(Error::NotInConfiguration { x: u.x, y: u.y });
    }
    Ok(t)
}

/// Value of the conditional intensity together with its energy `θᵀt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    pub energy: f64,
    pub lambda: f64,
}

impl Intensity {
    pub fn from_energy(energy: f64) -> Self {
        Intensity { energy, lambda: libm::exp(-energy) }
    }

    /// `log λ = -θᵀt`.
    pub fn log_lambda(&self) -> f64 {
        -self.energy
    }

    /// True when the energy overflowed and λ was clamped to zero.
    pub fn vanished(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Papangelou conditional intensity `λ_θ(u, x_{u,R}) = exp(-θᵀ t(u, x_{u,R}))`.
///
/// `u` must not be a point of `cfg` ([`Error::Singularity`] otherwise).
pub fn papangelou(
    model: &ModelSpec,
    theta: &ThetaNatural,
    cfg: &Configuration,
    u: &Point,
    range: f64,
) -> Result<Intensity> {
    model.check_theta(theta)?;
    let t = sufficient_stats(model, cfg, u, range, false)?;
    Ok(Intensity::from_energy(theta.energy(&t)))
}

/// Tail sums `G = Σ |v-u|^-γ₂ 1(|v-u| ≥ r₀)` and
/// `H = Σ |v-u|^-(2+ε) 1(|v-u| ≥ r₀)`.
pub fn tail_stats(cfg: &Configuration, u: &Point, r0: f64, gamma2: f64, eps_tail: f64) -> (f64, f64) {
    let r0sq = r0 * r0;
    let (mut g, mut h) = (0.0, 0.0);
    for v in cfg.points() {
        let r2 = v.dist2(u);
        if r2 >= r0sq && r2 > 0.0 {
            g += libm::pow(r2, -gamma2 / 2.0);
            h += libm::pow(r2, -(2.0 + eps_tail) / 2.0);
        }
    }
    (g, h)
}
