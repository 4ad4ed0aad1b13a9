//! Truncated pseudolikelihood (PL) and logistic-regression (LR) contrasts.
//!
//! Both contrasts are evaluated on the eroded window `W ⊖ α` with the
//! conditional intensity truncated to the neighbours within `R`:
//!
//! ```text
//! LPL(θ) = Σ_{u ∈ X ∩ (W⊖α)} log λ_θ(u, X_{u,R} ∖ u) − ∫_{W⊖α} λ_θ(u, X_{u,R}) du
//! LRL(θ) = Σ log[λ/(λ+ρ)](u, X_{u,R} ∖ u)            − ∫_{W⊖α} ρ log[(λ+ρ)/ρ](u, X_{u,R}) du
//! ```
//!
//! The integral is a midpoint rule on a `grid × grid` partition. Because the
//! model is an exponential family the statistics `t(u, ·)` do not depend on
//! `θ`; [`ContrastTerms`] computes them once and every later evaluation of
//! value, score and Hessian is a pass over cached vectors. Score and Hessian
//! are the exact derivatives of the discretized contrast.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Point, RangeIndex, Window};
use crate::linalg::{self, Matrix};
use crate::model::{dot_energy, BasisFunction, LjParams, ModelSpec, ThetaNatural};
use crate::sum::{block_reduce, map_each};

/// Which contrast to maximize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contrast {
    Pseudolikelihood,
    Logistic { rho: f64 },
}

/// Distance rescaling applied before fitting; the estimate is mapped back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rescale {
    None,
    /// Divide all distances by this length.
    By(f64),
    /// Use the 1% quantile of nearest-neighbour distances as the unit.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Erosion radius α of the observation window.
    pub alpha: f64,
    /// Interaction truncation R; `f64::INFINITY` uses every observed point.
    pub range: f64,
    /// Quadrature cells per axis.
    pub grid: usize,
    pub contrast: Contrast,
    pub rescale: Rescale,
    pub tol_grad: f64,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 0.0,
            range: f64::INFINITY,
            grid: 100,
            contrast: Contrast::Pseudolikelihood,
            rescale: Rescale::None,
            tol_grad: 1e-8,
            max_iter: 100,
        }
    }
}

impl FitConfig {
    pub fn with_alpha_range(alpha: f64, range: f64) -> Self {
        FitConfig { alpha, range, ..FitConfig::default() }
    }

    /// Checks the settings against `window`; returns the eroded window.
    pub fn validate(&self, window: &Window) -> Result<Window> {
        if self.grid < 2 {
            return Err(Error::InvalidParameter("quadrature grid must be at least 2"));
        }
        if !(self.range > 0.0) {
            return Err(Error::InvalidParameter("truncation range must be positive"));
        }
        if let Contrast::Logistic { rho } = self.contrast {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::InvalidParameter("rho must be positive and finite"));
            }
        }
        if !(self.tol_grad > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tolerance and iteration cap must be positive"));
        }
        window.erode(self.alpha)
    }
}

/// Logistic contrast with the default `ρ = n(x) / |W|`.
pub fn logistic_auto(cfg: &Configuration) -> Contrast {
    let rho = cfg.len() as f64 / cfg.window().area();
    Contrast::Logistic { rho: if rho > 0.0 { rho } else { 1.0 / cfg.window().area() } }
}

/// Midpoint quadrature on a regular partition of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    window: Window,
    nx: usize,
    ny: usize,
    centers: Vec<Point>,
    weight: f64,
}

impl QuadratureGrid {
    pub fn midpoint(window: &Window, grid: usize) -> Result<Self> {
        if grid < 1 {
            return Err(Error::InvalidParameter("quadrature grid must be at least 1"));
        }
        let (lo, dx, dy) = (window.lo(), window.side(0) / grid as f64, window.side(1) / grid as f64);
        let mut centers = Vec::with_capacity(grid * grid);
        for j in 0..grid {
            for i in 0..grid {
                centers.push(Point::new(
                    lo[0] + (i as f64 + 0.5) * dx,
                    lo[1] + (j as f64 + 0.5) * dy,
                ));
            }
        }
        Ok(QuadratureGrid { window: *window, nx: grid, ny: grid, centers, weight: dx * dy })
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    /// Area of one cell.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn cells_per_axis(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Cell side lengths.
    pub fn cell_size(&self) -> (f64, f64) {
        (self.window.side(0) / self.nx as f64, self.window.side(1) / self.ny as f64)
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.centers.len() as f64
    }
}

/// Contrast value with its score and negative Hessian at one `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Gradient of the contrast.
    pub score: Vec<f64>,
    /// Negative Hessian of the contrast (positive semi-definite).
    pub hessian: Matrix,
}

/// Cached sufficient statistics at the data points of `W ⊖ α` and at the
/// quadrature nodes.
#[derive(Debug, Clone)]
pub struct ContrastTerms {
    p: usize,
    eroded: Window,
    grid: QuadratureGrid,
    data_points: Vec<Point>,
    /// Row-major `n_data × p`.
    data_stats: Vec<f64>,
    /// Row-major `n_nodes × p`.
    node_stats: Vec<f64>,
}

/// Index of a node or data point in the cached term lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Node(usize),
    Data(usize),
}

impl ContrastTerms {
    pub fn new(cfg: &Configuration, model: &ModelSpec, fc: &FitConfig) -> Result<Self> {
        let eroded = fc.validate(cfg.window())?;
        let grid = QuadratureGrid::midpoint(&eroded, fc.grid)?;
        let p = model.p();
        let index = RangeIndex::for_range(cfg, fc.range);

        let stats_at = |u: &Point, skip: Option<usize>| -> Result<Vec<f64>> {
            let mut t = vec![0.0; p];
            t[0] = 1.0;
            if p == 1 {
                return Ok(t);
            }
            let mut singular = false;
            index.for_each_within(u, fc.range, |i, _, d2| {
                if Some(i) == skip {
                    return;
                }
                if d2 == 0.0 {
                    singular = true;
                }
                model.accumulate_r2(d2, &mut t);
            });
            if singular {
                Err(Error::Singularity)
            } else {
                Ok(t)
            }
        };

        let node_rows = map_each(grid.centers(), |u| stats_at(u, None));
        let mut node_stats = Vec::with_capacity(node_rows.len() * p);
        for row in node_rows {
            node_stats.extend(row?);
        }

        let inside: Vec<(usize, Point)> = cfg
            .points()
            .iter()
            .enumerate()
            .filter(|(_, u)| eroded.contains(u))
            .map(|(i, u)| (i, *u))
            .collect();
        let data_rows = map_each(&inside, |(i, u)| stats_at(u, Some(*i)));
        let mut data_stats = Vec::with_capacity(inside.len() * p);
        for row in data_rows {
            data_stats.extend(row?);
        }
        Ok(ContrastTerms {
            p,
            eroded,
            grid,
            data_points: inside.into_iter().map(|(_, u)| u).collect(),
            data_stats,
            node_stats,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eroded_window(&self) -> &Window {
        &self.eroded
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// Data points inside the eroded window.
    pub fn data_points(&self) -> &[Point] {
        &self.data_points
    }

    pub fn n_data(&self) -> usize {
        self.data_points.len()
    }

    pub fn data_stat(&self, i: usize) -> &[f64] {
        &self.data_stats[i * self.p..(i + 1) * self.p]
    }

    pub fn node_stat(&self, j: usize) -> &[f64] {
        &self.node_stats[j * self.p..(j + 1) * self.p]
    }

    fn check(&self, theta: &ThetaNatural) -> Result<()> {
        if theta.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, got: theta.len() });
        }
        Ok(())
    }

    /// Contrast value only. `-inf` when a data point has zero intensity.
    pub fn value(&self, theta: &ThetaNatural, contrast: Contrast) -> Result<f64> {
        self.check(theta)?;
        Ok(self.accumulate(theta.as_slice(), contrast, false, |_| true).value)
    }

    /// Value, score and negative Hessian.
    pub fn evaluate(&self, theta: &ThetaNatural, contrast: Contrast) -> Result<Evaluation> {
        self.check(theta)?;
        Ok(self.accumulate(theta.as_slice(), contrast, true, |_| true))
    }

    /// Score restricted to the terms accepted by `keep`.
    pub fn partial_score<F>(&self, theta: &ThetaNatural, contrast: Contrast, keep: F) -> Result<Vec<f64>>
    where
        F: Fn(Term) -> bool + Sync + Send,
    {
        self.check(theta)?;
        Ok(self.accumulate(theta.as_slice(), contrast, true, keep).score)
    }

    /// Score contributions summed per group: `group(term)` maps every node
    /// and data point to a group index below `n_groups`.
    pub fn grouped_scores<G>(
        &self,
        theta: &ThetaNatural,
        contrast: Contrast,
        n_groups: usize,
        group: G,
    ) -> Result<Vec<Vec<f64>>>
    where
        G: Fn(Term) -> usize,
    {
        self.check(theta)?;
        let p = self.p;
        let w = self.grid.weight();
        let th = theta.as_slice();
        let mut out = vec![vec![0.0; p]; n_groups];
        for j in 0..self.grid.centers().len() {
            let t = self.node_stat(j);
            let (_, first, _) = node_terms(dot_energy(th, t), contrast);
            if first != 0.0 {
                let acc = &mut out[group(Term::Node(j))];
                for m in 0..p {
                    acc[m] += w * first * t[m];
                }
            }
        }
        for i in 0..self.n_data() {
            let t = self.data_stat(i);
            let (_, first, _) = data_terms(dot_energy(th, t), contrast);
            let acc = &mut out[group(Term::Data(i))];
            for m in 0..p {
                acc[m] -= first * t[m];
            }
        }
        Ok(out)
    }

    fn accumulate<F>(&self, theta: &[f64], contrast: Contrast, derivs: bool, keep: F) -> Evaluation
    where
        F: Fn(Term) -> bool + Sync + Send,
    {
        let p = self.p;
        let w = self.grid.weight();
        let acc_len = 1 + p + p * p;
        let combine = |mut a: Vec<f64>, b: Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        };

        let nodes: Vec<usize> = (0..self.grid.centers().len()).collect();
        let node_acc = block_reduce(
            &nodes,
            |block| {
                let mut acc = vec![0.0; acc_len];
                for &j in block {
                    if !keep(Term::Node(j)) {
                        continue;
                    }
                    let t = self.node_stat(j);
                    let e = dot_energy(theta, t);
                    let (val, first, second) = node_terms(e, contrast);
                    acc[0] -= w * val;
                    if derivs && first != 0.0 {
                        add_outer(&mut acc[1..], t, w * first, w * second, p);
                    }
                }
                acc
            },
            combine,
        )
        .unwrap_or_else(|| vec![0.0; acc_len]);

        let data: Vec<usize> = (0..self.n_data()).collect();
        let data_acc = block_reduce(
            &data,
            |block| {
                let mut acc = vec![0.0; acc_len];
                for &i in block {
                    if !keep(Term::Data(i)) {
                        continue;
                    }
                    let t = self.data_stat(i);
                    let e = dot_energy(theta, t);
                    let (val, first, second) = data_terms(e, contrast);
                    acc[0] += val;
                    if derivs {
                        add_outer(&mut acc[1..], t, -first, second, p);
                    }
                }
                acc
            },
            combine,
        )
        .unwrap_or_else(|| vec![0.0; acc_len]);

        let total = combine(node_acc, data_acc);
        let score = total[1..1 + p].to_vec();
        let hessian = linalg::symmetrize(&Matrix::from_row_slice(p, p, &total[1 + p..]));
        Evaluation { value: total[0], score, hessian }
    }
}

/// `acc[..p] += a t`, `acc[p..] += b t tᵀ`.
#[inline]
fn add_outer(acc: &mut [f64], t: &[f64], a: f64, b: f64, p: usize) {
    for m in 0..p {
        acc[m] += a * t[m];
    }
    if b != 0.0 {
        for m in 0..p {
            let bm = b * t[m];
            for k in 0..p {
                acc[p + m * p + k] += bm * t[k];
            }
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z == f64::INFINITY {
        return f64::INFINITY;
    }
    z.max(0.0) + libm::log1p(libm::exp(-libm::fabs(z)))
}

/// Per-node `(integrand, score weight, Hessian weight)` at energy `e`.
///
/// PL: `λ`, `λ`, `λ`. LR: `ρ log(1 + λ/ρ)`, `ρq`, `ρq(1-q)` with
/// `q = λ/(λ+ρ)`.
#[inline]
fn node_terms(e: f64, contrast: Contrast) -> (f64, f64, f64) {
    match contrast {
        Contrast::Pseudolikelihood => {
            let lambda = libm::exp(-e);
            (lambda, lambda, lambda)
        }
        Contrast::Logistic { rho } => {
            let z = -e - libm::log(rho);
            let q = logistic(z);
            (rho * softplus(z), rho * q, rho * q * (1.0 - q))
        }
    }
}

/// Per-data-point `(contrast term, statistic weight, Hessian weight)`.
///
/// The score contribution is `-weight · t`. PL: `-e`, `1`, `0`.
/// LR: `log q`, `1 - q`, `q(1-q)`.
#[inline]
fn data_terms(e: f64, contrast: Contrast) -> (f64, f64, f64) {
    match contrast {
        Contrast::Pseudolikelihood => (-e, 1.0, 0.0),
        Contrast::Logistic { rho } => {
            let z = -e - libm::log(rho);
            let q = logistic(z);
            (-softplus(-z), 1.0 - q, q * (1.0 - q))
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let ez = libm::exp(z);
        ez / (1.0 + ez)
    }
}

/// Truncated log-pseudolikelihood at `θ`.
pub fn lpl(cfg: &Configuration, model: &ModelSpec, theta: &ThetaNatural, fc: &FitConfig) -> Result<f64> {
    contrast_value(cfg, model, theta, fc, Contrast::Pseudolikelihood)
}

/// Truncated logistic-regression contrast at `θ`; `ρ` comes from
/// `fc.contrast`.
pub fn lrl(cfg: &Configuration, model: &ModelSpec, theta: &ThetaNatural, fc: &FitConfig) -> Result<f64> {
    match fc.contrast {
        Contrast::Logistic { .. } => contrast_value(cfg, model, theta, fc, fc.contrast),
        Contrast::Pseudolikelihood => Err(Error::InvalidParameter("lrl needs a logistic contrast with rho")),
    }
}

fn contrast_value(
    cfg: &Configuration,
    model: &ModelSpec,
    theta: &ThetaNatural,
    fc: &FitConfig,
    contrast: Contrast,
) -> Result<f64> {
    model.check_theta(theta)?;
    let v = ContrastTerms::new(cfg, model, fc)?.value(theta, contrast)?;
    if v == f64::NEG_INFINITY {
        return Err(Error::NonFiniteEnergy);
    }
    Ok(v)
}

/// Score (gradient) of the contrast selected in `fc`. For PL this is
/// `∫ t λ_θ du − Σ t(u, X_{u,R} ∖ u)`.
pub fn score(cfg: &Configuration, model: &ModelSpec, theta: &ThetaNatural, fc: &FitConfig) -> Result<Vec<f64>> {
    model.check_theta(theta)?;
    Ok(ContrastTerms::new(cfg, model, fc)?.evaluate(theta, fc.contrast)?.score)
}

/// Negative Hessian of the contrast selected in `fc`. For PL this is
/// `∫ t tᵀ λ_θ du`.
pub fn hessian(cfg: &Configuration, model: &ModelSpec, theta: &ThetaNatural, fc: &FitConfig) -> Result<Matrix> {
    model.check_theta(theta)?;
    Ok(ContrastTerms::new(cfg, model, fc)?.evaluate(theta, fc.contrast)?.hessian)
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: ThetaNatural,
    /// `(β, σ, ε)` when the model is Lennard-Jones and `θ₂ > 0 > θ₃`.
    pub physical: Option<LjParams>,
    pub converged: bool,
    pub iterations: usize,
    /// `max_m |s_m| / d_m` with `d_m` the mean absolute data statistic,
    /// i.e. the score measured on unit-scaled statistics.
    pub grad_norm: f64,
    /// Threshold the gradient was compared against, `tol_grad (1 + n)`.
    pub grad_threshold: f64,
    /// Minus the contrast at `θ̂`.
    pub neg_contrast: f64,
    /// Negative Hessian of the contrast at `θ̂`, natural coordinates.
    pub hessian: Matrix,
    pub score: Vec<f64>,
    /// Number of data points in the eroded window.
    pub n_data: usize,
    /// Whether a ridge had to be added to some Newton system.
    pub regularized: bool,
    /// Length unit the fit was carried out in (1 without rescaling).
    pub scale: f64,
    /// No data point, or some interaction statistic vanishes at every data
    /// point; the contrast then has no finite maximizer and `theta` is not
    /// an estimate.
    pub degenerate: bool,
    pub contrast: Contrast,
}

impl FitResult {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations })
        }
    }
}

/// Lennard-Jones starting point `(n/|W⊖α|, min interpoint distance, 1)`.
pub fn default_lj_init(cfg: &Configuration, eroded: &Window) -> ThetaNatural {
    let n = cfg.count_in(eroded) as f64;
    let beta = if n > 0.0 { n / eroded.area() } else { 0.5 / eroded.area() };
    let sigma = cfg
        .min_interpoint_distance()
        .filter(|d| d.is_finite() && *d > 0.0)
        .unwrap_or(libm::sqrt(cfg.window().area() / (cfg.len() as f64 + 1.0)));
    LjParams { beta, sigma, epsilon: 1.0 }.to_natural()
}

/// Starting point for any model: Poisson activity and zero interaction.
pub fn default_init(cfg: &Configuration, model: &ModelSpec, eroded: &Window) -> ThetaNatural {
    if model.is_lennard_jones() {
        return default_lj_init(cfg, eroded);
    }
    let n = cfg.count_in(eroded) as f64;
    let beta = if n > 0.0 { n / eroded.area() } else { 0.5 / eroded.area() };
    let mut theta = vec![0.0; model.p()];
    theta[0] = -libm::log(beta);
    ThetaNatural::new(theta)
}

/// Length unit used by [`Rescale::Auto`]: the 1% quantile of
/// nearest-neighbour distances.
pub fn auto_scale(cfg: &Configuration) -> Option<f64> {
    let mut d: Vec<f64> = cfg.nearest_neighbor_distances().into_iter().filter(|d| d.is_finite()).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let k = libm::floor(0.01 * (d.len() - 1) as f64) as usize;
    Some(d[k]).filter(|s| *s > 0.0)
}

/// Maximizes the configured contrast by damped Newton.
///
/// The Newton step `H⁻¹ s` is halved until the contrast does not decrease;
/// if that leaves only a very short step, a Levenberg-damped step is tried.
/// Iteration stops when `max_m |s_m| / d_m ≤ tol_grad (1 + n)` or after
/// `max_iter` steps. A singular Hessian is retried with a ridge of
/// `1e-10 tr(H)`.
pub fn fit(
    cfg: &Configuration,
    model: &ModelSpec,
    fc: &FitConfig,
    theta_init: Option<&ThetaNatural>,
) -> Result<FitResult> {
    let eroded = fc.validate(cfg.window())?;
    let scale = match fc.rescale {
        Rescale::None => 1.0,
        Rescale::By(s) => s,
        Rescale::Auto => auto_scale(cfg).unwrap_or(1.0),
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter("rescaling length must be positive"));
    }
    let init = match theta_init {
        Some(t) => t.clone(),
        None => default_init(cfg, model, &eroded),
    };
    model.check_theta(&init)?;
    if scale == 1.0 {
        let terms = ContrastTerms::new(cfg, model, fc)?;
        return newton(&terms, model, fc.contrast, fc, init, 1.0);
    }
    if !model.all_power_law() {
        return Err(Error::InvalidParameter("distance rescaling needs a power-law basis"));
    }
    let map = ScaleMap::new(model, scale);
    let scaled_cfg = cfg.scale(scale);
    let scaled_fc = FitConfig {
        alpha: fc.alpha / scale,
        range: fc.range / scale,
        contrast: match fc.contrast {
            Contrast::Logistic { rho } => Contrast::Logistic { rho: rho * scale * scale },
            c => c,
        },
        rescale: Rescale::None,
        ..fc.clone()
    };
    let terms = ContrastTerms::new(&scaled_cfg, model, &scaled_fc)?;
    let res = newton(&terms, model, scaled_fc.contrast, &scaled_fc, map.to_scaled(&init), scale)?;
    Ok(map.to_natural_result(res, model, fc.contrast))
}

/// Affine map between natural parameters and those of the model fitted on
/// coordinates divided by `s`: `θ₁ = θ̃₁ + 2 log s`, `θ_m = θ̃_m s^γ_m`.
struct ScaleMap {
    shift: f64,
    factors: Vec<f64>,
}

impl ScaleMap {
    fn new(model: &ModelSpec, s: f64) -> Self {
        let mut factors = vec![1.0];
        factors.extend(model.basis().iter().map(|b| match b {
            BasisFunction::PowerLaw { gamma } | BasisFunction::ExpPower { gamma } => libm::pow(s, *gamma),
        }));
        ScaleMap { shift: 2.0 * libm::log(s), factors }
    }

    fn to_scaled(&self, theta: &ThetaNatural) -> ThetaNatural {
        let mut t: Vec<f64> = theta.as_slice().iter().zip(&self.factors).map(|(v, f)| v / f).collect();
        t[0] -= self.shift;
        ThetaNatural::new(t)
    }

    fn to_natural_result(&self, mut r: FitResult, model: &ModelSpec, contrast: Contrast) -> FitResult {
        let mut t: Vec<f64> = r.theta.as_slice().iter().zip(&self.factors).map(|(v, f)| v * f).collect();
        t[0] += self.shift;
        r.theta = ThetaNatural::new(t);
        let p = self.factors.len();
        r.score = r.score.iter().zip(&self.factors).map(|(v, f)| v / f).collect();
        r.hessian = Matrix::from_fn(p, p, |i, j| r.hessian[(i, j)] / (self.factors[i] * self.factors[j]));
        if let Contrast::Pseudolikelihood = contrast {
            r.neg_contrast += r.n_data as f64 * self.shift;
        }
        r.physical = physical(model, &r.theta);
        r.contrast = contrast;
        r
    }
}

fn physical(model: &ModelSpec, theta: &ThetaNatural) -> Option<LjParams> {
    if model.is_lennard_jones() {
        LjParams::from_natural(theta).ok()
    } else {
        None
    }
}

/// Per-component scale `d_m` of the statistics: mean `|t_m|` over the data
/// points (or the nodes when there are none), 1 when that is zero.
fn stat_scales(terms: &ContrastTerms) -> Vec<f64> {
    let p = terms.p();
    let (rows, count): (&[f64], usize) = if terms.n_data() > 0 {
        (&terms.data_stats, terms.n_data())
    } else {
        (&terms.node_stats, terms.grid.centers().len())
    };
    (0..p)
        .map(|m| {
            let mut s = 0.0;
            let mut k = 0usize;
            for r in 0..count {
                let v = libm::fabs(rows[r * p + m]);
                if v.is_finite() {
                    s += v;
                    k += 1;
                }
            }
            let d = if k > 0 { s / k as f64 } else { 0.0 };
            if d > 0.0 && d.is_finite() {
                d
            } else {
                1.0
            }
        })
        .collect()
}

fn newton(
    terms: &ContrastTerms,
    model: &ModelSpec,
    contrast: Contrast,
    fc: &FitConfig,
    init: ThetaNatural,
    scale: f64,
) -> Result<FitResult> {
    let p = terms.p();
    let d = stat_scales(terms);
    let threshold = fc.tol_grad * (1.0 + terms.n_data() as f64);
    let scaled_norm = |s: &[f64]| s.iter().zip(&d).map(|(v, dm)| libm::fabs(v / dm)).fold(0.0, f64::max);

    // A negative coefficient on the most singular basis term makes the exact
    // integral diverge; the quadrature alone would not see it.
    let admissible = |t: &ThetaNatural| p < 2 || t.as_slice()[1] >= 0.0;

    let mut theta = init;
    let mut ev = terms.evaluate(&theta, contrast)?;
    let mut regularized = false;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < fc.max_iter {
        let norm = scaled_norm(&ev.score);
        if ev.value.is_finite() && norm <= threshold {
            converged = true;
            break;
        }
        iterations += 1;
        // Newton system on unit-scaled statistics: H̃ = D⁻¹HD⁻¹, s̃ = D⁻¹s.
        let h_scaled = Matrix::from_fn(p, p, |i, j| ev.hessian[(i, j)] / (d[i] * d[j]));
        let s_scaled: Vec<f64> = ev.score.iter().zip(&d).map(|(v, dm)| v / dm).collect();
        let (step_scaled, ridge) = linalg::solve_spd(&h_scaled, &s_scaled).ok_or(Error::SingularHessian)?;
        regularized |= ridge;
        let step: Vec<f64> = step_scaled.iter().zip(&d).map(|(v, dm)| v / dm).collect();

        // Once the predicted gain is below rounding noise in the contrast the
        // quadratic model is exact enough to take the full step unchecked.
        let decrement: f64 = s_scaled.iter().zip(&step_scaled).map(|(a, b)| a * b).sum();
        let noise = 1e-12 * (1.0 + libm::fabs(ev.value));
        let search = |dir: &[f64]| -> Result<Option<(ThetaNatural, f64, f64)>> {
            let mut t = 1.0;
            for _ in 0..60 {
                let cand: Vec<f64> = theta.as_slice().iter().zip(dir).map(|(a, b)| a + t * b).collect();
                let cand = ThetaNatural::new(cand);
                if admissible(&cand) {
                    let v = terms.value(&cand, contrast)?;
                    if v.is_finite() && (v >= ev.value || !ev.value.is_finite()) {
                        return Ok(Some((cand, t, v)));
                    }
                }
                t *= 0.5;
            }
            Ok(None)
        };
        let mut best = None;
        if ev.value.is_finite() && decrement >= 0.0 && decrement <= noise {
            let cand: Vec<f64> = theta.as_slice().iter().zip(&step).map(|(a, b)| a + b).collect();
            let cand = ThetaNatural::new(cand);
            if admissible(&cand) {
                let v = terms.value(&cand, contrast)?;
                if v.is_finite() {
                    best = Some((cand, 1.0, v));
                }
            }
        }
        if best.is_none() {
            best = search(&step)?;
        }
        // Full step leaves the domain: also try Newton on the other
        // coordinates with θ₂ held where it is.
        if p >= 2 && theta.as_slice()[1] + step[1] < 0.0 {
            let keep: Vec<usize> = (0..p).filter(|&i| i != 1).collect();
            let h_red = Matrix::from_fn(keep.len(), keep.len(), |i, j| h_scaled[(keep[i], keep[j])]);
            let s_red: Vec<f64> = keep.iter().map(|&i| s_scaled[i]).collect();
            if let Some((dir_red, _)) = linalg::solve_spd(&h_red, &s_red) {
                let mut dir = vec![0.0; p];
                for (k, &i) in keep.iter().enumerate() {
                    dir[i] = dir_red[k] / d[i];
                }
                if let Some(r) = search(&dir)? {
                    if best.as_ref().map_or(true, |b| r.2 > b.2) {
                        best = Some(r);
                    }
                }
            }
        }
        let t = best.as_ref().map_or(0.0, |b| b.1);
        let mut accepted = best.map(|b| b.0);
        // A heavily damped Newton step means the quadratic model is poor here
        // (typically near the edge of the finite region). Damp the Hessian
        // toward the identity until a step does better.
        if t < 1.0 / 64.0 || accepted.is_none() {
            let floor = match &accepted {
                Some(c) => terms.value(c, contrast)?,
                None => ev.value,
            };
            let base = (0..p).map(|i| h_scaled[(i, i)]).sum::<f64>() / p as f64;
            let mut mu = 1e-6 * base;
            for _ in 0..40 {
                let damped = Matrix::from_fn(p, p, |i, j| h_scaled[(i, j)] + if i == j { mu } else { 0.0 });
                if let Some((dir, _)) = linalg::solve_spd(&damped, &s_scaled) {
                    let cand: Vec<f64> =
                        theta.as_slice().iter().zip(dir.iter().zip(&d)).map(|(a, (b, dm))| a + b / dm).collect();
                    let cand = ThetaNatural::new(cand);
                    if !admissible(&cand) {
                        mu *= 4.0;
                        continue;
                    }
                    let v = terms.value(&cand, contrast)?;
                    if v.is_finite() && v > floor {
                        accepted = Some(cand);
                        break;
                    }
                }
                mu *= 4.0;
            }
        }
        match accepted {
            Some(next) => {
                let next_ev = terms.evaluate(&next, contrast)?;
                let stalled = next == theta;
                theta = next;
                ev = next_ev;
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    if !converged {
        let norm = scaled_norm(&ev.score);
        converged = ev.value.is_finite() && norm <= threshold;
    }
    Ok(FitResult {
        physical: physical(model, &theta),
        theta,
        converged,
        iterations,
        grad_norm: scaled_norm(&ev.score),
        grad_threshold: threshold,
        neg_contrast: -ev.value,
        hessian: ev.hessian,
        score: ev.score,
        n_data: terms.n_data(),
        regularized,
        scale,
        contrast,
        degenerate: degenerate(terms),
    })
}

fn degenerate(terms: &ContrastTerms) -> bool {
    let n = terms.n_data();
    n == 0 || (1..terms.p()).any(|m| (0..n).all(|i| terms.data_stat(i)[m] == 0.0))
}
