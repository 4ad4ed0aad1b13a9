//! Asymptotic covariance of the fitted parameter and GNZ residuals.
//!
//! The covariance is the sandwich `U⁻¹ Σ U⁻¹ / |W⊖α|` where `U` is the
//! Hessian per unit area and `Σ` is a block estimate of the score variance
//! per unit area: the eroded window is cut into blocks, the per-block scores
//! are centred at their mean, and outer products of blocks within a lag
//! window are summed.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimate::{Contrast, ContrastTerms, FitConfig, QuadratureGrid, Term};
use crate::geometry::{Configuration, Point, Window};
use crate::linalg::{self, Matrix};
use crate::model::{dot_energy, ModelSpec, ThetaNatural};

pub const MIN_BLOCKS: usize = 9;

/// Tiling of the eroded window by rectangular blocks made of whole
/// quadrature cells.
///
/// Block edges are snapped to the quadrature lattice so every node belongs to
/// exactly one block and block areas equal the summed node weights. Blocks
/// in the last row/column absorb the remainder and may be smaller.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    window: Window,
    cells: (usize, usize),
    cell_size: (f64, f64),
    per_block: (usize, usize),
    dims: (usize, usize),
    lag: usize,
}

impl BlockPartition {
    /// Blocks of nominal side `side` over the grid; `lag` neighbours in
    /// block-index (Chebyshev) distance are cross-multiplied.
    pub fn new(grid: &QuadratureGrid, side: f64, lag: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidParameter("block side must be positive"));
        }
        let cells = grid.cells_per_axis();
        let cell_size = grid.cell_size();
        let kx = (libm::round(side / cell_size.0) as usize).clamp(1, cells.0);
        let ky = (libm::round(side / cell_size.1) as usize).clamp(1, cells.1);
        Ok(BlockPartition {
            window: *grid.window(),
            cells,
            cell_size,
            per_block: (kx, ky),
            dims: (cells.0.div_ceil(kx), cells.1.div_ceil(ky)),
            lag: lag.max(1),
        })
    }

    /// Side `α` when `α > 0`, else 1; lag `max(1, ⌈α / side⌉)`.
    pub fn default_for(grid: &QuadratureGrid, alpha: f64) -> Result<Self> {
        let side = if alpha > 0.0 { alpha } else { 1.0 };
        let partition = BlockPartition::new(grid, side, 1)?;
        let actual = partition.block_side().0.min(partition.block_side().1);
        let lag = if alpha > 0.0 { libm::ceil(alpha / actual - 1e-9).max(1.0) as usize } else { 1 };
        Ok(BlockPartition { lag, ..partition })
    }

    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Nominal block side lengths.
    pub fn block_side(&self) -> (f64, f64) {
        (self.per_block.0 as f64 * self.cell_size.0, self.per_block.1 as f64 * self.cell_size.1)
    }

    /// The block rectangles, row-major.
    pub fn blocks(&self) -> Vec<Window> {
        let lo = self.window.lo();
        let hi = self.window.hi();
        let edge = |axis: usize, b: usize| -> f64 {
            let (k, n, c) = if axis == 0 {
                (self.per_block.0, self.cells.0, self.cell_size.0)
            } else {
                (self.per_block.1, self.cells.1, self.cell_size.1)
            };
            let cell = (b * k).min(n);
            if cell == n {
                hi[axis]
            } else {
                lo[axis] + cell as f64 * c
            }
        };
        let mut out = Vec::with_capacity(self.len());
        for by in 0..self.dims.1 {
            for bx in 0..self.dims.0 {
                out.push(
                    Window::new([edge(0, bx), edge(1, by)], [edge(0, bx + 1), edge(1, by + 1)])
                        .expect("blocks are non-degenerate"),
                );
            }
        }
        out
    }

    fn block_of_cell(&self, ix: usize, iy: usize) -> usize {
        (iy / self.per_block.1) * self.dims.0 + ix / self.per_block.0
    }

    /// Block of quadrature node `j` (row-major node order).
    pub fn block_of_node(&self, j: usize) -> usize {
        self.block_of_cell(j % self.cells.0, j / self.cells.0)
    }

    pub fn block_of_point(&self, u: &Point) -> usize {
        let lo = self.window.lo();
        let cell = |v: f64, l: f64, c: f64, n: usize| -> usize {
            let k = libm::floor((v - l) / c);
            if k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        self.block_of_cell(
            cell(u.x, lo[0], self.cell_size.0, self.cells.0),
            cell(u.y, lo[1], self.cell_size.1, self.cells.1),
        )
    }

    fn coords(&self, b: usize) -> (usize, usize) {
        (b % self.dims.0, b / self.dims.0)
    }
}

/// Covariance estimate of `θ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    /// Hessian per unit area.
    pub u: Matrix,
    /// Block score variance per unit area; `None` with too few blocks.
    pub sigma: Option<Matrix>,
    /// `U⁻¹ Σ U⁻¹ / area`.
    pub sandwich: Option<Matrix>,
    pub valid: bool,
    /// Negative eigenvalues were clipped from the sandwich.
    pub clipped: bool,
    pub blocks: usize,
    pub area: f64,
}

/// `Û = H(θ̂) / |W⊖α|`.
pub fn estimate_u(cfg: &Configuration, model: &ModelSpec, theta: &ThetaNatural, fc: &FitConfig) -> Result<Matrix> {
    let terms = ContrastTerms::new(cfg, model, fc)?;
    u_from_terms(&terms, theta, fc.contrast)
}

fn u_from_terms(terms: &ContrastTerms, theta: &ThetaNatural, contrast: Contrast) -> Result<Matrix> {
    let h = terms.evaluate(theta, contrast)?.hessian;
    Ok(h / terms.eroded_window().area())
}

/// Block estimate `Σ̂ = |W⊖α|⁻¹ Σ_j Σ_{|k-j| ≤ lag} Z_j Z_kᵀ` with `Z_j` the
/// mean-centred score of block `j`.
pub fn estimate_sigma_block(
    cfg: &Configuration,
    model: &ModelSpec,
    theta: &ThetaNatural,
    fc: &FitConfig,
    partition: &BlockPartition,
) -> Result<Matrix> {
    let terms = ContrastTerms::new(cfg, model, fc)?;
    sigma_from_terms(&terms, theta, fc.contrast, partition)
}

fn sigma_from_terms(
    terms: &ContrastTerms,
    theta: &ThetaNatural,
    contrast: Contrast,
    partition: &BlockPartition,
) -> Result<Matrix> {
    let j = partition.len();
    if j < MIN_BLOCKS {
        return Err(Error::TooFewBlocks { blocks: j });
    }
    let p = terms.p();
    let mut z = terms.grouped_scores(theta, contrast, j, |t| match t {
        Term::Node(n) => partition.block_of_node(n),
        Term::Data(i) => partition.block_of_point(&terms.data_points()[i]),
    })?;
    let mut mean = alloc::vec![0.0; p];
    for s in &z {
        for m in 0..p {
            mean[m] += s[m];
        }
    }
    for m in 0..p {
        mean[m] /= j as f64;
    }
    for s in z.iter_mut() {
        for m in 0..p {
            s[m] -= mean[m];
        }
    }
    let lag = partition.lag() as isize;
    let (bx, by) = partition.dims();
    let mut sigma = Matrix::zeros(p, p);
    for a in 0..j {
        let (ax, ay) = partition.coords(a);
        let (ax, ay) = (ax as isize, ay as isize);
        for ky in (ay - lag).max(0)..=(ay + lag).min(by as isize - 1) {
            for kx in (ax - lag).max(0)..=(ax + lag).min(bx as isize - 1) {
                let b = ky as usize * bx + kx as usize;
                for m in 0..p {
                    for k in 0..p {
                        sigma[(m, k)] += z[a][m] * z[b][k];
                    }
                }
            }
        }
    }
    Ok(linalg::symmetrize(&sigma) / terms.eroded_window().area())
}

/// `U⁻¹ Σ U⁻¹ / area`, projected onto the PSD cone. The boolean reports
/// whether eigenvalues had to be clipped.
///
/// `U` is rejected when its condition number after unit-diagonal scaling
/// reaches `1e12`.
pub fn sandwich(u: &Matrix, sigma: &Matrix, area: f64) -> Result<(Matrix, bool)> {
    let p = u.nrows();
    let diag: Vec<f64> = (0..p).map(|i| u[(i, i)]).collect();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::SingularU { condition: f64::INFINITY });
    }
    let inv_sqrt: Vec<f64> = diag.iter().map(|d| 1.0 / libm::sqrt(*d)).collect();
    let scaled = Matrix::from_fn(p, p, |i, j| u[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let condition = linalg::condition_number(&scaled);
    if !(condition < 1e12) {
        return Err(Error::SingularU { condition });
    }
    let scaled_inv = linalg::inverse_spd(&scaled).ok_or(Error::SingularU { condition })?;
    let u_inv = Matrix::from_fn(p, p, |i, j| scaled_inv[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let raw = &u_inv * sigma * &u_inv / area;
    Ok(linalg::psd_project(&raw))
}

/// Û, Σ̂ and the sandwich at `θ̂`. `partition` defaults to
/// [`BlockPartition::default_for`].
pub fn covariance(
    cfg: &Configuration,
    model: &ModelSpec,
    theta: &ThetaNatural,
    fc: &FitConfig,
    partition: Option<&BlockPartition>,
) -> Result<CovarianceReport> {
    let terms = ContrastTerms::new(cfg, model, fc)?;
    let owned;
    let partition = match partition {
        Some(p) => p,
        None => {
            owned = BlockPartition::default_for(terms.grid(), fc.alpha)?;
            &owned
        }
    };
    let area = terms.eroded_window().area();
    let u = u_from_terms(&terms, theta, fc.contrast)?;
    let mut report = CovarianceReport {
        u,
        sigma: None,
        sandwich: None,
        valid: false,
        clipped: false,
        blocks: partition.len(),
        area,
    };
    match sigma_from_terms(&terms, theta, fc.contrast, partition) {
        Ok(sigma) => {
            let (sw, clipped) = sandwich(&report.u, &sigma, area)?;
            report.sigma = Some(sigma);
            report.sandwich = Some(sw);
            report.valid = true;
            report.clipped = clipped;
        }
        Err(Error::TooFewBlocks { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Statistic `f` of the GNZ residual `Σ_{u ∈ X} f(u, X ∖ u) − ∫ f(u, X) λ_θ(u, X) du`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnzStatistic {
    /// `f = 1`.
    Unit,
    /// `f = t`, truncated at `R`.
    Stats,
}

/// GNZ residual on the eroded window with the shared quadrature.
pub fn gnz_residual(
    cfg: &Configuration,
    model: &ModelSpec,
    theta: &ThetaNatural,
    fc: &FitConfig,
    stat: GnzStatistic,
) -> Result<Vec<f64>> {
    model.check_theta(theta)?;
    let terms = ContrastTerms::new(cfg, model, fc)?;
    gnz_from_terms(&terms, theta, stat)
}

pub fn gnz_from_terms(terms: &ContrastTerms, theta: &ThetaNatural, stat: GnzStatistic) -> Result<Vec<f64>> {
    match stat {
        GnzStatistic::Stats => {
            let s = terms.evaluate(theta, Contrast::Pseudolikelihood)?.score;
            Ok(s.into_iter().map(|v| -v).collect())
        }
        GnzStatistic::Unit => {
            let th = theta.as_slice();
            let w = terms.grid().weight();
            let lambdas: Vec<f64> = (0..terms.grid().centers().len())
                .map(|j| libm::exp(-dot_energy(th, terms.node_stat(j))))
                .collect();
            let integral = w * crate::sum::sum(&lambdas);
            Ok(alloc::vec![terms.n_data() as f64 - integral])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::fit;
    use crate::simulate::{poisson_sample, RandomStream};
    use alloc::vec;

    #[test]
    fn partition_covers_window() {
        let w = Window::new([-1.0, -0.5], [2.0, 1.7]).unwrap();
        let g = QuadratureGrid::midpoint(&w, 100).unwrap();
        let bp = BlockPartition::new(&g, 0.7, 1).unwrap();
        let total: f64 = bp.blocks().iter().map(|b| b.area()).sum();
        assert!((total - w.area()).abs() < 1e-9 * w.area());
        for (j, c) in g.centers().iter().enumerate() {
            let b = bp.block_of_node(j);
            assert!(bp.blocks()[b].contains(c));
            assert_eq!(bp.block_of_point(c), b);
        }
    }

    #[test]
    fn default_partition_lag() {
        let w = Window::centered_square(2.0).unwrap();
        let g = QuadratureGrid::midpoint(&w, 100).unwrap();
        let bp = BlockPartition::default_for(&g, 0.0).unwrap();
        assert_eq!(bp.dims(), (4, 4));
        assert_eq!(bp.lag(), 1);
        let bp = BlockPartition::default_for(&g, 0.3).unwrap();
        assert_eq!(bp.lag(), 1);
        assert!((bp.block_side().0 - 0.32).abs() < 1e-12);
    }

    #[test]
    fn sandwich_scalar_and_identity() {
        let (s, clipped) = sandwich(&Matrix::from_element(1, 1, 100.0), &Matrix::from_element(1, 1, 100.0), 16.0).unwrap();
        assert!(!clipped);
        assert!((s[(0, 0)] - 1.0 / 1600.0).abs() < 1e-15);
        assert!((libm::sqrt(s[(0, 0)]) - 0.025).abs() < 1e-15);
        let (s, _) = sandwich(&Matrix::identity(3, 3), &Matrix::identity(3, 3), 4.0).unwrap();
        assert!((s - Matrix::identity(3, 3) / 4.0).abs().max() < 1e-15);
    }

    #[test]
    fn singular_u_rejected() {
        let u = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sandwich(&u, &Matrix::identity(2, 2), 1.0), Err(Error::SingularU { .. })));
    }

    #[test]
    fn single_group_equals_total_score() {
        let w = Window::centered_square(1.0).unwrap();
        let cfg = poisson_sample(50.0, &w, &mut RandomStream::new(2, 0));
        let fc = FitConfig::default();
        let terms = ContrastTerms::new(&cfg, &ModelSpec::poisson(), &fc).unwrap();
        let th = ThetaNatural::new(vec![-libm::log(30.0)]);
        let z = terms.grouped_scores(&th, Contrast::Pseudolikelihood, 1, |_| 0).unwrap();
        let total = terms.evaluate(&th, Contrast::Pseudolikelihood).unwrap().score;
        assert!((z[0][0] - total[0]).abs() < 1e-9);
    }

    #[test]
    fn too_few_blocks_gives_u_only_report() {
        let w = Window::centered_square(1.0).unwrap();
        let cfg = poisson_sample(100.0, &w, &mut RandomStream::new(5, 0));
        let fc = FitConfig::default();
        let r = fit(&cfg, &ModelSpec::poisson(), &fc, None).unwrap();
        let rep = covariance(&cfg, &ModelSpec::poisson(), &r.theta, &fc, None).unwrap();
        assert!(!rep.valid);
        assert!(rep.sandwich.is_none());
        assert!((rep.u[(0, 0)] - r.theta.beta()).abs() < 1e-9 * r.theta.beta());
    }

    #[test]
    fn gnz_unit_vanishes_at_poisson_mle() {
        let w = Window::centered_square(1.0).unwrap();
        let cfg = poisson_sample(80.0, &w, &mut RandomStream::new(6, 0));
        let fc = FitConfig::default();
        let beta = cfg.len() as f64 / w.area();
        let r = gnz_residual(&cfg, &ModelSpec::poisson(), &ThetaNatural::new(vec![-libm::log(beta)]), &fc, GnzStatistic::Unit).unwrap();
        assert!(r[0].abs() < 1e-9 * cfg.len() as f64);
    }

    #[test]
    fn sigma_is_symmetric() {
        let w = Window::centered_square(2.0).unwrap();
        let cfg = poisson_sample(30.0, &w, &mut RandomStream::new(8, 0));
        let m = ModelSpec::lennard_jones(0.1).unwrap();
        let fc = FitConfig { grid: 40, ..FitConfig::default() };
        let th = crate::model::LjParams::new(30.0, 0.05, 0.3).unwrap().to_natural();
        let g = QuadratureGrid::midpoint(&w, 40).unwrap();
        let bp = BlockPartition::new(&g, 1.0, 1).unwrap();
        let s = estimate_sigma_block(&cfg, &m, &th, &fc, &bp).unwrap();
        assert_eq!(s.clone(), s.transpose());
    }
}
