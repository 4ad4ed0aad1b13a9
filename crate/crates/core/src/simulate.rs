//! Birth-death-move Metropolis-Hastings sampler.
//!
//! The chain runs on the target window dilated by a margin and the final
//! state is clipped back to the target, so points near the target boundary
//! still feel an (infinite-range) neighbourhood on every side.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Point, Window};
use crate::model::{dot_energy, sufficient_stats, ModelSpec, ThetaNatural};

/// Seeded, stream-addressable random source.
///
/// A ChaCha generator keyed by `seed` and positioned on stream `stream`;
/// replication `r` uses stream `r`, so results never depend on scheduling.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomStream { rng, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `0..n` (`n > 0`).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        match Poisson::new(mean) {
            Ok(d) => d.sample(&mut self.rng) as u64,
            Err(_) => 0,
        }
    }

    pub fn uniform_in(&mut self, w: &Window) -> Point {
        let (lo, hi) = (w.lo(), w.hi());
        let x = lo[0] + self.uniform() * (hi[0] - lo[0]);
        let y = lo[1] + self.uniform() * (hi[1] - lo[1]);
        Point::new(x.min(hi[0]), y.min(hi[1]))
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    pub n_steps: u64,
    /// Probability of a move proposal; births and deaths share the rest.
    pub p_shift: f64,
    /// Standard deviation of the isotropic Gaussian displacement.
    pub shift_scale: f64,
    /// Dilation of the target window on every side.
    pub margin: f64,
    pub seed: u64,
    pub stream: u64,
}

impl MhConfig {
    /// Defaults: one third moves, displacement `scale`, margin 2 and
    /// `max(10⁵, 200 ⌈β |S|⌉)` steps on the dilated window `S`.
    pub fn recommended(beta: f64, scale: f64, target: &Window) -> Self {
        let margin = 2.0;
        let area = target.expand(margin).map(|s| s.area()).unwrap_or(target.area());
        MhConfig {
            n_steps: default_steps(beta, area),
            p_shift: 1.0 / 3.0,
            shift_scale: scale,
            margin,
            seed: 0,
            stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::NonErgodicConfig);
        }
        if !(0.0..=1.0).contains(&self.p_shift) {
            return Err(Error::InvalidParameter("p_shift must lie in [0, 1]"));
        }
        if !(self.shift_scale > 0.0) {
            return Err(Error::InvalidParameter("shift_scale must be positive"));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::InvalidParameter("margin must be nonnegative"));
        }
        Ok(())
    }
}

pub fn default_steps(beta: f64, area: f64) -> u64 {
    let pop = libm::ceil(beta * area).max(0.0) as u64;
    (200 * pop).max(100_000)
}

/// Counters of one chain run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainStats {
    pub births_proposed: u64,
    pub births_accepted: u64,
    pub deaths_proposed: u64,
    pub deaths_accepted: u64,
    pub moves_proposed: u64,
    pub moves_accepted: u64,
}

/// Pair-energy evaluator over a struct-of-arrays point store.
enum Kernel<'a> {
    Free,
    LennardJones { c12: f64, c6: f64 },
    General { model: &'a ModelSpec, coeffs: &'a [f64] },
}

impl<'a> Kernel<'a> {
    fn new(model: &'a ModelSpec, theta: &'a ThetaNatural) -> Self {
        let coeffs = &theta.as_slice()[1..];
        if coeffs.iter().all(|&c| c == 0.0) {
            Kernel::Free
        } else if model.is_lennard_jones() {
            Kernel::LennardJones { c12: coeffs[0], c6: coeffs[1] }
        } else {
            Kernel::General { model, coeffs }
        }
    }

    /// `Σ_{j ≠ skip} Φ(p_j - u)`.
    fn energy(&self, xs: &[f64], ys: &[f64], u: Point, skip: Option<usize>) -> f64 {
        let (head, tail) = match skip {
            Some(i) => ((0, i), (i + 1, xs.len())),
            None => ((0, xs.len()), (xs.len(), xs.len())),
        };
        match *self {
            Kernel::Free => 0.0,
            Kernel::LennardJones { c12, c6 } => {
                let (a12, a6) = lj_sums(&xs[head.0..head.1], &ys[head.0..head.1], u);
                let (b12, b6) = lj_sums(&xs[tail.0..tail.1], &ys[tail.0..tail.1], u);
                let (s12, s6) = (a12 + b12, a6 + b6);
                if s12 == f64::INFINITY && c12 > 0.0 {
                    return f64::INFINITY;
                }
                let e = c12 * s12 + c6 * s6;
                if e.is_nan() {
                    f64::INFINITY
                } else {
                    e
                }
            }
            Kernel::General { model, coeffs } => {
                let mut t = alloc::vec![0.0; coeffs.len() + 1];
                for j in (head.0..head.1).chain(tail.0..tail.1) {
                    let dx = xs[j] - u.x;
                    let dy = ys[j] - u.y;
                    model.accumulate_r2(dx * dx + dy * dy, &mut t);
                }
                let mut theta = alloc::vec![0.0];
                theta.extend_from_slice(coeffs);
                dot_energy(&theta, &t)
            }
        }
    }
}

/// `(Σ r^-12, Σ r^-6)` over the given points, four lanes wide.
#[inline]
fn lj_sums(xs: &[f64], ys: &[f64], u: Point) -> (f64, f64) {
    let mut a12 = [0.0f64; 4];
    let mut a6 = [0.0f64; 4];
    let xc = xs.chunks_exact(4);
    let yc = ys.chunks_exact(4);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (cx, cy) in xc.zip(yc) {
        for k in 0..4 {
            let dx = cx[k] - u.x;
            let dy = cy[k] - u.y;
            let inv = 1.0 / (dx * dx + dy * dy);
            let i6 = inv * inv * inv;
            a12[k] += i6 * i6;
            a6[k] += i6;
        }
    }
    for (x, y) in xr.iter().zip(yr) {
        let dx = x - u.x;
        let dy = y - u.y;
        let inv = 1.0 / (dx * dx + dy * dy);
        let i6 = inv * inv * inv;
        a12[0] += i6 * i6;
        a6[0] += i6;
    }
    ((a12[0] + a12[1]) + (a12[2] + a12[3]), (a6[0] + a6[1]) + (a6[2] + a6[3]))
}

fn check_sampler_theta(model: &ModelSpec, theta: &ThetaNatural) -> Result<()> {
    model.check_theta(theta)?;
    if model.p() > 1 && theta.as_slice()[1] < 0.0 {
        return Err(Error::InvalidParameter("hard-core coefficient theta_2 must be nonnegative"));
    }
    Ok(())
}

/// Runs the chain on `window` itself, starting from the empty configuration.
pub fn mh_chain(
    model: &ModelSpec,
    theta: &ThetaNatural,
    window: &Window,
    cfg: &MhConfig,
) -> Result<(Configuration, ChainStats)> {
    mh_chain_with(model, theta, window, cfg, &mut RandomStream::new(cfg.seed, cfg.stream))
}

/// As [`mh_chain`] but drawing from `rng`; `cfg.seed` and `cfg.stream` are
/// ignored.
pub fn mh_chain_with(
    model: &ModelSpec,
    theta: &ThetaNatural,
    window: &Window,
    cfg: &MhConfig,
    rng: &mut RandomStream,
) -> Result<(Configuration, ChainStats)> {
    cfg.validate()?;
    check_sampler_theta(model, theta)?;
    let kernel = Kernel::new(model, theta);
    let log_beta = -theta.as_slice()[0];
    let area = window.area();
    let log_area = libm::log(area);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut stats = ChainStats::default();

    for _ in 0..cfg.n_steps {
        let n = xs.len();
        if rng.uniform() < cfg.p_shift {
            stats.moves_proposed += 1;
            if n == 0 {
                continue;
            }
            let i = rng.index(n);
            let old = Point::new(xs[i], ys[i]);
            let new = Point::new(
                old.x + cfg.shift_scale * rng.normal(),
                old.y + cfg.shift_scale * rng.normal(),
            );
            let log_u = libm::log(rng.uniform());
            if !window.contains(&new) {
                continue;
            }
            let e_new = kernel.energy(&xs, &ys, new, Some(i));
            let e_old = kernel.energy(&xs, &ys, old, Some(i));
            let log_ratio = e_old - e_new;
            if e_new.is_finite() && (log_ratio >= 0.0 || log_u < log_ratio) {
                xs[i] = new.x;
                ys[i] = new.y;
                stats.moves_accepted += 1;
            }
        } else if rng.uniform() < 0.5 {
            stats.births_proposed += 1;
            let u = rng.uniform_in(window);
            let log_u = libm::log(rng.uniform());
            let e = kernel.energy(&xs, &ys, u, None);
            let log_ratio = log_beta - e + log_area - libm::log((n + 1) as f64);
            if e.is_finite() && log_u < log_ratio {
                xs.push(u.x);
                ys.push(u.y);
                stats.births_accepted += 1;
            }
        } else {
            stats.deaths_proposed += 1;
            if n == 0 {
                continue;
            }
            let i = rng.index(n);
            let log_u = libm::log(rng.uniform());
            let e = kernel.energy(&xs, &ys, Point::new(xs[i], ys[i]), Some(i));
            let log_ratio = libm::log(n as f64) - (log_beta - e) - log_area;
            if log_u < log_ratio {
                xs.swap_remove(i);
                ys.swap_remove(i);
                stats.deaths_accepted += 1;
            }
        }
    }

    let points = xs.iter().zip(&ys).map(|(&x, &y)| Point::new(x, y)).collect();
    Ok((Configuration::new(*window, points)?, stats))
}

/// Samples on `target` dilated by `cfg.margin`, then clips to `target`.
pub fn mh_sample(
    model: &ModelSpec,
    theta: &ThetaNatural,
    target: &Window,
    cfg: &MhConfig,
) -> Result<Configuration> {
    mh_sample_with(model, theta, target, cfg, &mut RandomStream::new(cfg.seed, cfg.stream))
}

/// As [`mh_sample`] but drawing from `rng`.
pub fn mh_sample_with(
    model: &ModelSpec,
    theta: &ThetaNatural,
    target: &Window,
    cfg: &MhConfig,
    rng: &mut RandomStream,
) -> Result<Configuration> {
    cfg.validate()?;
    let extended = target.expand(cfg.margin)?;
    let (full, _) = mh_chain_with(model, theta, &extended, cfg, rng)?;
    clip(&full, target)
}

/// Keeps the points of `cfg` inside `target` and relabels the window.
pub fn clip(cfg: &Configuration, target: &Window) -> Result<Configuration> {
    if !cfg.window().contains_window(target) {
        return Err(Error::WindowMismatch);
    }
    let pts = cfg.points().iter().filter(|p| target.contains(p)).copied().collect();
    Configuration::new(*target, pts)
}

/// Homogeneous Poisson pattern of intensity `beta` on `window`.
pub fn poisson_sample(beta: f64, window: &Window, rng: &mut RandomStream) -> Configuration {
    let n = rng.poisson(beta * window.area());
    let mut pts = Vec::with_capacity(n as usize);
    for _ in 0..n {
        pts.push(rng.uniform_in(window));
    }
    // continuous draws; a repeat has probability zero but would be rejected
    Configuration::new(*window, pts).unwrap_or_else(|_| Configuration::empty(*window))
}

/// Hastings ratio `λ(u, x) |S| / (n(x) + 1)` for adding `u` to `x`.
pub fn birth_ratio(
    model: &ModelSpec,
    theta: &ThetaNatural,
    x: &Configuration,
    u: &Point,
    area: f64,
) -> Result<f64> {
    model.check_theta(theta)?;
    let t = sufficient_stats(model, x, u, f64::INFINITY, false)?;
    Ok(libm::exp(-theta.energy(&t)) * area / (x.len() + 1) as f64)
}

/// Hastings ratio `n(x) / (λ(v, x ∖ v) |S|)` for deleting `v` from `x`.
pub fn death_ratio(
    model: &ModelSpec,
    theta: &ThetaNatural,
    x: &Configuration,
    v: &Point,
    area: f64,
) -> Result<f64> {
    model.check_theta(theta)?;
    let t = sufficient_stats(model, x, v, f64::INFINITY, true)?;
    Ok(x.len() as f64 / (libm::exp(-theta.energy(&t)) * area))
}
