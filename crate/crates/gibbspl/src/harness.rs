//! Replicated simulation-and-fit experiments for the Lennard-Jones model.
//!
//! Replication `r` draws all of its patterns from stream `r` of the base
//! seed, one window after another, and every regime cell is fitted on those
//! same patterns. Results are collected in replication order, so the reports
//! do not depend on the number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};

use gibbspl_core::estimate::fit;
use gibbspl_core::metrics::{alpha_argmin, metrics, Metrics};
use gibbspl_core::simulate::mh_sample_with;
use gibbspl_core::{Configuration, Contrast, FitConfig, LjParams, MhConfig, ModelSpec, RandomStream, Window};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::io::{
    range_repr, rescale_from_repr, window_from_repr, write_pattern, NumOrWord, PhysicalRecord, WindowRepr,
};
use crate::qq::{qq_data, QqData};

/// A cell is flagged when more than this fraction of its fits failed.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeRule {
    /// `R = α`.
    #[serde(alias = "equal-alpha")]
    EqualAlpha,
    /// `R = ∞`.
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub name: String,
    pub alphas: Vec<f64>,
    pub range: RangeRule,
    /// Adds the `α = 0, R = ∞` cell in front of the grid.
    #[serde(default)]
    pub include_zero_erosion: bool,
}

impl RegimeSpec {
    /// `(α, R)` cells in report order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if self.include_zero_erosion {
            out.push((0.0, f64::INFINITY));
        }
        for &a in &self.alphas {
            let r = match self.range {
                RangeRule::EqualAlpha => a,
                RangeRule::Infinite => f64::INFINITY,
            };
            out.push((a, r));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MhOverrides {
    pub n_steps: Option<u64>,
    pub p_shift: Option<f64>,
    pub shift_scale: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOverrides {
    pub grid: Option<usize>,
    /// `"pl"` or `"lr"`.
    pub contrast: Option<String>,
    /// Number or `"auto"` (`n / |W|`).
    pub rho: Option<NumOrWord>,
    /// Number, `"auto"` or `"none"`.
    pub rescale: Option<NumOrWord>,
    pub tol_grad: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// True Lennard-Jones parameters.
    pub model: PhysicalRecord,
    pub windows: Vec<WindowRepr>,
    pub regimes: Vec<RegimeSpec>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub mh: MhOverrides,
    #[serde(default)]
    pub fit: FitOverrides,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(io_err(path))?;
        let spec: ExperimentSpec = serde_json::from_str(&s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn truth(&self) -> Result<LjParams> {
        Ok(LjParams::new(self.model.beta, self.model.sigma, self.model.epsilon)?)
    }

    pub fn window_list(&self) -> Result<Vec<Window>> {
        self.windows.iter().map(window_from_repr).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let truth = self.truth()?;
        if truth.epsilon == 0.0 {
            return Err(Error::Format("true epsilon must be positive for relative errors".into()));
        }
        if self.replications < 2 {
            return Err(Error::Format("replications must be at least 2".into()));
        }
        if self.windows.is_empty() || self.regimes.is_empty() {
            return Err(Error::Format("need at least one window and one regime".into()));
        }
        let windows = self.window_list()?;
        for reg in &self.regimes {
            if reg.alphas.is_empty() && !reg.include_zero_erosion {
                return Err(Error::Format(format!("regime {} has no cells", reg.name)));
            }
            for (a, r) in reg.cells() {
                if !(a >= 0.0) || !(r > 0.0) {
                    return Err(Error::Format(format!("regime {}: invalid cell alpha={a} R={r}", reg.name)));
                }
                for w in &windows {
                    w.erode(a)?;
                }
            }
        }
        self.fit_template()?;
        self.mh_config(&windows[0]).validate()?;
        Ok(())
    }

    /// Sampler settings for one target window.
    pub fn mh_config(&self, target: &Window) -> MhConfig {
        let truth = LjParams { beta: self.model.beta, sigma: self.model.sigma, epsilon: self.model.epsilon };
        let mut cfg = MhConfig::recommended(truth.beta, truth.sigma, target);
        if let Some(m) = self.mh.margin {
            cfg.margin = m;
            let area = target.expand(m).map(|s| s.area()).unwrap_or(target.area());
            cfg.n_steps = gibbspl_core::simulate::default_steps(truth.beta, area);
        }
        if let Some(n) = self.mh.n_steps {
            cfg.n_steps = n;
        }
        if let Some(p) = self.mh.p_shift {
            cfg.p_shift = p;
        }
        if let Some(s) = self.mh.shift_scale {
            cfg.shift_scale = s;
        }
        cfg
    }

    fn fit_template(&self) -> Result<FitTemplate> {
        let f = &self.fit;
        let mut base = FitConfig::default();
        if let Some(g) = f.grid {
            base.grid = g;
        }
        if let Some(t) = f.tol_grad {
            base.tol_grad = t;
        }
        if let Some(m) = f.max_iter {
            base.max_iter = m;
        }
        if let Some(r) = &f.rescale {
            base.rescale = rescale_from_repr(r)?;
        }
        let rho = match (f.contrast.as_deref().unwrap_or("pl"), &f.rho) {
            ("pl", _) => RhoChoice::NotUsed,
            ("lr", None) => RhoChoice::Auto,
            ("lr", Some(NumOrWord::Word(w))) if w == "auto" => RhoChoice::Auto,
            ("lr", Some(NumOrWord::Num(v))) => RhoChoice::Fixed(*v),
            (c, r) => return Err(Error::Format(format!("bad contrast/rho {c:?}/{r:?}"))),
        };
        Ok(FitTemplate { base, rho })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RhoChoice {
    NotUsed,
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
struct FitTemplate {
    base: FitConfig,
    rho: RhoChoice,
}

impl FitTemplate {
    fn config(&self, cfg: &Configuration, alpha: f64, range: f64) -> FitConfig {
        let contrast = match self.rho {
            RhoChoice::NotUsed => Contrast::Pseudolikelihood,
            RhoChoice::Fixed(rho) => Contrast::Logistic { rho },
            RhoChoice::Auto => gibbspl_core::estimate::logistic_auto(cfg),
        };
        FitConfig { alpha, range, contrast, ..self.base.clone() }
    }
}

/// Result of one fit inside an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum FitOutcome {
    Ok { theta: Vec<f64>, physical: LjParams, iterations: usize },
    Failed(String),
}

/// Everything one replication produced: `fits[window][cell]`, cells flattened
/// over regimes in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub fits: Vec<Vec<FitOutcome>>,
    pub patterns: Vec<Configuration>,
}

/// Flattened `(regime index, α, R)` over all regimes.
pub fn all_cells(spec: &ExperimentSpec) -> Vec<(usize, f64, f64)> {
    spec.regimes
        .iter()
        .enumerate()
        .flat_map(|(k, r)| r.cells().into_iter().map(move |(a, rr)| (k, a, rr)))
        .collect()
}

/// Simulates and fits replication `rep`.
pub fn run_replication(spec: &ExperimentSpec, rep: usize) -> Result<Replication> {
    let truth = spec.truth()?;
    let model = ModelSpec::lennard_jones(truth.sigma)?;
    let theta = truth.to_natural();
    let template = spec.fit_template()?;
    let cells = all_cells(spec);
    let mut rng = RandomStream::new(spec.base_seed, rep as u64);
    let mut fits = Vec::new();
    let mut patterns = Vec::new();
    for w in spec.window_list()? {
        let pattern = mh_sample_with(&model, &theta, &w, &spec.mh_config(&w), &mut rng)?;
        let row = cells
            .iter()
            .map(|&(_, a, r)| fit_one(&pattern, &model, &template.config(&pattern, a, r)))
            .collect();
        fits.push(row);
        patterns.push(pattern);
    }
    Ok(Replication { fits, patterns })
}

fn fit_one(cfg: &Configuration, model: &ModelSpec, fc: &FitConfig) -> FitOutcome {
    match fit(cfg, model, fc, None) {
        Ok(r) if r.degenerate => FitOutcome::Failed("no interacting pair within the truncation range".into()),
        Ok(r) if !r.converged => FitOutcome::Failed(format!("not converged after {} iterations", r.iterations)),
        Ok(r) => match r.physical {
            Some(p) => FitOutcome::Ok { theta: r.theta.into_vec(), physical: p, iterations: r.iterations },
            None => FitOutcome::Failed("estimate has no Lennard-Jones form (theta_3 >= 0)".into()),
        },
        Err(e) => FitOutcome::Failed(e.to_string()),
    }
}

/// Summary of one `(regime, window, α)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub regime: String,
    pub window: WindowRepr,
    pub alpha: f64,
    pub range: NumOrWord,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub rwmse: Option<f64>,
    pub rwsb: Option<f64>,
    pub rwv: Option<f64>,
    /// Mean error of `(log β, σ, ε)`.
    pub bias: Option<[f64; 3]>,
    pub sd: Option<[f64; 3]>,
    pub unreliable: bool,
}

/// RWMSE over the α grid of one regime on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub regime: String,
    pub window: WindowRepr,
    pub alphas: Vec<f64>,
    pub rwmse: Vec<Option<f64>>,
    pub alpha_opt: Option<f64>,
    /// Whether the smallest α attains the minimum.
    pub smallest_alpha_best: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replications: usize,
    pub cells: Vec<CellReport>,
    pub sweeps: Vec<SweepReport>,
    /// Some cell had more than 20% failed fits.
    pub partial_failure: bool,
}

fn window_label(w: &WindowRepr) -> String {
    format!("[{:?},{:?}]x[{:?},{:?}]", w[0][0], w[0][1], w[1][0], w[1][1])
}

fn cell_report(regime: &str, window: WindowRepr, alpha: f64, range: f64, outcomes: &[&FitOutcome], truth: &LjParams) -> CellReport {
    let ok: Vec<LjParams> = outcomes
        .iter()
        .filter_map(|o| match o {
            FitOutcome::Ok { physical, .. } => Some(*physical),
            FitOutcome::Failed(_) => None,
        })
        .collect();
    let failed = outcomes.len() - ok.len();
    let m: Option<Metrics> = metrics(&ok, truth).ok();
    CellReport {
        regime: regime.to_string(),
        window,
        alpha,
        range: range_repr(range),
        reps_ok: ok.len(),
        reps_failed: failed,
        rwmse: m.map(|m| m.rwmse),
        rwsb: m.map(|m| m.rwsb),
        rwv: m.map(|m| m.rwv),
        bias: m.map(|m| m.bias),
        sd: m.map(|m| m.sd),
        unreliable: m.is_none() || failed as f64 > MAX_FAILURE_RATE * outcomes.len() as f64,
    }
}

/// Aggregates replications into the report; deterministic in the order of
/// `reps`.
pub fn summarize(spec: &ExperimentSpec, reps: &[Replication]) -> Result<MetricsReport> {
    let truth = spec.truth()?;
    let cells = all_cells(spec);
    let mut out = Vec::new();
    let mut sweeps = Vec::new();
    for (k, reg) in spec.regimes.iter().enumerate() {
        for (wi, w) in spec.windows.iter().enumerate() {
            let mut table = Vec::new();
            for (ci, &(rk, a, r)) in cells.iter().enumerate() {
                if rk != k {
                    continue;
                }
                let outcomes: Vec<&FitOutcome> = reps.iter().map(|rep| &rep.fits[wi][ci]).collect();
                let c = cell_report(&reg.name, *w, a, r, &outcomes, &truth);
                table.push((a, c.rwmse));
                out.push(c);
            }
            if table.len() >= 2 {
                let finite: Vec<(f64, f64)> = table.iter().filter_map(|(a, v)| v.map(|v| (*a, v))).collect();
                let alpha_opt = alpha_argmin(&finite);
                let smallest = table.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
                sweeps.push(SweepReport {
                    regime: reg.name.clone(),
                    window: *w,
                    alphas: table.iter().map(|t| t.0).collect(),
                    rwmse: table.iter().map(|t| t.1).collect(),
                    alpha_opt,
                    smallest_alpha_best: alpha_opt.map(|a| a == smallest),
                });
            }
        }
    }
    let partial_failure = out.iter().any(|c| c.unreliable);
    Ok(MetricsReport { replications: reps.len(), cells: out, sweeps, partial_failure })
}

/// Options of [`run_experiment`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses one per core.
    pub jobs: usize,
    pub keep_patterns: bool,
    /// Overrides `spec.out_dir`.
    pub out_dir: Option<PathBuf>,
}

/// Runs all replications on `jobs` threads.
pub fn run_replications(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<Replication>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Format(format!("thread pool: {e}")))?;
    pool.install(|| (0..spec.replications).into_par_iter().map(|r| run_replication(spec, r)).collect())
}

/// Simulates, fits, summarizes and (with an output directory) writes
/// `report.csv`, `report.json`, `estimates.csv` and optionally the patterns.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<MetricsReport> {
    let mut reps = run_replications(spec, opts.jobs)?;
    let report = summarize(spec, &reps)?;
    if let Some(dir) = opts.out_dir.as_ref().or(spec.out_dir.as_ref()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_report_csv(&dir.join("report.csv"), &report)?;
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(dir.join("report.json"), json).map_err(io_err(dir))?;
        write_estimates_csv(&dir.join("estimates.csv"), spec, &reps)?;
        if opts.keep_patterns {
            let pdir = dir.join("patterns");
            fs::create_dir_all(&pdir).map_err(io_err(&pdir))?;
            for (r, rep) in reps.iter().enumerate() {
                for (k, p) in rep.patterns.iter().enumerate() {
                    write_pattern(&pdir.join(format!("rep_{r}_win_{k}.json")), p)?;
                }
            }
        }
    }
    if !opts.keep_patterns {
        reps.iter_mut().for_each(|r| r.patterns.clear());
    }
    Ok(report)
}

/// The α sweep of every multi-α regime; `α_opt` ties go to the smaller α.
pub fn alpha_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<SweepReport>> {
    if spec.regimes.iter().all(|r| r.cells().len() < 2) {
        return Err(Error::Format("alpha sweep needs a regime with at least two alpha values".into()));
    }
    Ok(run_experiment(spec, opts)?.sweeps)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub const REPORT_COLUMNS: [&str; 15] = [
    "regime", "window", "alpha", "R", "reps_ok", "reps_failed", "rwmse", "rwsb", "rwv", "bias_logbeta", "bias_sigma",
    "bias_eps", "sd_logbeta", "sd_sigma", "sd_eps",
];

pub fn write_report_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for c in &report.cells {
        let range = match &c.range {
            NumOrWord::Num(v) => format!("{v:?}"),
            NumOrWord::Word(s) => s.clone(),
        };
        let b = |k: usize| opt(c.bias.map(|b| b[k]));
        let s = |k: usize| opt(c.sd.map(|s| s[k]));
        w.write_record([
            c.regime.clone(),
            window_label(&c.window),
            format!("{:?}", c.alpha),
            range,
            c.reps_ok.to_string(),
            c.reps_failed.to_string(),
            opt(c.rwmse),
            opt(c.rwsb),
            opt(c.rwv),
            b(0),
            b(1),
            b(2),
            s(0),
            s(1),
            s(2),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_estimates_csv(path: &Path, spec: &ExperimentSpec, reps: &[Replication]) -> Result<()> {
    let cells = all_cells(spec);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "regime", "window", "alpha", "R", "rep", "ok", "beta", "sigma", "epsilon", "theta1", "theta2", "theta3",
        "iterations", "error",
    ])?;
    for (r, rep) in reps.iter().enumerate() {
        for (wi, row) in rep.fits.iter().enumerate() {
            for (ci, outcome) in row.iter().enumerate() {
                let (k, a, rr) = cells[ci];
                let mut rec = vec![
                    spec.regimes[k].name.clone(),
                    window_label(&spec.windows[wi]),
                    format!("{a:?}"),
                    if rr.is_finite() { format!("{rr:?}") } else { "inf".into() },
                    r.to_string(),
                ];
                match outcome {
                    FitOutcome::Ok { theta, physical, iterations } => {
                        rec.push("true".into());
                        rec.extend([physical.beta, physical.sigma, physical.epsilon].iter().map(|v| format!("{v:?}")));
                        rec.extend(theta.iter().map(|v| format!("{v:?}")));
                        rec.push(iterations.to_string());
                        rec.push(String::new());
                    }
                    FitOutcome::Failed(msg) => {
                        rec.push("false".into());
                        rec.extend(std::iter::repeat_n(String::new(), 7));
                        rec.push(msg.clone());
                    }
                }
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// One successful row of `estimates.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub regime: String,
    pub window: String,
    pub alpha: f64,
    pub range: String,
    pub rep: usize,
    pub physical: LjParams,
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.get(5) != Some("true") {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("bad number in column {i} of estimates.csv")))
        };
        out.push(EstimateRow {
            regime: rec[0].to_string(),
            window: rec[1].to_string(),
            alpha: num(2)?,
            range: rec[3].to_string(),
            rep: rec[4].parse().map_err(|_| Error::Format("bad rep index".into()))?,
            physical: LjParams { beta: num(6)?, sigma: num(7)?, epsilon: num(8)? },
        });
    }
    Ok(out)
}

/// QQ data of `(log β, σ, ε)` for a set of estimates.
pub fn qq_components(estimates: &[LjParams]) -> Result<[QqData; 3]> {
    let get = |f: fn(&LjParams) -> f64| estimates.iter().map(f).collect::<Vec<f64>>();
    Ok([qq_data(&get(|p| p.beta.ln()))?, qq_data(&get(|p| p.sigma))?, qq_data(&get(|p| p.epsilon))?])
}

pub const QQ_NAMES: [&str; 3] = ["logbeta", "sigma", "eps"];

/// Writes `qq_<param>.csv` files into `dir` and returns the squared
/// correlations.
pub fn write_qq(dir: &Path, estimates: &[LjParams]) -> Result<[f64; 3]> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let qq = qq_components(estimates)?;
    for (name, q) in QQ_NAMES.iter().zip(&qq) {
        let path = dir.join(format!("qq_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["normal_quantile", "standardized"])?;
        for (a, b) in &q.pairs {
            w.write_record([format!("{a:?}"), format!("{b:?}")])?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok([qq[0].r2, qq[1].r2, qq[2].r2])
}

