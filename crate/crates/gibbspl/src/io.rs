//! JSON and CSV file formats for patterns, models and fit results.
//!
//! Floating-point values are written in Rust's shortest round-trip form, so
//! reading a file back reproduces every coordinate bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use gibbspl_core::estimate::FitResult;
use gibbspl_core::{
    BasisFunction, Configuration, Contrast, CovarianceReport, FitConfig, LjParams, Matrix, ModelSpec, Point, Rescale,
    ThetaNatural, Window,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// `[[x0, x1], [y0, y1]]`.
pub type WindowRepr = [[f64; 2]; 2];

pub fn window_repr(w: &Window) -> WindowRepr {
    [[w.lo()[0], w.hi()[0]], [w.lo()[1], w.hi()[1]]]
}

pub fn window_from_repr(r: &WindowRepr) -> Result<Window> {
    Ok(Window::new([r[0][0], r[1][0]], [r[0][1], r[1][1]])?)
}

/// Parses `x0,x1,y0,y1`.
pub fn parse_window(s: &str) -> Result<Window> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad window coordinate {t:?}"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(Error::Format("window needs four numbers x0,x1,y0,y1".into()));
    }
    window_from_repr(&[[v[0], v[1]], [v[2], v[3]]])
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_string(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct PatternFile {
    window: WindowRepr,
    points: Vec<[f64; 2]>,
}

pub fn pattern_to_json(cfg: &Configuration) -> String {
    let file = PatternFile {
        window: window_repr(cfg.window()),
        points: cfg.points().iter().map(|p| [p.x, p.y]).collect(),
    };
    serde_json::to_string(&file).expect("finite pattern serializes")
}

pub fn pattern_from_json(s: &str) -> Result<Configuration> {
    let file: PatternFile = serde_json::from_str(s)?;
    let window = window_from_repr(&file.window)?;
    Ok(Configuration::new(window, file.points.iter().map(|p| Point::new(p[0], p[1])).collect())?)
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowFile {
    window: WindowRepr,
}

/// Sidecar holding the window of a CSV pattern: `pat.csv` → `pat.window.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("window.json")
}

pub fn write_pattern_csv(path: &Path, cfg: &Configuration) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for p in cfg.points() {
        w.write_record([format!("{:?}", p.x), format!("{:?}", p.y)])?;
    }
    w.flush().map_err(io_err(path))?;
    let side = serde_json::to_string(&WindowFile { window: window_repr(cfg.window()) })?;
    write_string(&sidecar_path(path), &side)
}

pub fn read_pattern_csv(path: &Path) -> Result<Configuration> {
    let side: WindowFile = serde_json::from_str(&read_to_string(&sidecar_path(path))?)?;
    let window = window_from_repr(&side.window)?;
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(Error::Format(format!("{}: expected header x,y", path.display())));
    }
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i].trim().parse::<f64>().map_err(|_| Error::Format(format!("bad coordinate {:?}", &rec[i])))
        };
        points.push(Point::new(num(0)?, num(1)?));
    }
    Ok(Configuration::new(window, points)?)
}

/// Writes JSON or CSV by extension (`.csv` selects CSV).
pub fn write_pattern(path: &Path, cfg: &Configuration) -> Result<()> {
    if is_csv(path) {
        write_pattern_csv(path, cfg)
    } else {
        write_string(path, &pattern_to_json(cfg))
    }
}

pub fn read_pattern(path: &Path) -> Result<Configuration> {
    if is_csv(path) {
        read_pattern_csv(path)
    } else {
        pattern_from_json(&read_to_string(path)?)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// A number or a keyword such as `"inf"`, `"auto"` or `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrWord {
    Num(f64),
    Word(String),
}

impl NumOrWord {
    pub fn parse(s: &str) -> NumOrWord {
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => NumOrWord::Num(v),
            _ => NumOrWord::Word(s.trim().to_ascii_lowercase()),
        }
    }
}

pub fn range_repr(r: f64) -> NumOrWord {
    if r.is_finite() {
        NumOrWord::Num(r)
    } else {
        NumOrWord::Word("inf".into())
    }
}

pub fn range_from_repr(r: &NumOrWord) -> Result<f64> {
    match r {
        NumOrWord::Num(v) => Ok(*v),
        NumOrWord::Word(w) if matches!(w.as_str(), "inf" | "infinity") => Ok(f64::INFINITY),
        NumOrWord::Word(w) => Err(Error::Format(format!("bad range {w:?}"))),
    }
}

pub fn rescale_repr(r: Rescale) -> NumOrWord {
    match r {
        Rescale::None => NumOrWord::Word("none".into()),
        Rescale::Auto => NumOrWord::Word("auto".into()),
        Rescale::By(v) => NumOrWord::Num(v),
    }
}

pub fn rescale_from_repr(r: &NumOrWord) -> Result<Rescale> {
    match r {
        NumOrWord::Num(v) => Ok(Rescale::By(*v)),
        NumOrWord::Word(w) if w == "none" => Ok(Rescale::None),
        NumOrWord::Word(w) if w == "auto" => Ok(Rescale::Auto),
        NumOrWord::Word(w) => Err(Error::Format(format!("bad rescale {w:?}"))),
    }
}

/// Model description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelFile {
    Lj {
        beta: f64,
        sigma: f64,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<f64>,
    },
    Powerlaw {
        gammas: Vec<f64>,
        theta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<f64>,
    },
}

/// A model together with its parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescription {
    pub spec: ModelSpec,
    pub theta: ThetaNatural,
    pub lj: Option<LjParams>,
}

impl ModelDescription {
    /// Lennard-Jones model with tail threshold `r0 = σ`.
    pub fn lennard_jones(p: LjParams) -> Result<Self> {
        Ok(ModelDescription { spec: ModelSpec::lennard_jones(p.sigma)?, theta: p.to_natural(), lj: Some(p) })
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        match file {
            ModelFile::Lj { beta, sigma, epsilon, theta, r0 } => {
                let p = LjParams::new(*beta, *sigma, *epsilon)?;
                let spec = ModelSpec::lennard_jones(r0.unwrap_or(*sigma))?;
                let theta = match theta {
                    Some(t) if t.len() == 3 => ThetaNatural::new(t.clone()),
                    Some(t) => return Err(Error::Format(format!("lj theta needs 3 entries, got {}", t.len()))),
                    None => p.to_natural(),
                };
                Ok(ModelDescription { spec, theta, lj: Some(p) })
            }
            ModelFile::Powerlaw { gammas, theta, r0 } => {
                let basis = gammas.iter().map(|g| BasisFunction::PowerLaw { gamma: *g }).collect();
                let spec = ModelSpec::new(basis, r0.unwrap_or(1.0))?;
                if theta.len() != spec.p() {
                    return Err(Error::Format(format!("theta needs {} entries, got {}", spec.p(), theta.len())));
                }
                Ok(ModelDescription { spec, theta: ThetaNatural::new(theta.clone()), lj: None })
            }
        }
    }

    pub fn to_file(&self) -> ModelFile {
        match &self.lj {
            Some(p) => ModelFile::Lj {
                beta: p.beta,
                sigma: p.sigma,
                epsilon: p.epsilon,
                theta: Some(self.theta.as_slice().to_vec()),
                r0: Some(self.spec.r0()),
            },
            None => ModelFile::Powerlaw {
                gammas: self.spec.basis().iter().map(|b| b.exponent()).collect(),
                theta: self.theta.as_slice().to_vec(),
                r0: Some(self.spec.r0()),
            },
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&read_to_string(path)?)?;
        Self::from_file(&file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_string(path, &serde_json::to_string_pretty(&self.to_file())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRecord {
    pub beta: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl From<LjParams> for PhysicalRecord {
    fn from(p: LjParams) -> Self {
        PhysicalRecord { beta: p.beta, sigma: p.sigma, epsilon: p.epsilon }
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRecord {
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    #[serde(rename = "Sigma")]
    pub sigma: Option<Vec<Vec<f64>>>,
    pub sandwich: Option<Vec<Vec<f64>>>,
    pub valid: bool,
    pub clipped: bool,
    pub blocks: usize,
}

impl From<&CovarianceReport> for CovarianceRecord {
    fn from(r: &CovarianceReport) -> Self {
        CovarianceRecord {
            u: rows(&r.u),
            sigma: r.sigma.as_ref().map(rows),
            sandwich: r.sandwich.as_ref().map(rows),
            valid: r.valid,
            clipped: r.clipped,
            blocks: r.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub grad_threshold: f64,
    pub regularized: bool,
    pub degenerate: bool,
    pub neg_contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigRecord {
    pub alpha: f64,
    pub range: NumOrWord,
    pub grid: usize,
    /// `"pl"` or `"lr"`.
    pub contrast: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub rescale: NumOrWord,
    pub tol_grad: f64,
    pub max_iter: usize,
}

impl From<&FitConfig> for FitConfigRecord {
    fn from(fc: &FitConfig) -> Self {
        let (contrast, rho) = match fc.contrast {
            Contrast::Pseudolikelihood => ("pl", None),
            Contrast::Logistic { rho } => ("lr", Some(rho)),
        };
        FitConfigRecord {
            alpha: fc.alpha,
            range: range_repr(fc.range),
            grid: fc.grid,
            contrast: contrast.into(),
            rho,
            rescale: rescale_repr(fc.rescale),
            tol_grad: fc.tol_grad,
            max_iter: fc.max_iter,
        }
    }
}

impl FitConfigRecord {
    pub fn to_config(&self) -> Result<FitConfig> {
        let contrast = match (self.contrast.as_str(), self.rho) {
            ("pl", _) => Contrast::Pseudolikelihood,
            ("lr", Some(rho)) => Contrast::Logistic { rho },
            ("lr", None) => return Err(Error::Format("lr contrast needs rho".into())),
            (c, _) => return Err(Error::Format(format!("unknown contrast {c:?}"))),
        };
        Ok(FitConfig {
            alpha: self.alpha,
            range: range_from_repr(&self.range)?,
            grid: self.grid,
            contrast,
            rescale: rescale_from_repr(&self.rescale)?,
            tol_grad: self.tol_grad,
            max_iter: self.max_iter,
        })
    }
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub theta: Vec<f64>,
    pub physical: Option<PhysicalRecord>,
    pub n_data: usize,
    pub convergence: ConvergenceRecord,
    pub covariance: Option<CovarianceRecord>,
    pub fit_config: FitConfigRecord,
}

impl FitRecord {
    pub fn new(result: &FitResult, fc: &FitConfig, covariance: Option<&CovarianceReport>) -> Self {
        FitRecord {
            theta: result.theta.as_slice().to_vec(),
            physical: result.physical.map(Into::into),
            n_data: result.n_data,
            convergence: ConvergenceRecord {
                converged: result.converged,
                iterations: result.iterations,
                grad_norm: result.grad_norm,
                grad_threshold: result.grad_threshold,
                regularized: result.regularized,
                degenerate: result.degenerate,
                neg_contrast: result.neg_contrast,
            },
            covariance: covariance.map(Into::into),
            fit_config: fc.into(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_string(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path)?)?)
    }
}
