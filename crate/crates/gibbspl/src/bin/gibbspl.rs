use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gibbspl::harness::{read_estimates_csv, run_experiment, write_qq, RunOptions, QQ_NAMES};
use gibbspl::io::{
    parse_window, range_from_repr, read_pattern, rescale_from_repr, write_pattern, FitRecord, ModelDescription,
    NumOrWord,
};
use gibbspl::{Error, ExperimentSpec, Result};
use gibbspl_core::estimate::{fit, logistic_auto};
use gibbspl_core::inference::covariance;
use gibbspl_core::simulate::mh_sample;
use gibbspl_core::{BlockPartition, Contrast, FitConfig, MhConfig, ModelSpec, QuadratureGrid};

#[derive(Parser)]
#[command(name = "gibbspl", version, about = "Pseudolikelihood fitting and simulation of pairwise Gibbs point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate patterns with the birth-death-move sampler.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Target window `x0,x1,y0,y1`.
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        #[arg(long, default_value_t = 2.0)]
        margin: f64,
        /// Chain length; defaults to max(1e5, 200 ceil(beta |S|)).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        reps: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a pattern file.
    Fit {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, value_enum, default_value_t = Family::Lj)]
        model_family: Family,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Truncation radius or `inf`.
        #[arg(long, default_value = "inf")]
        range: String,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = ContrastArg::Pl)]
        contrast: ContrastArg,
        /// Logistic reference intensity or `auto` (n / |W|).
        #[arg(long, default_value = "auto")]
        rho: String,
        /// Length unit for the fit: a number, `auto` or `none`.
        #[arg(long, default_value = "none")]
        rescale_by: String,
        #[arg(long, default_value_t = 1e-8)]
        tol_grad: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Also estimate the sandwich covariance.
        #[arg(long)]
        covariance: bool,
        /// Block side for the covariance (default: alpha, or 1 when alpha = 0).
        #[arg(long)]
        block_side: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replication experiment.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        keep_patterns: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normal QQ data from an `estimates.csv`.
    Qq {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        regime: Option<String>,
        /// Window label as written in `estimates.csv`.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Lj,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContrastArg {
    Pl,
    Lr,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { model, window, margin, steps, seed, reps, out } => {
            let desc = ModelDescription::read(&model)?;
            let target = parse_window(&window)?;
            let scale = desc.lj.map(|p| p.sigma).unwrap_or(desc.spec.r0());
            let mut cfg = MhConfig::recommended(desc.theta.beta(), scale, &target);
            cfg.margin = margin;
            cfg.n_steps = match steps {
                Some(n) => n,
                None => gibbspl_core::simulate::default_steps(desc.theta.beta(), target.expand(margin)?.area()),
            };
            cfg.seed = seed;
            fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
            for r in 0..reps {
                cfg.stream = r;
                let pattern = mh_sample(&desc.spec, &desc.theta, &target, &cfg)?;
                write_pattern(&out.join(format!("pat_{r}.json")), &pattern)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            pattern,
            model_family,
            alpha,
            range,
            grid,
            contrast,
            rho,
            rescale_by,
            tol_grad,
            max_iter,
            covariance: want_cov,
            block_side,
            out,
        } => {
            let cfg = read_pattern(&pattern)?;
            let model = match model_family {
                Family::Lj => ModelSpec::lennard_jones(1.0)?,
                Family::Poisson => ModelSpec::poisson(),
            };
            let contrast = match (contrast, NumOrWord::parse(&rho)) {
                (ContrastArg::Pl, _) => Contrast::Pseudolikelihood,
                (ContrastArg::Lr, NumOrWord::Num(v)) => Contrast::Logistic { rho: v },
                (ContrastArg::Lr, NumOrWord::Word(w)) if w == "auto" => logistic_auto(&cfg),
                (ContrastArg::Lr, NumOrWord::Word(w)) => return Err(Error::Format(format!("bad rho {w:?}"))),
            };
            let fc = FitConfig {
                alpha,
                range: range_from_repr(&NumOrWord::parse(&range))?,
                grid,
                contrast,
                rescale: rescale_from_repr(&NumOrWord::parse(&rescale_by))?,
                tol_grad,
                max_iter,
            };
            let result = fit(&cfg, &model, &fc, None)?;
            let cov = if want_cov {
                let base = FitConfig { rescale: gibbspl_core::Rescale::None, ..fc.clone() };
                let g = QuadratureGrid::midpoint(&cfg.window().erode(alpha)?, grid)?;
                let part = match block_side {
                    Some(s) => BlockPartition::new(&g, s, 1)?,
                    None => BlockPartition::default_for(&g, alpha)?,
                };
                Some(covariance(&cfg, &model, &result.theta, &base, Some(&part))?)
            } else {
                None
            };
            FitRecord::new(&result, &fc, cov.as_ref()).write(&out)?;
            if result.degenerate {
                eprintln!("warning: contrast has no finite maximizer (no interacting pair in range)");
                return Ok(ExitCode::from(2));
            }
            if !result.converged {
                eprintln!("warning: fit did not converge ({} iterations)", result.iterations);
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { spec, jobs, keep_patterns, out } => {
            let spec = ExperimentSpec::read(&spec)?;
            let opts = RunOptions { jobs, keep_patterns, out_dir: out };
            if opts.out_dir.is_none() && spec.out_dir.is_none() {
                return Err(Error::Format("no output directory: pass --out or set out_dir".into()));
            }
            let report = run_experiment(&spec, &opts)?;
            for c in report.cells.iter().filter(|c| c.unreliable) {
                eprintln!(
                    "warning: cell {} alpha={} has {} failed fits of {}",
                    c.regime,
                    c.alpha,
                    c.reps_failed,
                    c.reps_ok + c.reps_failed
                );
            }
            Ok(if report.partial_failure { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Qq { estimates, regime, window, alpha, out } => {
            let rows = read_estimates_csv(&estimates)?;
            let selected: Vec<_> = rows
                .into_iter()
                .filter(|r| regime.as_ref().is_none_or(|g| &r.regime == g))
                .filter(|r| window.as_ref().is_none_or(|w| &r.window == w))
                .filter(|r| alpha.is_none_or(|a| (r.alpha - a).abs() <= 1e-12 * a.abs().max(1.0)))
                .collect();
            let mut keys: Vec<(String, String, String, String)> = selected
                .iter()
                .map(|r| (r.regime.clone(), r.window.clone(), format!("{:?}", r.alpha), r.range.clone()))
                .collect();
            keys.sort();
            keys.dedup();
            if keys.len() != 1 {
                return Err(Error::Format(format!(
                    "selection matches {} cells; narrow it with --regime, --window and --alpha",
                    keys.len()
                )));
            }
            if selected.len() < 20 {
                eprintln!("warning: only {} estimates; QQ plots need about 20 or more", selected.len());
            }
            let est: Vec<_> = selected.iter().map(|r| r.physical).collect();
            let r2 = write_qq(&out, &est)?;
            for (name, v) in QQ_NAMES.iter().zip(r2) {
                println!("{name}\t{v}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
