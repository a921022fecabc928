//! Command-line entry point. Exit codes: 0 success, 1 usage or config error,
//! 2 numeric abort, 3 failed `--assert` checks.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::compare::{compare_runs, write_comparison};
use super::config::{load_config, DatasetConfig};
use super::run::{read_trajectory, run_experiment, write_diagnostics, RunResult};
use crate::data::{make_illposed_dataset, make_soudry_dataset, read_dataset, write_dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::maxmargin::{solve_max_margin, DEFAULT_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

pub const MARGIN_FILE: &str = "margin.json";

#[derive(Parser, Debug)]
#[command(name = "momentum-margin", version, about = "Momentum optimizers, max-margin solutions and implicit-bias diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    Soudry,
    Illposed,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset CSV plus its JSON manifest.
    GenData {
        /// Generator; may be omitted when --config supplies a dataset section.
        generator: Option<Generator>,
        /// Config file or preset whose [dataset] section is used.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_extra: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Solve the hard-margin problem for a dataset CSV.
    SolveMargin {
        /// Dataset CSV; may be omitted when --config supplies a dataset section.
        dataset: Option<PathBuf>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the generator seed of a --config dataset.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run an experiment from a config file or preset.
    Run {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
        /// Overrides the optimizer (sampling) seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with code 3 when any configured check fails.
        #[arg(long)]
        assert: bool,
    },
    /// Diagnose a trajectory file.
    Diagnose {
        trajectory: PathBuf,
        /// Config file or preset supplying diagnostic_horizon.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
        /// Accepted for a uniform interface; diagnosis is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two or more run directories.
    Compare {
        #[arg(required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Accepted for a uniform interface; runs carry their own configs.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Accepted for a uniform interface; comparison is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericAbort { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn note_unused(flag: &str, present: bool) {
    if present {
        eprintln!("note: {flag} has no effect on this subcommand");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &serde_json::to_vec_pretty(value)?)
}

#[derive(Serialize)]
struct MarginOutput<'a> {
    w_hat: &'a [f64],
    gamma: f64,
    support: &'a [usize],
    v: &'a [f64],
    kkt_residual: f64,
}

fn dataset_from_config(arg: &str, seed: Option<u64>) -> Result<DatasetConfig> {
    let mut ds = load_config(arg)?.dataset;
    if let Some(s) = seed {
        match &mut ds {
            DatasetConfig::Soudry { seed, .. } | DatasetConfig::Illposed { seed, .. } => *seed = s,
            DatasetConfig::File { .. } => {}
        }
    }
    Ok(ds)
}

fn gen_data(generator: Option<Generator>, config: Option<String>, out: &Path, seed: Option<u64>, n_extra: Option<usize>, scale: Option<f64>) -> Result<()> {
    let spec = match (generator, config) {
        (Some(Generator::Soudry), _) => DatasetConfig::Soudry { seed: seed.unwrap_or(0), n_extra: n_extra.unwrap_or(0) },
        (Some(Generator::Illposed), _) => DatasetConfig::Illposed { seed: seed.unwrap_or(0), scale: scale.unwrap_or(10.0) },
        (None, Some(c)) => dataset_from_config(&c, seed)?,
        (None, None) => return Err(Error::Config("gen-data needs a generator or --config".into())),
    };
    let (ds, generator, seed, params) = match spec {
        DatasetConfig::Soudry { seed, n_extra } => {
            (make_soudry_dataset(seed, n_extra), "soudry", seed, serde_json::json!({ "n_extra": n_extra }))
        }
        DatasetConfig::Illposed { seed, scale } => {
            (make_illposed_dataset(seed, scale)?, "illposed", seed, serde_json::json!({ "scale": scale }))
        }
        DatasetConfig::File { .. } => return Err(Error::Config("gen-data cannot generate a file dataset".into())),
    };
    let manifest = DatasetManifest { n: ds.n(), d: ds.d(), generator: generator.into(), seed: Some(seed), params };
    let path = out.join("dataset.csv");
    write_dataset(&ds, &manifest, &path)?;
    println!("wrote {} ({} points, d = {})", path.display(), ds.n(), ds.d());
    Ok(())
}

fn solve_margin(dataset: Option<PathBuf>, config: Option<String>, out: &Path, seed: Option<u64>, tol: f64) -> Result<()> {
    let ds = match (dataset, config) {
        (Some(p), _) => read_dataset(&p)?.0,
        (None, Some(c)) => {
            let mut cfg = load_config(&c)?;
            cfg.dataset = dataset_from_config(&c, seed)?;
            cfg.build_dataset()?.0
        }
        (None, None) => return Err(Error::Config("solve-margin needs a dataset path or --config".into())),
    };
    let sol = solve_max_margin(&ds, tol)?;
    let path = out.join(MARGIN_FILE);
    write_json(
        &path,
        &MarginOutput { w_hat: &sol.w_hat, gamma: sol.gamma, support: &sol.support, v: &sol.dual_v, kkt_residual: sol.kkt_residual },
    )?;
    println!("gamma = {} w_hat = {:?} support = {:?}", sol.gamma, sol.w_hat, sol.support);
    Ok(())
}

fn run_cmd(config: &str, out: &Path, seed: Option<u64>, assert: bool) -> Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.optimizer.seed = s;
    }
    let res = run_experiment(&cfg, out)?;
    print_run(&res);
    Ok(if assert && !res.all_checks_pass() { EXIT_ASSERT } else { EXIT_OK })
}

fn print_run(res: &RunResult) {
    println!(
        "{}: t = {} loss = {:.6e} angle = {} eta = {} manifest = {}",
        res.config.optimizer.kind.name(),
        res.final_t,
        res.final_loss,
        res.final_angle.map(|a| format!("{a:.6e}")).unwrap_or_else(|| "n/a".into()),
        res.eta,
        res.manifest_hash
    );
    for c in &res.checks {
        let value = c.value.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into());
        println!("{} {}: {} <= {:e}", if c.pass { "PASS" } else { "FAIL" }, c.name, value, c.limit);
    }
}

fn diagnose_cmd(trajectory: &Path, config: Option<String>, out: &Path, horizon: Option<u64>) -> Result<()> {
    let traj = read_trajectory(trajectory)?;
    let horizon = match (horizon, config) {
        (Some(h), _) => h,
        (None, Some(c)) => load_config(&c)?.diagnostic_horizon,
        (None, None) => traj.recording.dense_until,
    };
    let (report, _) = write_diagnostics(&traj, horizon, out)?;
    println!(
        "{}: final angle = {} descent violations = {}",
        report.kind.name(),
        report.final_angle.map(|a| format!("{a:.6e}")).unwrap_or_else(|| "n/a".into()),
        report.descent.map(|d| d.violations.to_string()).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn compare_cmd(runs: &[PathBuf], out: &Path) -> Result<()> {
    let results = runs.iter().map(|d| RunResult::load(d)).collect::<Result<Vec<_>>>()?;
    let cmp = compare_runs(&results)?;
    write_comparison(&cmp, out)?;
    for (r, ratio) in cmp.runs.iter().zip(&cmp.tl_ratios) {
        println!(
            "{} eta = {} beta1 = {} tL ratio = {}",
            r.label,
            r.eta,
            r.beta1,
            ratio.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
        );
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let outcome = match parsed.command {
        Command::GenData { generator, config, out, seed, n_extra, scale } => {
            gen_data(generator, config, &out, seed, n_extra, scale).map(|_| EXIT_OK)
        }
        Command::SolveMargin { dataset, config, out, seed, tol } => solve_margin(dataset, config, &out, seed, tol).map(|_| EXIT_OK),
        Command::Run { config, out, seed, assert } => run_cmd(&config, &out, seed, assert),
        Command::Diagnose { trajectory, config, out, horizon, seed } => {
            note_unused("--seed", seed.is_some());
            diagnose_cmd(&trajectory, config, &out, horizon).map(|_| EXIT_OK)
        }
        Command::Compare { runs, config, out, seed } => {
            note_unused("--config", config.is_some());
            note_unused("--seed", seed.is_some());
            compare_cmd(&runs, &out).map(|_| EXIT_OK)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
