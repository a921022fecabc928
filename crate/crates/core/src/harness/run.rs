//! Config-driven runs with hashed, replayable outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::data::{check_separable, write_dataset, DatasetManifest};
use crate::diagnostics::{diagnose, DiagnosticsReport, SeriesRow, ViolationSummary, SERIES_COLUMNS};
use crate::error::{invalid, Error, Result};
use crate::io_util::atomic_write;
use crate::optimizers::{run, LrBoundReport};
use crate::rng::RNG_ALGORITHM;
use crate::trajectory::Trajectory;

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DATASET_FILE: &str = "dataset.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULT_FILE: &str = "run.json";

/// Everything needed to replay a run bit for bit. `hash` covers every other
/// field, including the digests of the output files, but no wall-clock data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetManifest,
    pub eta: f64,
    pub lr_bound: Option<LrBoundReport>,
    pub rng_algorithm: String,
    pub optimizer_seed: u64,
    /// File name to sha256 hex digest.
    pub files: BTreeMap<String, String>,
    pub hash: String,
}

impl RunManifest {
    fn digest(&self) -> Result<String> {
        let mut unhashed = self.clone();
        unhashed.hash.clear();
        Ok(sha256_hex(&serde_json::to_vec(&unhashed)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: Option<f64>,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub eta: f64,
    pub final_t: u64,
    pub final_loss: f64,
    pub final_w: Vec<f64>,
    pub final_angle: Option<f64>,
    pub out_dir: PathBuf,
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
    pub series_path: PathBuf,
    pub manifest_path: PathBuf,
    pub wall_clock_s: f64,
    pub violations: Option<ViolationSummary>,
    pub manifest_hash: String,
    pub checks: Vec<CheckOutcome>,
}

impl RunResult {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn load(dir: &Path) -> Result<RunResult> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(RESULT_FILE))?)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plot-ready CSV with the fixed column order and empty cells for inapplicable values.
pub fn series_csv(rows: &[SeriesRow]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(SERIES_COLUMNS)?;
    for r in rows {
        wtr.write_record([
            r.t.to_string(),
            r.loss.to_string(),
            r.grad_norm.to_string(),
            r.delta_w_norm.to_string(),
            opt_cell(r.xi),
            opt_cell(r.g),
            opt_cell(r.l_u),
            opt_cell(r.r_norm),
            opt_cell(r.angle),
            r.tl.to_string(),
        ])?;
    }
    wtr.into_inner().map_err(|e| invalid(e.to_string()))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let traj: Trajectory = serde_json::from_slice(&std::fs::read(path)?)?;
    if traj.records.is_empty() {
        return Err(invalid("trajectory has no records"));
    }
    Ok(traj)
}

/// Diagnoses a sealed trajectory and writes `report.json` and `series.csv` into `out`.
/// Returns the report together with the digests of the two files.
pub fn write_diagnostics(traj: &Trajectory, horizon: u64, out: &Path) -> Result<(DiagnosticsReport, BTreeMap<String, String>)> {
    let (report, rows) = diagnose(traj, horizon)?;
    let report_bytes = serde_json::to_vec_pretty(&report)?;
    let series_bytes = series_csv(&rows)?;
    atomic_write(&out.join(REPORT_FILE), &report_bytes)?;
    atomic_write(&out.join(SERIES_FILE), &series_bytes)?;
    let mut files = BTreeMap::new();
    files.insert(REPORT_FILE.to_string(), sha256_hex(&report_bytes));
    files.insert(SERIES_FILE.to_string(), sha256_hex(&series_bytes));
    Ok((report, files))
}

fn evaluate_checks(cfg: &ExperimentConfig, report: &DiagnosticsReport) -> Vec<CheckOutcome> {
    let c = &cfg.checks;
    let mut out = Vec::new();
    let mut push = |name: &str, value: Option<f64>, limit: Option<f64>| {
        if let Some(limit) = limit {
            let pass = value.is_some_and(|v| v <= limit);
            out.push(CheckOutcome { name: name.into(), value, limit, pass });
        }
    };
    push("final_angle", report.final_angle, c.max_final_angle);
    push("descent_violations", report.descent.map(|d| d.violations as f64), c.max_descent_violations.map(|v| v as f64));
    let identity = match (report.u_identity_max_err, report.g_identity_max_err) {
        (None, None) => None,
        (a, b) => Some(a.unwrap_or(0.0).max(b.unwrap_or(0.0))),
    };
    push("identity_err", identity, c.max_identity_err);
    push("r_window_ratio", report.r_window_ratio, c.max_r_window_ratio);
    push("g_window_growth", report.g_window_growth, c.max_g_window_growth);
    out
}

/// Executes the configured run and writes dataset, trajectory, diagnostics and
/// manifest into `out`, each file atomically.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let (ds, ds_manifest) = cfg.build_dataset()?;
    if !check_separable(&ds).separable {
        return Err(Error::NonSeparable);
    }
    let w1 = cfg.w1(ds.d())?;
    let (eta, lr_bound) = cfg.resolve_eta(&ds, &w1)?;
    let opt_cfg = cfg.optimizer_config(eta);
    let traj = run(&ds, cfg.loss.family, opt_cfg, w1, cfg.steps, cfg.recording())?;

    std::fs::create_dir_all(out)?;
    let mut files = BTreeMap::new();
    let ds_path = out.join(DATASET_FILE);
    write_dataset(&ds, &ds_manifest, &ds_path)?;
    files.insert(DATASET_FILE.to_string(), sha256_hex(&std::fs::read(&ds_path)?));
    let traj_bytes = serde_json::to_vec(&traj)?;
    atomic_write(&out.join(TRAJECTORY_FILE), &traj_bytes)?;
    files.insert(TRAJECTORY_FILE.to_string(), sha256_hex(&traj_bytes));
    let (report, diag_files) = write_diagnostics(&traj, cfg.diagnostic_horizon, out)?;
    files.extend(diag_files);

    let mut manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: VERSION.into(),
        config: cfg.clone(),
        dataset: ds_manifest,
        eta,
        lr_bound,
        rng_algorithm: RNG_ALGORITHM.into(),
        optimizer_seed: opt_cfg.seed,
        files,
        hash: String::new(),
    };
    manifest.hash = manifest.digest()?;
    atomic_write(&out.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;

    let last = traj.last();
    let result = RunResult {
        config: cfg.clone(),
        eta,
        final_t: last.t,
        final_loss: last.loss,
        final_w: last.w.clone(),
        final_angle: report.final_angle,
        out_dir: out.to_path_buf(),
        trajectory_path: out.join(TRAJECTORY_FILE),
        report_path: out.join(REPORT_FILE),
        series_path: out.join(SERIES_FILE),
        manifest_path: out.join(MANIFEST_FILE),
        wall_clock_s: started.elapsed().as_secs_f64(),
        violations: report.descent,
        manifest_hash: manifest.hash.clone(),
        checks: evaluate_checks(cfg, &report),
    };
    atomic_write(&out.join(RESULT_FILE), &serde_json::to_vec_pretty(&result)?)?;
    Ok(result)
}

/// Recomputes the manifest hash from its contents.
pub fn verify_manifest(path: &Path) -> Result<bool> {
    let m: RunManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    Ok(m.digest()? == m.hash)
}
