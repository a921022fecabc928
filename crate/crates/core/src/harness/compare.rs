//! Side-by-side comparison of runs on a common dataset and loss.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{read_trajectory, RunResult};
use crate::diagnostics::{angle_gap, rate_estimates};
use crate::error::{invalid, Result};
use crate::io_util::atomic_write;
use crate::linalg::norm;
use crate::maxmargin::{solve_max_margin, DEFAULT_TOL};
use crate::optimizers::OptimizerKind;

pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparedRun {
    pub label: String,
    pub kind: OptimizerKind,
    pub eta: f64,
    pub beta1: f64,
    pub final_t: u64,
    pub final_angle: Option<f64>,
    /// Median `t L` over the last decade, when the run is long enough.
    pub tl_plateau: Option<f64>,
    pub wnorm_over_lnt_tail: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedRow {
    pub t: u64,
    pub angle: Vec<Option<f64>>,
    pub tl: Vec<f64>,
    pub wnorm_over_lnt: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<ComparedRun>,
    /// `tl_plateau(run i) / tl_plateau(run 0)`.
    pub tl_ratios: Vec<Option<f64>>,
    /// `eta(run 0) / eta(run i)`, the ratio predicted for `tl_ratios` by `1/eta` scaling.
    pub eta_ratios: Vec<f64>,
    /// Rows at the steps recorded by every run.
    pub aligned: Vec<AlignedRow>,
}

pub fn compare_runs(results: &[RunResult]) -> Result<Comparison> {
    if results.len() < 2 {
        return Err(invalid(format!("comparison needs at least two runs, got {}", results.len())));
    }
    let trajs = results.iter().map(|r| read_trajectory(&r.trajectory_path)).collect::<Result<Vec<_>>>()?;
    let first = &trajs[0];
    for (r, t) in results.iter().zip(&trajs).skip(1) {
        if t.dataset != first.dataset || t.loss != first.loss {
            return Err(invalid(format!(
                "run {} uses a different dataset or loss than {}",
                r.out_dir.display(),
                results[0].out_dir.display()
            )));
        }
    }
    let w_hat = solve_max_margin(&first.dataset, DEFAULT_TOL)?.w_hat;

    let runs: Vec<ComparedRun> = results
        .iter()
        .zip(&trajs)
        .map(|(r, t)| {
            let rates = rate_estimates(&t.records).ok();
            ComparedRun {
                label: r.out_dir.display().to_string(),
                kind: t.kind,
                eta: t.hyper.eta,
                beta1: t.hyper.beta1,
                final_t: r.final_t,
                final_angle: r.final_angle,
                tl_plateau: rates.map(|x| x.tl_plateau),
                wnorm_over_lnt_tail: rates.map(|x| x.wnorm_over_lnt_tail),
            }
        })
        .collect();
    let tl_ratios = runs
        .iter()
        .map(|r| Some(r.tl_plateau? / runs[0].tl_plateau?))
        .collect();
    let eta_ratios = runs.iter().map(|r| runs[0].eta / r.eta).collect();

    let common = trajs
        .iter()
        .map(|t| t.records.iter().map(|r| r.t).collect::<BTreeSet<u64>>())
        .reduce(|a, b| a.intersection(&b).copied().collect())
        .unwrap_or_default();
    let mut cursors = vec![0usize; trajs.len()];
    let mut aligned = Vec::with_capacity(common.len());
    for &t in &common {
        let mut row = AlignedRow { t, angle: Vec::new(), tl: Vec::new(), wnorm_over_lnt: Vec::new() };
        for (traj, cur) in trajs.iter().zip(cursors.iter_mut()) {
            while traj.records[*cur].t < t {
                *cur += 1;
            }
            let rec = &traj.records[*cur];
            row.angle.push(angle_gap(&rec.w, &w_hat).ok());
            row.tl.push(t as f64 * rec.loss);
            row.wnorm_over_lnt.push((t > 1).then(|| norm(&rec.w) / (t as f64).ln()));
        }
        aligned.push(row);
    }
    Ok(Comparison { runs, tl_ratios, eta_ratios, aligned })
}

/// Writes `comparison.json` and the aligned series as `comparison.csv`
/// (`t`, then `angle_i,tL_i,wnorm_lnt_i` per run).
pub fn write_comparison(cmp: &Comparison, out: &Path) -> Result<()> {
    atomic_write(&out.join(COMPARISON_JSON), &serde_json::to_vec_pretty(cmp)?)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for i in 0..cmp.runs.len() {
        header.extend([format!("angle_{i}"), format!("tL_{i}"), format!("wnorm_lnt_{i}")]);
    }
    wtr.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &cmp.aligned {
        let mut rec = vec![row.t.to_string()];
        for i in 0..cmp.runs.len() {
            rec.extend([cell(row.angle[i]), row.tl[i].to_string(), cell(row.wnorm_over_lnt[i])]);
        }
        wtr.write_record(&rec)?;
    }
    atomic_write(&out.join(COMPARISON_CSV), &wtr.into_inner().map_err(|e| invalid(e.to_string()))?)
}
