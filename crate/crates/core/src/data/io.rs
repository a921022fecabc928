//! CSV (header `x0,...,x{d-1}`) plus a JSON sidecar manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Result};
use crate::io_util::{atomic_write, fmt_f64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub d: usize,
    pub generator: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record((0..ds.d()).map(|j| format!("x{j}")))?;
    for p in ds.points() {
        wtr.write_record(p.iter().map(|v| fmt_f64(*v)))?;
    }
    let bytes = wtr.into_inner().map_err(|e| invalid(e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    for (j, h) in headers.iter().enumerate() {
        if h.trim() != format!("x{j}") {
            return Err(invalid(format!("unexpected column header `{h}` at position {j}")));
        }
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| invalid(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        points.push(p);
    }
    Dataset::new(points)
}

fn sidecar(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<stem>.csv` and its `<stem>.json` manifest.
pub fn write_dataset(ds: &Dataset, manifest: &DatasetManifest, csv_path: &Path) -> Result<()> {
    write_dataset_csv(ds, csv_path)?;
    atomic_write(&sidecar(csv_path), serde_json::to_string_pretty(manifest)?.as_bytes())
}

/// Reads a dataset CSV and, if present, its sidecar manifest (checked against n, d).
pub fn read_dataset(csv_path: &Path) -> Result<(Dataset, Option<DatasetManifest>)> {
    let ds = read_dataset_csv(csv_path)?;
    let side = sidecar(csv_path);
    let manifest = if side.exists() {
        let m: DatasetManifest = serde_json::from_slice(&std::fs::read(&side)?)?;
        if m.n != ds.n() || m.d != ds.d() {
            return Err(invalid(format!(
                "manifest says {}x{}, csv has {}x{}",
                m.n,
                m.d,
                ds.n(),
                ds.d()
            )));
        }
        Some(m)
    } else {
        None
    };
    Ok((ds, manifest))
}
