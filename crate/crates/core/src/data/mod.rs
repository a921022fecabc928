//! Label-folded datasets, generators, separability and spectral norm.

mod generators;
mod io;
mod separability;
mod spectral;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use generators::{
    make_illposed_dataset, make_soudry_dataset, ILLPOSED_N_OUTER, SOUDRY_DELTA_GEN,
    SOUDRY_SUPPORT, SOUDRY_W_HAT,
};
pub use io::{read_dataset, read_dataset_csv, write_dataset, write_dataset_csv, DatasetManifest};
pub use separability::{
    check_separable, SeparabilityMethod, SeparabilityWitness, PERCEPTRON_MAX_UPDATES,
    WOLFE_TOL,
};
pub use spectral::{spectral_norm, SpectralNorm, POWER_MAX_ITERS, POWER_REL_TOL};

/// Folded points `y_i * x_i`, all of the same dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    d: usize,
    sigma: OnceLock<SpectralNorm>,
}

#[derive(Clone, Serialize, Deserialize)]
struct DatasetRepr {
    points: Vec<Vec<f64>>,
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;
    fn try_from(r: DatasetRepr) -> Result<Self> {
        Dataset::new(r.points)
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(ds: Dataset) -> Self {
        DatasetRepr { points: ds.points }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl Dataset {
    /// Takes already-folded points.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || d == 0 {
            return Err(invalid("dataset needs n >= 1 and d >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("point {i}")));
            }
        }
        Ok(Dataset { points, d, sigma: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Largest singular value of the d x N point matrix, computed once.
    pub fn sigma_max(&self) -> f64 {
        self.spectral().value
    }

    pub fn spectral(&self) -> &SpectralNorm {
        self.sigma.get_or_init(|| spectral::power_iteration(&self.points, self.d))
    }

    pub fn sigma_is_cached(&self) -> bool {
        self.sigma.get().is_some()
    }

    pub fn max_point_norm(&self) -> f64 {
        self.points.iter().map(|p| crate::linalg::norm(p)).fold(0.0, f64::max)
    }

    /// Every point multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Dataset> {
        Dataset::new(self.points.iter().map(|p| crate::linalg::scale(p, s)).collect())
    }

    /// Appends points (used to build supersets in tests and experiments).
    pub fn with_points(&self, extra: &[Vec<f64>]) -> Result<Dataset> {
        let mut pts = self.points.clone();
        pts.extend(extra.iter().cloned());
        Dataset::new(pts)
    }
}

/// `point_i = label_i * feature_i` with labels in {+1, -1}.
pub fn fold_labels(features: &[Vec<f64>], labels: &[f64]) -> Result<Dataset> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: labels.len() });
    }
    let mut points = Vec::with_capacity(features.len());
    for (x, &y) in features.iter().zip(labels) {
        if y != 1.0 && y != -1.0 {
            return Err(invalid(format!("label {y} is not +1 or -1")));
        }
        points.push(x.iter().map(|v| y * v).collect());
    }
    Dataset::new(points)
}
