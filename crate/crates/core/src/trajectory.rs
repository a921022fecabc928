//! Recorded optimizer runs.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::losses::LossSpec;
use crate::optimizers::{Hyper, OptimizerKind, SamplerMode};

/// State at iterate `t`, plus the step that leaves it (`w(t) -> w(t+1)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub w: Vec<f64>,
    /// `w(t) - w(t-1)`; zero at `t = 1`.
    pub delta_w: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    /// Batch `B(t)` used by the outgoing step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<Vec<usize>>,
    /// Preconditioner `nu_hat(t)` of the outgoing step (adaptive methods).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_hat: Option<Vec<f64>>,
    /// Step size of the outgoing step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_t: Option<f64>,
}

impl StepRecord {
    pub fn delta_w_norm(&self) -> f64 {
        crate::linalg::norm(&self.delta_w)
    }
}

/// Record every iterate up to `dense_until`, then every `every`-th one (the final
/// iterate is always kept).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub every: u64,
    pub dense_until: u64,
}

impl Recording {
    pub fn dense() -> Self {
        Recording { every: 1, dense_until: u64::MAX }
    }

    pub fn keeps(&self, t: u64, last: u64) -> bool {
        t <= self.dense_until || t == last || (t - self.dense_until) % self.every.max(1) == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: OptimizerKind,
    pub loss: LossSpec,
    pub hyper: Hyper,
    pub sampler: SamplerMode,
    pub seed: u64,
    pub rng_algorithm: String,
    pub dataset: Dataset,
    pub recording: Recording,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    /// Longest prefix with `t = 1, 2, 3, ...` and no gaps.
    pub fn dense_prefix(&self) -> &[StepRecord] {
        let k = self
            .records
            .iter()
            .enumerate()
            .take_while(|(i, r)| r.t == *i as u64 + 1)
            .count();
        &self.records[..k]
    }

    /// Dense prefix up to `horizon`, erroring when fewer than two records exist.
    pub fn dense_until(&self, horizon: u64) -> Result<&[StepRecord]> {
        let dense = self.dense_prefix();
        let k = dense.iter().take_while(|r| r.t <= horizon).count();
        if k < 2 {
            return Err(invalid("diagnostic needs a densely recorded prefix of at least two steps"));
        }
        Ok(&dense[..k])
    }
}
