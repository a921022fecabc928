//! Experiment configuration: a versioned TOML document or a built-in preset name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{make_illposed_dataset, make_soudry_dataset, read_dataset, Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::optimizers::{
    lr_bound_adam, lr_bound_gdm, lr_bound_sgdm, Hyper, LrBoundReport, OptimizerConfig, OptimizerKind, SamplerMode, ADAM_T_MAX,
};
use crate::trajectory::Recording;

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [(&str, &str); 10] = [
    ("gd_soudry", include_str!("../../presets/gd_soudry.toml")),
    ("gdm_soudry", include_str!("../../presets/gdm_soudry.toml")),
    ("sgd_soudry", include_str!("../../presets/sgd_soudry.toml")),
    ("sgdm_soudry", include_str!("../../presets/sgdm_soudry.toml")),
    ("adam_soudry", include_str!("../../presets/adam_soudry.toml")),
    ("adam_bound_soudry", include_str!("../../presets/adam_bound_soudry.toml")),
    ("rmsprop_soudry", include_str!("../../presets/rmsprop_soudry.toml")),
    ("sahb_soudry", include_str!("../../presets/sahb_soudry.toml")),
    ("gd_illposed", include_str!("../../presets/gd_illposed.toml")),
    ("adam_illposed", include_str!("../../presets/adam_illposed.toml")),
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub steps: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_horizon")]
    pub diagnostic_horizon: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub loss: LossConfig,
    pub optimizer: OptimizerSection,
    pub lr_policy: LrPolicy,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

fn default_record_every() -> u64 {
    10
}

fn default_horizon() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Soudry {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        n_extra: usize,
    },
    Illposed {
        #[serde(default)]
        seed: u64,
        scale: f64,
    },
    /// Folded points from a CSV file, relative paths resolved against the config file.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub family: LossSpec,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { family: LossSpec::Logistic }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerMode,
    #[serde(default)]
    pub seed: u64,
    /// RMSProp only; SAHB and Adam always bias-correct.
    #[serde(default)]
    pub bias_correction: Option<bool>,
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_batch() -> usize {
    1
}

fn default_sampler() -> SamplerMode {
    SamplerMode::WithoutReplacement
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrPolicy {
    Explicit { eta: f64 },
    /// `fraction` times the method's theoretical step-size ceiling.
    BoundFraction { fraction: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Initial iterate; zeros when absent.
    #[serde(default)]
    pub w1: Option<Vec<f64>>,
}

/// Thresholds enforced by `run --assert`; absent entries are not checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub max_final_angle: Option<f64>,
    pub max_descent_violations: Option<usize>,
    pub max_identity_err: Option<f64>,
    pub max_r_window_ratio: Option<f64>,
    pub max_g_window_growth: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(config_err(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        if self.steps < 1 {
            return Err(config_err("steps must be at least 1"));
        }
        if self.record_every < 1 {
            return Err(config_err("record_every must be at least 1"));
        }
        match self.lr_policy {
            LrPolicy::Explicit { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return Err(config_err(format!("eta must be positive and finite, got {eta}")));
            }
            LrPolicy::BoundFraction { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                return Err(config_err(format!("fraction must lie in (0, 1], got {fraction}")));
            }
            _ => {}
        }
        if let DatasetConfig::Illposed { scale, .. } = self.dataset {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(config_err(format!("scale must be positive, got {scale}")));
            }
        }
        Ok(())
    }

    pub fn recording(&self) -> Recording {
        Recording { every: self.record_every, dense_until: self.diagnostic_horizon }
    }

    /// Makes a `file` dataset path absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetConfig::File { path } = &mut self.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn build_dataset(&self) -> Result<(Dataset, DatasetManifest)> {
        match &self.dataset {
            DatasetConfig::Soudry { seed, n_extra } => {
                let ds = make_soudry_dataset(*seed, *n_extra);
                let params = serde_json::json!({ "n_extra": n_extra });
                Ok((ds.clone(), manifest(&ds, "soudry", Some(*seed), params)))
            }
            DatasetConfig::Illposed { seed, scale } => {
                let ds = make_illposed_dataset(*seed, *scale)?;
                let params = serde_json::json!({ "scale": scale });
                Ok((ds.clone(), manifest(&ds, "illposed", Some(*seed), params)))
            }
            DatasetConfig::File { path } => {
                let (ds, m) = read_dataset(path)?;
                let m = m.unwrap_or_else(|| {
                    manifest(&ds, "file", None, serde_json::json!({ "path": path.display().to_string() }))
                });
                Ok((ds, m))
            }
        }
    }

    pub fn w1(&self, d: usize) -> Result<Vec<f64>> {
        match &self.init.w1 {
            Some(w) if w.len() != d => Err(Error::DimensionMismatch { expected: d, got: w.len() }),
            Some(w) => Ok(w.clone()),
            None => Ok(vec![0.0; d]),
        }
    }

    /// The step size actually used, with the bound report when bound-relative.
    pub fn resolve_eta(&self, ds: &Dataset, w1: &[f64]) -> Result<(f64, Option<LrBoundReport>)> {
        let fraction = match self.lr_policy {
            LrPolicy::Explicit { eta } => return Ok((eta, None)),
            LrPolicy::BoundFraction { fraction } => fraction,
        };
        let o = &self.optimizer;
        let spec = self.loss.family;
        let report = match o.kind {
            OptimizerKind::Gd | OptimizerKind::Gdm => lr_bound_gdm(ds, spec, w1)?,
            OptimizerKind::Sgd => lr_bound_sgdm(ds, spec, o.batch_size, 0.0)?,
            OptimizerKind::Sgdm => lr_bound_sgdm(ds, spec, o.batch_size, o.beta1)?,
            OptimizerKind::Adam => lr_bound_adam(ds, spec, o.beta1, o.beta2, o.epsilon, w1, ADAM_T_MAX)?,
            OptimizerKind::Rmsprop | OptimizerKind::Sahb => {
                return Err(config_err(format!("no step-size bound is defined for {}", o.kind.name())));
            }
        };
        Ok((fraction * report.bound, Some(report)))
    }

    pub fn optimizer_config(&self, eta: f64) -> OptimizerConfig {
        let o = &self.optimizer;
        let mut hyper = match o.kind {
            OptimizerKind::Gd | OptimizerKind::Gdm => Hyper::gdm(eta, o.beta1),
            OptimizerKind::Sgd | OptimizerKind::Sgdm => Hyper::sgdm(eta, o.beta1, o.batch_size),
            OptimizerKind::Adam => Hyper::adam(eta, o.beta1, o.beta2, o.epsilon),
            OptimizerKind::Rmsprop => Hyper::rmsprop(eta, o.beta2, o.epsilon, o.batch_size),
            OptimizerKind::Sahb => Hyper::sahb(eta, o.beta1, o.beta2, o.epsilon, o.batch_size),
        };
        if let (OptimizerKind::Rmsprop, Some(bc)) = (o.kind, o.bias_correction) {
            hyper.bias_correction = bc;
        }
        OptimizerConfig::new(o.kind, hyper, o.sampler, o.seed)
    }
}

fn manifest(ds: &Dataset, generator: &str, seed: Option<u64>, params: serde_json::Value) -> DatasetManifest {
    DatasetManifest { n: ds.n(), d: ds.d(), generator: generator.into(), seed, params }
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Reads a config file, or falls back to a built-in preset of that name.
pub fn load_config(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        return Ok(cfg);
    }
    match preset(arg) {
        Some(text) => ExperimentConfig::from_toml(text),
        None => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Err(config_err(format!("`{arg}` is neither a config file nor a preset ({})", names.join(", "))))
        }
    }
}
