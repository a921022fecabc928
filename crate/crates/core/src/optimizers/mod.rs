//! Momentum and adaptive first-order methods on `L(w) = mean_i l(<w, x_i>)`.
//!
//! Conventions shared by every method: `t` starts at 1, `m(0) = nu(0) = 0`, and
//! `prev_w = w(1)` initially, so the first step has no momentum contribution.

mod bounds;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, norm, sub};
use crate::losses::{mean_loss_grad, LossSpec};
use crate::rng::RNG_ALGORITHM;
use crate::trajectory::{Recording, StepRecord, Trajectory};

pub use bounds::{
    adam_inf_term, lr_bound_adam, lr_bound_gdm, lr_bound_sgdm, LrBoundReport, ADAM_T_MAX,
};
pub use sampler::{BatchSampler, SamplerMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// GDM with `beta = 0`.
    Gd,
    Gdm,
    /// SGDM with `beta = 0`.
    Sgd,
    Sgdm,
    /// Full-batch Adam with bias correction.
    Adam,
    /// Mini-batch RMSProp, epoch shuffling, `eta_t = eta_1 / sqrt(t)`.
    Rmsprop,
    /// Heavy ball on the RMSProp-preconditioned gradient.
    Sahb,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Gd,
        OptimizerKind::Gdm,
        OptimizerKind::Sgd,
        OptimizerKind::Sgdm,
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Sahb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Gdm => "gdm",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Sahb => "sahb",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, OptimizerKind::Sgd | OptimizerKind::Sgdm | OptimizerKind::Rmsprop | OptimizerKind::Sahb)
    }

    /// Methods obeying `w(t+1) - w(t) = beta (w(t) - w(t-1)) - eta (1 - beta) g(t)`.
    pub fn is_heavy_ball(self) -> bool {
        matches!(self, OptimizerKind::Gd | OptimizerKind::Gdm | OptimizerKind::Sgd | OptimizerKind::Sgdm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `eta_t = eta / sqrt(t)`
    InvSqrt,
}

/// Hyperparameters. `beta1` is the momentum `beta` for (S)GDM and `beta1` for
/// Adam/SAHB; `schedule` and `bias_correction` only affect RMSProp (SAHB uses
/// `schedule` and always bias-corrects).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub bias_correction: bool,
    pub schedule: LrSchedule,
}

impl Hyper {
    pub fn gdm(eta: f64, beta: f64) -> Self {
        Hyper { eta, beta1: beta, beta2: 0.0, epsilon: 0.0, batch_size: 0, bias_correction: false, schedule: LrSchedule::Constant }
    }

    pub fn sgdm(eta: f64, beta: f64, b: usize) -> Self {
        Hyper { batch_size: b, ..Hyper::gdm(eta, beta) }
    }

    pub fn adam(eta: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Hyper { eta, beta1, beta2, epsilon, batch_size: 0, bias_correction: true, schedule: LrSchedule::Constant }
    }

    pub fn rmsprop(eta1: f64, beta2: f64, epsilon: f64, b: usize) -> Self {
        Hyper { eta: eta1, beta1: 0.0, beta2, epsilon, batch_size: b, bias_correction: false, schedule: LrSchedule::InvSqrt }
    }

    pub fn sahb(eta1: f64, beta1: f64, beta2: f64, epsilon: f64, b: usize) -> Self {
        Hyper { eta: eta1, beta1, beta2, epsilon, batch_size: b, bias_correction: true, schedule: LrSchedule::InvSqrt }
    }

    pub fn eta_at(&self, t: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.eta,
            LrSchedule::InvSqrt => self.eta / (t as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub w: Vec<f64>,
    pub prev_w: Vec<f64>,
    pub m: Vec<f64>,
    pub nu: Vec<f64>,
    pub t: u64,
    pub hyper: Hyper,
}

impl OptimizerState {
    pub fn new(w1: Vec<f64>, hyper: Hyper) -> Self {
        let d = w1.len();
        OptimizerState { prev_w: w1.clone(), w: w1, m: vec![0.0; d], nu: vec![0.0; d], t: 1, hyper }
    }
}

/// What the step `w(t) -> w(t+1)` used.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub batch: Vec<usize>,
    pub grad: Vec<f64>,
    pub nu_hat: Option<Vec<f64>>,
    pub eta_t: f64,
}

fn check_dims(state: &OptimizerState, ds: &Dataset) -> Result<()> {
    if state.w.len() != ds.d() {
        return Err(Error::DimensionMismatch { expected: ds.d(), got: state.w.len() });
    }
    Ok(())
}

fn check_beta(name: &str, b: f64) -> Result<()> {
    if !(0.0..1.0).contains(&b) {
        return Err(invalid(format!("{name} must lie in [0, 1), got {b}")));
    }
    Ok(())
}

fn gradient(spec: LossSpec, ds: &Dataset, batch: &[usize], w: &[f64], t: u64) -> Result<Vec<f64>> {
    let g = mean_loss_grad(spec, ds, batch.iter().copied(), w).1;
    if !all_finite(&g) {
        return Err(Error::NumericAbort { step: t, reason: "non-finite gradient".into() });
    }
    Ok(g)
}

fn commit(state: &mut OptimizerState, next: Vec<f64>) -> Result<()> {
    if !all_finite(&next) {
        return Err(Error::NumericAbort { step: state.t, reason: "non-finite parameter".into() });
    }
    state.prev_w = std::mem::replace(&mut state.w, next);
    state.t += 1;
    Ok(())
}

fn heavy_ball(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec, batch: Vec<usize>) -> Result<StepInfo> {
    check_dims(state, ds)?;
    let Hyper { eta, beta1: beta, .. } = state.hyper;
    check_beta("beta", beta)?;
    let g = gradient(spec, ds, &batch, &state.w, state.t)?;
    for (m, gi) in state.m.iter_mut().zip(&g) {
        *m = beta * *m + (1.0 - beta) * gi;
    }
    let next = state.w.iter().zip(&state.m).map(|(w, m)| w - eta * m).collect();
    commit(state, next)?;
    Ok(StepInfo { batch, grad: g, nu_hat: None, eta_t: eta })
}

/// `m = beta m + (1 - beta) grad L(w)`, `w' = w - eta m`.
pub fn step_gdm(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec) -> Result<StepInfo> {
    heavy_ball(state, ds, spec, (0..ds.n()).collect())
}

/// As [`step_gdm`] with the gradient of the sampler's next batch.
pub fn step_sgdm(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec, sampler: &mut BatchSampler) -> Result<StepInfo> {
    let batch = sampler.next_batch();
    heavy_ball(state, ds, spec, batch)
}

/// Full-batch Adam with `eps` inside the square root:
/// `w' = w - eta m_hat / sqrt(nu_hat + eps)`.
///
/// Requires `beta1, beta2 in [0, 1)`, `eps > 0`, and `beta2 > beta1^4` whenever
/// `beta1 > 0`.
pub fn step_adam_deterministic(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec) -> Result<StepInfo> {
    check_dims(state, ds)?;
    let Hyper { eta, beta1, beta2, epsilon, .. } = state.hyper;
    check_beta("beta1", beta1)?;
    check_beta("beta2", beta2)?;
    if beta1 > 0.0 && !(beta2 > beta1.powi(4)) {
        return Err(invalid(format!("Adam needs beta2 > beta1^4 (beta1 = {beta1}, beta2 = {beta2})")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let t = state.t;
    let batch: Vec<usize> = (0..ds.n()).collect();
    let g = gradient(spec, ds, &batch, &state.w, t)?;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let mut nu_hat = Vec::with_capacity(g.len());
    let mut next = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        state.m[j] = beta1 * state.m[j] + (1.0 - beta1) * g[j];
        state.nu[j] = beta2 * state.nu[j] + (1.0 - beta2) * g[j] * g[j];
        let nh = state.nu[j] / c2;
        next.push(state.w[j] - eta * (state.m[j] / c1) / (nh + epsilon).sqrt());
        nu_hat.push(nh);
    }
    commit(state, next)?;
    Ok(StepInfo { batch, grad: g, nu_hat: Some(nu_hat), eta_t: eta })
}

/// Mini-batch RMSProp under epoch shuffling:
/// `nu' = beta2 nu + (1 - beta2) g^2`, `w' = w - eta_t g / sqrt(nu' + eps)` with
/// `eta_t = eta_1 / sqrt(t)` (or constant under `LrSchedule::Constant`). `nu` is
/// used as is unless `bias_correction` is set.
pub fn step_rmsprop_decay(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec, sampler: &mut BatchSampler) -> Result<StepInfo> {
    check_dims(state, ds)?;
    if sampler.mode() != SamplerMode::WithoutReplacement {
        return Err(invalid("RMSProp with decay needs the without-replacement sampler"));
    }
    let Hyper { beta2, epsilon, bias_correction, .. } = state.hyper;
    if !(beta2 > 0.0 && beta2 < 1.0) {
        return Err(invalid(format!("beta2 must lie in (0, 1), got {beta2}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let t = state.t;
    if t == 0 {
        return Err(invalid("step index must start at 1"));
    }
    let eta_t = state.hyper.eta_at(t);
    let batch = sampler.next_batch();
    let g = gradient(spec, ds, &batch, &state.w, t)?;
    let corr = if bias_correction { 1.0 - beta2.powi(t as i32) } else { 1.0 };
    let mut nu_hat = Vec::with_capacity(g.len());
    let mut next = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        state.nu[j] = beta2 * state.nu[j] + (1.0 - beta2) * g[j] * g[j];
        let nh = state.nu[j] / corr;
        next.push(state.w[j] - eta_t * g[j] / (nh + epsilon).sqrt());
        nu_hat.push(nh);
    }
    commit(state, next)?;
    Ok(StepInfo { batch, grad: g, nu_hat: Some(nu_hat), eta_t })
}

/// Heavy ball on the preconditioned gradient `P = g / sqrt(eps + nu_hat)`:
/// `w' = w - eta_t (1 - beta1) P + beta1 (w - w_prev)`, with bias-corrected `nu_hat`.
/// Equivalently `u(t+1) = u(t) - eta_t P` for `u(t) = (w(t) - beta1 w(t-1)) / (1 - beta1)`.
/// `state.m` holds the applied decrement `w - w'`.
pub fn step_sahb(state: &mut OptimizerState, ds: &Dataset, spec: LossSpec, sampler: &mut BatchSampler) -> Result<StepInfo> {
    check_dims(state, ds)?;
    let Hyper { beta1, beta2, epsilon, .. } = state.hyper;
    check_beta("beta1", beta1)?;
    if !(beta2 > 0.0 && beta2 < 1.0) {
        return Err(invalid(format!("beta2 must lie in (0, 1), got {beta2}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let t = state.t;
    let eta_t = state.hyper.eta_at(t);
    let batch = sampler.next_batch();
    let g = gradient(spec, ds, &batch, &state.w, t)?;
    let corr = 1.0 - beta2.powi(t as i32);
    let mut nu_hat = Vec::with_capacity(g.len());
    let mut next = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        state.nu[j] = beta2 * state.nu[j] + (1.0 - beta2) * g[j] * g[j];
        let nh = state.nu[j] / corr;
        let p = g[j] / (epsilon + nh).sqrt();
        state.m[j] = eta_t * (1.0 - beta1) * p - beta1 * (state.w[j] - state.prev_w[j]);
        next.push(state.w[j] - state.m[j]);
        nu_hat.push(nh);
    }
    commit(state, next)?;
    Ok(StepInfo { batch, grad: g, nu_hat: Some(nu_hat), eta_t })
}

/// Optimizer choice plus sampling setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub hyper: Hyper,
    pub sampler: SamplerMode,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, hyper: Hyper, sampler: SamplerMode, seed: u64) -> Self {
        OptimizerConfig { kind, hyper, sampler, seed }
    }

    /// Hyperparameters as actually applied (`beta = 0` for GD/SGD).
    pub fn effective_hyper(&self) -> Hyper {
        let mut h = self.hyper;
        if matches!(self.kind, OptimizerKind::Gd | OptimizerKind::Sgd) {
            h.beta1 = 0.0;
        }
        h
    }

    pub fn effective_sampler(&self) -> SamplerMode {
        if self.kind.is_stochastic() {
            self.sampler
        } else {
            SamplerMode::FullBatch
        }
    }
}

/// A running optimizer: state plus its private sampler.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub state: OptimizerState,
    sampler: BatchSampler,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, ds: &Dataset, w1: Vec<f64>) -> Result<Self> {
        if w1.len() != ds.d() {
            return Err(Error::DimensionMismatch { expected: ds.d(), got: w1.len() });
        }
        if !(config.hyper.eta > 0.0) || !config.hyper.eta.is_finite() {
            return Err(invalid(format!("eta must be positive, got {}", config.hyper.eta)));
        }
        let hyper = config.effective_hyper();
        let sampler = BatchSampler::new(config.effective_sampler(), ds.n(), hyper.batch_size, config.seed)?;
        Ok(Optimizer { config, state: OptimizerState::new(w1, hyper), sampler })
    }

    pub fn step(&mut self, ds: &Dataset, spec: LossSpec) -> Result<StepInfo> {
        match self.config.kind {
            OptimizerKind::Gd | OptimizerKind::Gdm => step_gdm(&mut self.state, ds, spec),
            OptimizerKind::Sgd | OptimizerKind::Sgdm => step_sgdm(&mut self.state, ds, spec, &mut self.sampler),
            OptimizerKind::Adam => step_adam_deterministic(&mut self.state, ds, spec),
            OptimizerKind::Rmsprop => step_rmsprop_decay(&mut self.state, ds, spec, &mut self.sampler),
            OptimizerKind::Sahb => step_sahb(&mut self.state, ds, spec, &mut self.sampler),
        }
    }
}

/// Iterates `w(1), ..., w(steps)` (that is, `steps - 1` updates) and records them.
pub fn run(ds: &Dataset, spec: LossSpec, config: OptimizerConfig, w1: Vec<f64>, steps: u64, recording: Recording) -> Result<Trajectory> {
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    let mut opt = Optimizer::new(config, ds, w1)?;
    let mut records = Vec::new();
    for t in 1..=steps {
        let keep = recording.keeps(t, steps);
        let record = if keep {
            let (loss, grad) = mean_loss_grad(spec, ds, 0..ds.n(), &opt.state.w);
            if !loss.is_finite() {
                return Err(Error::NumericAbort { step: t, reason: "non-finite loss".into() });
            }
            Some(StepRecord {
                t,
                w: opt.state.w.clone(),
                delta_w: sub(&opt.state.w, &opt.state.prev_w),
                loss,
                grad_norm: norm(&grad),
                batch: None,
                nu_hat: None,
                eta_t: None,
            })
        } else {
            None
        };
        let info = if t < steps { Some(opt.step(ds, spec)?) } else { None };
        if let Some(mut r) = record {
            if let Some(info) = info {
                if config.kind.is_stochastic() {
                    r.batch = Some(info.batch);
                }
                r.nu_hat = info.nu_hat;
                r.eta_t = Some(info.eta_t);
            }
            records.push(r);
        }
    }
    Ok(Trajectory {
        kind: config.kind,
        loss: spec,
        hyper: opt.state.hyper,
        sampler: config.effective_sampler(),
        seed: config.seed,
        rng_algorithm: RNG_ALGORITHM.into(),
        dataset: ds.clone(),
        recording,
        records,
    })
}
