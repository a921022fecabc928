//! Step-size ceilings under which the potential-function arguments apply.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::losses::{empirical_loss, loss_inverse, LossSpec};
use crate::maxmargin::{solve_max_margin, DEFAULT_TOL};

pub const ADAM_T_MAX: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrBoundReport {
    pub bound: f64,
    pub sigma_max: f64,
    /// Smoothness constant entering the bound.
    pub h: f64,
    pub n: usize,
    pub gamma: Option<f64>,
    pub b: Option<usize>,
    pub beta: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub loss_w1: Option<f64>,
    /// Adam only: the infimum factor.
    pub inf_term: Option<f64>,
}

impl LrBoundReport {
    fn base(bound: f64, sigma_max: f64, h: f64, n: usize) -> Self {
        LrBoundReport {
            bound,
            sigma_max,
            h,
            n,
            gamma: None,
            b: None,
            beta: None,
            beta2: None,
            epsilon: None,
            loss_w1: None,
            inf_term: None,
        }
    }
}

fn sigma(ds: &Dataset) -> Result<f64> {
    let s = ds.sigma_max();
    if !(s > 0.0) {
        return Err(invalid("bound needs a nonzero dataset"));
    }
    Ok(s)
}

/// `2N / (sigma_max^2 H(l^{-1}(N L(w1))))`.
pub fn lr_bound_gdm(ds: &Dataset, spec: LossSpec, w1: &[f64]) -> Result<LrBoundReport> {
    let s = sigma(ds)?;
    let n = ds.n();
    let l1 = empirical_loss(spec, ds, w1)?;
    let h = spec.smoothness_at(loss_inverse(spec, n as f64 * l1)?);
    let mut r = LrBoundReport::base(2.0 * n as f64 / (s * s * h), s, h, n);
    r.loss_w1 = Some(l1);
    Ok(r)
}

/// `1 / (H beta sigma^3 / (sqrt(N b) gamma (1 - beta)) + H sigma^4 / (2 b gamma^2))`
/// with global `H`; only defined for globally smooth losses.
pub fn lr_bound_sgdm(ds: &Dataset, spec: LossSpec, b: usize, beta: f64) -> Result<LrBoundReport> {
    let h = spec.global_smoothness().ok_or_else(|| {
        invalid(format!("SGDM bound needs a globally smooth loss; {} is only locally smooth", spec.name()))
    })?;
    let n = ds.n();
    if b == 0 || b > n {
        return Err(invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    let s = sigma(ds)?;
    let gamma = solve_max_margin(ds, DEFAULT_TOL)?.gamma;
    let (nf, bf) = (n as f64, b as f64);
    let momentum = h * beta * s.powi(3) / ((nf * bf).sqrt() * gamma * (1.0 - beta));
    let noise = h * s.powi(4) / (2.0 * bf * gamma * gamma);
    let mut r = LrBoundReport::base(1.0 / (momentum + noise), s, h, n);
    r.gamma = Some(gamma);
    r.b = Some(b);
    r.beta = Some(beta);
    Ok(r)
}

fn adam_f(beta1: f64, c: f64, t: u64) -> f64 {
    let q = c * beta1;
    let t = t as i32;
    (1.0 - beta1.powi(t)) / (1.0 - beta1)
        - (1.0 - beta1.powi(t - 1)) / (c * (1.0 - beta1)) * (1.0 - q.powi(t)) / (1.0 - q.powi(t - 1))
}

/// `inf_{t >= 2} f(t)` over `t in [2, t_max]` together with the limit
/// `(1 - 1/c)/(1 - beta1)`, where `c = beta2^{1/4} / beta1`. Equals 1 at `beta1 = 0`.
pub fn adam_inf_term(beta1: f64, beta2: f64, t_max: u64) -> f64 {
    if beta1 == 0.0 {
        return 1.0;
    }
    let c = beta2.powf(0.25) / beta1;
    let limit = (1.0 - 1.0 / c) / (1.0 - beta1);
    (2..=t_max.max(2)).map(|t| adam_f(beta1, c, t)).fold(limit, f64::min)
}

/// `sqrt(eps) inf / H(l^{-1}(N L(w1) / (1 - beta2^{1/4})))`.
pub fn lr_bound_adam(ds: &Dataset, spec: LossSpec, beta1: f64, beta2: f64, epsilon: f64, w1: &[f64], t_max: u64) -> Result<LrBoundReport> {
    if !(beta1 >= 0.0 && beta2 > beta1.powi(4) && beta2 < 1.0) {
        return Err(invalid(format!("Adam bound needs 1 > beta2 > beta1^4 >= 0 (beta1 = {beta1}, beta2 = {beta2})")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let s = sigma(ds)?;
    let n = ds.n();
    let l1 = empirical_loss(spec, ds, w1)?;
    let arg = n as f64 * l1 / (1.0 - beta2.powf(0.25));
    let h = spec.smoothness_at(loss_inverse(spec, arg)?);
    let inf = adam_inf_term(beta1, beta2, t_max);
    let mut r = LrBoundReport::base(epsilon.sqrt() * inf / h, s, h, n);
    r.beta = Some(beta1);
    r.beta2 = Some(beta2);
    r.epsilon = Some(epsilon);
    r.loss_w1 = Some(l1);
    r.inf_term = Some(inf);
    Ok(r)
}
