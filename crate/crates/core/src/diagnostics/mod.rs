//! Per-step potentials, inequality checks, residuals and rate estimates over
//! recorded trajectories.

mod report;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::linalg::{dot, norm, norm_sq, sub};
use crate::losses::{empirical_loss, loss_inverse, mean_loss_grad, LossSpec};
use crate::trajectory::StepRecord;

pub use report::{diagnose, DiagnosticsReport, SeriesRow, ViolationSummary, SERIES_COLUMNS};

/// Relative tolerance of every per-step inequality check.
pub const INEQ_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub violations: usize,
    pub checked: usize,
    /// Per checked step: `rhs - lhs` of the inequality (negative means violated).
    pub slack: Vec<f64>,
    pub worst_slack: f64,
}

impl DescentCheck {
    fn push(&mut self, slack: f64, scale: f64) {
        if self.checked == 0 || slack < self.worst_slack {
            self.worst_slack = slack;
        }
        self.checked += 1;
        if slack < -INEQ_REL_TOL * scale.abs().max(1.0) {
            self.violations += 1;
        }
        self.slack.push(slack);
    }
}

fn consecutive(records: &[StepRecord]) -> impl Iterator<Item = (&StepRecord, &StepRecord)> {
    records.iter().tuple_windows().filter(|(a, b): &(&StepRecord, &StepRecord)| b.t == a.t + 1)
}

fn require_dense(records: &[StepRecord]) -> Result<()> {
    if records.len() < 2 || records.windows(2).any(|w| w[1].t != w[0].t + 1) {
        return Err(invalid("sparse recording: this diagnostic needs every step"));
    }
    Ok(())
}

fn prev_w(r: &StepRecord) -> Vec<f64> {
    sub(&r.w, &r.delta_w)
}

/// `xi(t) = L(w(t)) + beta / (2 eta (1 - beta)) |w(t) - w(t-1)|^2`.
pub fn xi_gdm(records: &[StepRecord], eta: f64, beta: f64) -> Vec<f64> {
    let k = beta / (2.0 * eta * (1.0 - beta));
    records.iter().map(|r| r.loss + k * norm_sq(&r.delta_w)).collect()
}

/// `C1 = sigma_max^2 H(l^{-1}(N L(w1))) eta / (2N)`.
pub fn c1_gdm(ds: &Dataset, spec: LossSpec, w1: &[f64], eta: f64) -> Result<f64> {
    let n = ds.n() as f64;
    let l1 = empirical_loss(spec, ds, w1)?;
    let h = spec.smoothness_at(loss_inverse(spec, n * l1)?);
    Ok(ds.sigma_max().powi(2) * h * eta / (2.0 * n))
}

/// Checks `xi(t) >= xi(t+1) + ((1 - C1)/eta) |w(t+1) - w(t)|^2` on consecutive records.
pub fn check_descent_gdm(records: &[StepRecord], eta: f64, beta: f64, ds: &Dataset, spec: LossSpec, w1: &[f64]) -> Result<DescentCheck> {
    let c1 = c1_gdm(ds, spec, w1, eta)?;
    let k = beta / (2.0 * eta * (1.0 - beta));
    let xi = |r: &StepRecord| r.loss + k * norm_sq(&r.delta_w);
    let mut out = DescentCheck::default();
    for (a, b) in consecutive(records) {
        let (x0, x1) = (xi(a), xi(b));
        out.push(x0 - x1 - (1.0 - c1) / eta * norm_sq(&b.delta_w), x0);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct USample {
    pub t: u64,
    pub u: Vec<f64>,
    pub loss_u: f64,
}

fn u_of(r: &StepRecord, beta: f64) -> Vec<f64> {
    let p = prev_w(r);
    r.w.iter().zip(&p).map(|(w, q)| (w - beta * q) / (1.0 - beta)).collect()
}

/// `u(t) = (w(t) - beta w(t-1)) / (1 - beta)` and `L(u(t))`.
pub fn u_series(records: &[StepRecord], beta: f64, ds: &Dataset, spec: LossSpec) -> Result<Vec<USample>> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok(records
        .iter()
        .map(|r| {
            let u = u_of(r, beta);
            let loss_u = mean_loss_grad(spec, ds, 0..ds.n(), &u).0;
            USample { t: r.t, u, loss_u }
        })
        .collect())
}

fn batch_of(r: &StepRecord, ds: &Dataset) -> Vec<usize> {
    r.batch.clone().unwrap_or_else(|| (0..ds.n()).collect())
}

/// Largest `|u(t+1) - u(t) + eta grad L_B(t)(w(t))|`, scaled by `max(1, |u(t)|_inf)`,
/// with the batch gradient recomputed from the logged indices.
pub fn u_identity_error(records: &[StepRecord], beta: f64, ds: &Dataset, spec: LossSpec) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in consecutive(records) {
        let Some(eta) = a.eta_t else { continue };
        let g = mean_loss_grad(spec, ds, batch_of(a, ds), &a.w).1;
        let (ua, ub) = (u_of(a, beta), u_of(b, beta));
        let scale = ua.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..g.len() {
            worst = worst.max((ub[j] - ua[j] + eta * g[j]).abs() / scale);
        }
    }
    worst
}

/// `C2 = 1 - eta / bound`, positive whenever `eta` is below the SGDM bound.
pub fn surrogate_descent_c2(eta: f64, sgdm_bound: f64) -> f64 {
    1.0 - eta / sgdm_bound
}

/// `L(u(1)) - L(u(T)) - C2 eta sum_{s < T} |grad L(w(s))|^2` over a dense run.
pub fn surrogate_descent_gap(records: &[StepRecord], beta: f64, eta: f64, c2: f64, ds: &Dataset, spec: LossSpec) -> Result<f64> {
    require_dense(records)?;
    let first = u_of(&records[0], beta);
    let last = u_of(records.last().unwrap(), beta);
    let lu = |u: &[f64]| mean_loss_grad(spec, ds, 0..ds.n(), u).0;
    let sum: f64 = records[..records.len() - 1].iter().map(|r| r.grad_norm * r.grad_norm).sum();
    Ok(lu(&first) - lu(&last) - c2 * eta * sum)
}

fn residual(r: &StepRecord, w_hat: &[f64], w_tilde: &[f64]) -> Vec<f64> {
    let lt = (r.t as f64).ln();
    r.w.iter().zip(w_hat).zip(w_tilde).map(|((w, h), s)| w - lt * h - s).collect()
}

/// `|r(t)|` with `r(t) = w(t) - ln(t) w_hat - w_tilde`.
pub fn residual_series(records: &[StepRecord], w_hat: &[f64], w_tilde: &[f64]) -> Vec<f64> {
    records.iter().map(|r| norm(&residual(r, w_hat, w_tilde))).collect()
}

/// `<w(t), w_hat> / |w_hat|^2 - ln t`.
pub fn w_hat_drift(records: &[StepRecord], w_hat: &[f64]) -> Vec<f64> {
    let nh = norm_sq(w_hat);
    records.iter().map(|r| dot(&r.w, w_hat) / nh - (r.t as f64).ln()).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GSeries {
    pub t: Vec<u64>,
    pub g: Vec<f64>,
    /// `A2(t) = |r(t+1) - r(t)|^2` (heavy-ball form only).
    pub a2: Vec<f64>,
    /// `A3(t) = <r(t), -ln((t+1)/t) w_hat - eta grad L_B(t)(w(t))>` (heavy-ball form only).
    pub a3: Vec<f64>,
    /// Largest gap between `g(t+1) - g(t)` from the definition and from the
    /// increment identity, scaled by `max(1, |g(t)|)`.
    pub identity_max_err: f64,
}

/// `g(t) = |r(t)|^2 / 2 + k <r(t), dw(t)> - k sum_{tau=2}^t <r(tau) - r(tau-1), dw(tau)>`
/// with `k = beta / (1 - beta)`, plus the increment check
/// `g(t+1) - g(t) = A2/2 + A3`.
pub fn g_series_gdm(records: &[StepRecord], w_hat: &[f64], w_tilde: &[f64], beta: f64, ds: &Dataset, spec: LossSpec) -> Result<GSeries> {
    require_dense(records)?;
    let k = beta / (1.0 - beta);
    let rs: Vec<Vec<f64>> = records.iter().map(|r| residual(r, w_hat, w_tilde)).collect();
    let mut out = GSeries::default();
    let mut cum = 0.0;
    for (i, rec) in records.iter().enumerate() {
        if i > 0 {
            cum += dot(&sub(&rs[i], &rs[i - 1]), &rec.delta_w);
        }
        out.t.push(rec.t);
        out.g.push(0.5 * norm_sq(&rs[i]) + k * dot(&rs[i], &rec.delta_w) - k * cum);
    }
    for i in 0..records.len() - 1 {
        let rec = &records[i];
        let Some(eta) = rec.eta_t else { break };
        let a2 = norm_sq(&sub(&rs[i + 1], &rs[i]));
        let g = mean_loss_grad(spec, ds, batch_of(rec, ds), &rec.w).1;
        let lr = ((rec.t + 1) as f64 / rec.t as f64).ln();
        let dir: Vec<f64> = w_hat.iter().zip(&g).map(|(h, gj)| -lr * h - eta * gj).collect();
        let a3 = dot(&rs[i], &dir);
        let lhs = out.g[i + 1] - out.g[i];
        out.identity_max_err = out.identity_max_err.max((lhs - (0.5 * a2 + a3)).abs() / out.g[i].abs().max(1.0));
        out.a2.push(a2);
        out.a3.push(a3);
    }
    Ok(out)
}

fn nu_prev(records: &[StepRecord], i: usize) -> Result<Option<&[f64]>> {
    if i == 0 {
        return Ok(None);
    }
    records[i - 1]
        .nu_hat
        .as_deref()
        .map(Some)
        .ok_or_else(|| invalid(format!("missing nu_hat snapshot at t = {}", records[i - 1].t)))
}

/// `sum_j sqrt(eps + nu_hat_j) dw_j^2`
fn precond_sq(nu: Option<&[f64]>, eps: f64, dw: &[f64]) -> f64 {
    match nu {
        None => 0.0,
        Some(nu) => nu.iter().zip(dw).map(|(n, d)| (eps + n).sqrt() * d * d).sum(),
    }
}

/// `xi(t) = L(w(t)) + (1 - beta1^{t-1}) / (2 eta (1 - beta1)) sum_j sqrt(eps + nu_hat_j(t-1)) dw_j(t)^2`.
pub fn xi_adam(records: &[StepRecord], eta: f64, beta1: f64, epsilon: f64) -> Result<Vec<f64>> {
    require_dense(records)?;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let coef = (1.0 - beta1.powi(r.t as i32 - 1)) / (2.0 * eta * (1.0 - beta1));
        out.push(r.loss + coef * precond_sq(nu_prev(records, i)?, epsilon, &r.delta_w));
    }
    Ok(out)
}

/// Checks, per consecutive pair,
/// `L(t+1) + (1-beta1^t)/(2 eta (1-beta1)) |dw(t+1)|^2_{nu(t)}
///   <= L(t) + (1-beta1^{t-1})/(2 c eta (1-beta1)) (1-(c beta1)^t)/(1-(c beta1)^{t-1}) |dw(t)|^2_{nu(t-1)}`
/// with `c = beta2^{1/4} / beta1` (the right-hand momentum term vanishes at `t = 1` and `beta1 = 0`).
pub fn check_descent_adam(records: &[StepRecord], eta: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<DescentCheck> {
    require_dense(records)?;
    let xi = xi_adam(records, eta, beta1, epsilon)?;
    let q = beta2.powf(0.25);
    let mut out = DescentCheck::default();
    for i in 0..records.len() - 1 {
        let t = records[i].t as i32;
        let coef = if t == 1 || beta1 == 0.0 {
            0.0
        } else {
            let c = q / beta1;
            (1.0 - beta1.powi(t - 1)) / (2.0 * c * eta * (1.0 - beta1)) * (1.0 - q.powi(t)) / (1.0 - q.powi(t - 1))
        };
        let rhs = records[i].loss + coef * precond_sq(nu_prev(records, i)?, epsilon, &records[i].delta_w);
        out.push(rhs - xi[i + 1], rhs);
    }
    Ok(out)
}

/// `g(t) = k <r(t), q(t)> + (sqrt(eps)/2) |r(t)|^2 - k sum_{tau=2}^t <r(tau) - r(tau-1), q(tau)>`
/// with `q(t) = (1 - beta1^{t-1}) sqrt(eps + nu_hat(t-1)) * dw(t)` and `k = beta1/(1-beta1)`.
/// The increment check uses `q(t+1) - q(t) = -(1-beta1) (q(t) + eta grad L(w(t)))`.
pub fn g_series_adam(records: &[StepRecord], w_hat: &[f64], w_tilde: &[f64], eta: f64, beta1: f64, epsilon: f64, ds: &Dataset, spec: LossSpec) -> Result<GSeries> {
    require_dense(records)?;
    let k = beta1 / (1.0 - beta1);
    let se = epsilon.sqrt();
    let rs: Vec<Vec<f64>> = records.iter().map(|r| residual(r, w_hat, w_tilde)).collect();
    let mut qs = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let f = 1.0 - beta1.powi(r.t as i32 - 1);
        let q: Vec<f64> = match nu_prev(records, i)? {
            None => vec![0.0; r.w.len()],
            Some(nu) => nu.iter().zip(&r.delta_w).map(|(n, d)| f * (epsilon + n).sqrt() * d).collect(),
        };
        qs.push(q);
    }
    let mut out = GSeries::default();
    let mut cum = 0.0;
    for i in 0..records.len() {
        if i > 0 {
            cum += dot(&sub(&rs[i], &rs[i - 1]), &qs[i]);
        }
        out.t.push(records[i].t);
        out.g.push(k * dot(&rs[i], &qs[i]) + 0.5 * se * norm_sq(&rs[i]) - k * cum);
    }
    for i in 0..records.len() - 1 {
        let g = mean_loss_grad(spec, ds, 0..ds.n(), &records[i].w).1;
        let dr = sub(&rs[i + 1], &rs[i]);
        let dir: Vec<f64> = qs[i].iter().zip(&g).map(|(q, gj)| -beta1 * q - eta * beta1 * gj).collect();
        let inc = dot(&rs[i], &dir) + 0.5 * se * norm_sq(&dr) + se * dot(&rs[i], &dr);
        let lhs = out.g[i + 1] - out.g[i];
        out.identity_max_err = out.identity_max_err.max((lhs - inc).abs() / out.g[i].abs().max(1.0));
    }
    Ok(out)
}

/// Angle between `w` and `w_hat`, in radians.
pub fn angle_gap(w: &[f64], w_hat: &[f64]) -> Result<f64> {
    let (a, b) = (norm(w), norm(w_hat));
    if a == 0.0 || b == 0.0 {
        return Err(invalid("angle undefined for a zero vector"));
    }
    // 2 atan2(|u - v|, |u + v|) on unit vectors stays accurate near 0 and pi.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in w.iter().zip(w_hat) {
        let (u, v) = (x / a, y / b);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    /// Median of `t L(w(t))` over the last decade of recorded steps.
    pub tl_plateau: f64,
    /// Median of `|w(t)| / ln t` over the same window.
    pub wnorm_over_lnt_tail: f64,
    pub window: (u64, u64),
}

pub const MIN_RATE_STEPS: u64 = 1_000;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rate_estimates(records: &[StepRecord]) -> Result<RateEstimates> {
    let Some(last) = records.last() else {
        return Err(invalid("empty trajectory"));
    };
    if last.t < MIN_RATE_STEPS {
        return Err(invalid(format!("rate estimates need at least {MIN_RATE_STEPS} steps, got {}", last.t)));
    }
    let lo = (last.t / 10).max(2);
    let tail: Vec<&StepRecord> = records.iter().filter(|r| r.t >= lo).collect();
    Ok(RateEstimates {
        tl_plateau: median(tail.iter().map(|r| r.t as f64 * r.loss).collect()),
        wnorm_over_lnt_tail: median(tail.iter().map(|r| norm(&r.w) / (r.t as f64).ln()).collect()),
        window: (lo, last.t),
    })
}

/// Max of `values[k]` over records with `t in [lo, hi]`.
pub fn window_max(records: &[StepRecord], values: &[f64], lo: u64, hi: u64) -> Option<f64> {
    records
        .iter()
        .zip(values)
        .filter(|(r, _)| r.t >= lo && r.t <= hi)
        .map(|(_, v)| *v)
        .reduce(f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub grad_sq: f64,
    /// Exact `E_B |grad L_B|^2` over all size-`b` subsets.
    pub expected_batch_sq: f64,
    pub upper: f64,
}

impl SandwichReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.grad_sq <= self.expected_batch_sq + tol * self.expected_batch_sq.max(1.0)
            && self.expected_batch_sq <= self.upper + tol * self.upper.max(1.0)
    }
}

/// `|grad L|^2 <= E_B |grad L_B|^2 <= (N sigma_max^2 / (gamma^2 b)) |grad L|^2`, exhaustively.
pub fn second_moment_sandwich(spec: LossSpec, ds: &Dataset, w: &[f64], b: usize, gamma: f64) -> Result<SandwichReport> {
    let n = ds.n();
    if b == 0 || b > n {
        return Err(invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    let full = norm_sq(&crate::losses::empirical_grad(spec, ds, w)?);
    let (mut sum, mut count) = (0.0, 0usize);
    for batch in (0..n).combinations(b) {
        sum += norm_sq(&mean_loss_grad(spec, ds, batch, w).1);
        count += 1;
    }
    let s2 = ds.sigma_max().powi(2);
    Ok(SandwichReport {
        grad_sq: full,
        expected_batch_sq: sum / count as f64,
        upper: n as f64 * s2 / (gamma * gamma * b as f64) * full,
    })
}

/// Sums of `values[t-1]` over `t in [T, 2T)` for `T = start, 2 start, ...` while the window fits.
pub fn dyadic_window_sums(values: &[f64], start: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = start.max(1);
    while 2 * t - 1 <= values.len() {
        out.push(values[t - 1..2 * t - 1].iter().sum());
        t *= 2;
    }
    out
}

/// Smallest `|w(t) - w(t-1)|` over records with `t >= 2`.
pub fn min_update_norm(records: &[StepRecord]) -> Option<f64> {
    records.iter().filter(|r| r.t >= 2).map(StepRecord::delta_w_norm).reduce(f64::min)
}

#[cfg(test)]
mod tests;
