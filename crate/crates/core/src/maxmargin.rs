//! Hard-margin solution through the origin: `w_hat = argmin |w|^2` subject to
//! `<w, x_i> >= 1`, its dual weights, and the shift `w_tilde`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{check_separable, Dataset};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::optimizers::OptimizerKind;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 1_000_000;
/// Primal slack at or below which a point is a support vector.
pub const SUPPORT_SLACK: f64 = 1e-6;
/// Dual weight below which a support point is left out of the `w_tilde` system.
pub const MIN_DUAL_WEIGHT: f64 = 1e-10;
/// Dual mass beyond which the problem is treated as unbounded.
const DUAL_MASS_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxMarginSolution {
    pub w_hat: Vec<f64>,
    pub gamma: f64,
    pub support: Vec<usize>,
    pub dual_v: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Primal violation `max_i (1 - <w, x_i>)_+` and complementarity `max_i alpha_i |<w, x_i> - 1|`.
fn kkt(ds: &Dataset, alpha: &[f64], w: &[f64]) -> f64 {
    let mut r = 0.0f64;
    for (x, &a) in ds.points().iter().zip(alpha) {
        let m = dot(w, x);
        r = r.max((1.0 - m).max(0.0)).max(a * (m - 1.0).abs());
    }
    r
}

fn primal_from_dual(ds: &Dataset, alpha: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; ds.d()];
    for (x, &a) in ds.points().iter().zip(alpha) {
        axpy(a, x, &mut w);
    }
    w
}

/// Cyclic coordinate ascent on `max_{alpha >= 0} sum alpha_i - |sum alpha_i x_i|^2 / 2`.
///
/// Each coordinate is maximized exactly:
/// `alpha_i <- max(0, alpha_i + (1 - <w, x_i>) / |x_i|^2)`. Sweeps stop once the
/// KKT residual is below `tol` and every weight outside the support band is
/// negligible. The weights are then polished by an exact solve on the support
/// band when that keeps them feasible. The weights of identical points are
/// replaced by their mean (the dual is not unique there), non-support weights
/// are zeroed, and `w_hat` is recomputed as `sum v_i x_i` from the final weights.
pub fn solve_max_margin(ds: &Dataset, tol: f64) -> Result<MaxMarginSolution> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(invalid(format!("tol must lie in (0, 1e-3], got {tol}")));
    }
    if !check_separable(ds).separable {
        return Err(Error::NonSeparable);
    }
    let n = ds.n();
    let sq: Vec<f64> = ds.points().iter().map(|p| norm_sq(p)).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; ds.d()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for i in 0..n {
            let x = ds.point(i);
            let next = (alpha[i] + (1.0 - dot(&w, x)) / sq[i]).max(0.0);
            let delta = next - alpha[i];
            if delta != 0.0 {
                axpy(delta, x, &mut w);
                alpha[i] = next;
            }
        }
        if alpha.iter().sum::<f64>() > DUAL_MASS_LIMIT {
            return Err(Error::NonSeparable);
        }
        if kkt(ds, &alpha, &w) <= tol && prunable(ds, &alpha, &w, &sq, tol) {
            converged = true;
            break;
        }
    }

    if let Some(polished) = polish(ds, &alpha, &w) {
        alpha = polished;
    }
    equalize_duplicates(ds, &mut alpha);
    let w_eq = primal_from_dual(ds, &alpha);
    let support = support_from(ds, &w_eq, SUPPORT_SLACK);
    let mut dual_v = vec![0.0; n];
    for &i in &support {
        dual_v[i] = alpha[i];
    }
    let w_hat = primal_from_dual(ds, &dual_v);
    let kkt_residual = kkt(ds, &dual_v, &w_hat);
    Ok(MaxMarginSolution {
        gamma: 1.0 / norm(&w_hat),
        w_hat,
        support,
        dual_v,
        kkt_residual,
        converged,
        sweeps,
    })
}

/// Solves `G alpha_S = 1` on the support band of the sweep iterate (minimum-norm,
/// so identical points get equal weights). Kept only when the weights are
/// nonnegative and the KKT residual does not get worse.
fn polish(ds: &Dataset, alpha: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let band = support_from(ds, w, SUPPORT_SLACK);
    if band.is_empty() {
        return None;
    }
    let g = DMatrix::from_fn(band.len(), band.len(), |r, c| dot(ds.point(band[r]), ds.point(band[c])));
    let svd = g.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    let sol = svd.solve(&DVector::from_element(band.len(), 1.0), cutoff).ok()?;
    if sol.iter().any(|&a| !(a >= 0.0)) {
        return None;
    }
    let mut polished = vec![0.0; ds.n()];
    for (&i, &a) in band.iter().zip(sol.iter()) {
        polished[i] = a;
    }
    let before = kkt(ds, alpha, w);
    (kkt(ds, &polished, &primal_from_dual(ds, &polished)) <= before).then_some(polished)
}

/// Every point outside the support band carries weight small enough that
/// dropping it moves `w` by at most `tol`.
fn prunable(ds: &Dataset, alpha: &[f64], w: &[f64], sq: &[f64], tol: f64) -> bool {
    ds.points()
        .iter()
        .zip(alpha.iter().zip(sq))
        .all(|(x, (&a, &s))| a == 0.0 || dot(w, x) <= 1.0 + SUPPORT_SLACK || a * s.sqrt() <= tol)
}

fn equalize_duplicates(ds: &Dataset, alpha: &mut [f64]) {
    for (_, group) in duplicate_groups(ds) {
        let mean = group.iter().map(|&i| alpha[i]).sum::<f64>() / group.len() as f64;
        for i in group {
            alpha[i] = mean;
        }
    }
}

/// Groups of indices with bitwise-identical coordinates, in first-seen order.
fn duplicate_groups(ds: &Dataset) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..ds.n() {
        let bits = |p: &[f64]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let key = bits(ds.point(i));
        match groups.iter_mut().find(|(rep, _)| bits(ds.point(*rep)) == key) {
            Some((_, g)) => g.push(i),
            None => groups.push((i, vec![i])),
        }
    }
    groups
}

fn support_from(ds: &Dataset, w_hat: &[f64], tol: f64) -> Vec<usize> {
    (0..ds.n()).filter(|&i| dot(w_hat, ds.point(i)) <= 1.0 + tol).collect()
}

/// `{i : <w_hat, x_i> <= 1 + tol}`.
pub fn support_set(sol: &MaxMarginSolution, ds: &Dataset, tol: f64) -> Vec<usize> {
    support_from(ds, &sol.w_hat, tol)
}

/// The constant `C3` pairing `w_tilde` with an optimizer's dynamics.
pub fn tilde_constant(kind: OptimizerKind, eta: f64, beta: f64, n: usize, epsilon: f64) -> Result<f64> {
    if !(eta > 0.0) || n == 0 {
        return Err(invalid("tilde constant needs eta > 0 and n >= 1"));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    let n = n as f64;
    match kind {
        OptimizerKind::Gd | OptimizerKind::Gdm => Ok(eta / n),
        OptimizerKind::Sgd | OptimizerKind::Sgdm => Ok(eta / ((1.0 - beta) * n)),
        OptimizerKind::Adam => {
            if !(epsilon > 0.0) {
                return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
            }
            Ok(eta / ((1.0 - beta) * epsilon.sqrt()))
        }
        OptimizerKind::Rmsprop | OptimizerKind::Sahb => {
            Err(invalid(format!("no tilde constant is defined for {}", kind.name())))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeW {
    pub w_tilde: Vec<f64>,
    pub c3: f64,
    /// `max_i |<x_i, w_tilde> - ln(c3 / v_i)|` over the support rows used.
    pub residual: f64,
    /// Indices of the distinct support points that formed the system.
    pub rows: Vec<usize>,
}

/// Minimum-norm least-squares `w_tilde` with `<x_i, w_tilde> = ln(c3 / v_i)` on
/// the support. Identical points share one row (their weights are equal after
/// [`solve_max_margin`]), and points with `v_i < MIN_DUAL_WEIGHT` are skipped.
pub fn solve_tilde_w(sol: &MaxMarginSolution, ds: &Dataset, c3: f64) -> Result<TildeW> {
    if !(c3 > 0.0) || !c3.is_finite() {
        return Err(invalid(format!("c3 must be positive, got {c3}")));
    }
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for (_, group) in duplicate_groups(ds) {
        let members: Vec<usize> =
            group.into_iter().filter(|i| sol.support.contains(i) && sol.dual_v[*i] >= MIN_DUAL_WEIGHT).collect();
        if !members.is_empty() {
            rows.push(members[0]);
            all.extend(members);
        }
    }
    if rows.is_empty() {
        return Err(invalid("empty support"));
    }
    let d = ds.d();
    let a = DMatrix::from_fn(rows.len(), d, |r, c| ds.point(rows[r])[c]);
    let b = DVector::from_fn(rows.len(), |r, _| (c3 / sol.dual_v[rows[r]]).ln());
    let svd = a.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    let x = svd.solve(&b, cutoff).map_err(|e| invalid(e.to_string()))?;
    let w_tilde: Vec<f64> = x.iter().cloned().collect();
    let residual = all
        .iter()
        .map(|&i| (dot(ds.point(i), &w_tilde) - (c3 / sol.dual_v[i]).ln()).abs())
        .fold(0.0, f64::max);
    Ok(TildeW { w_tilde, c3, residual, rows })
}
