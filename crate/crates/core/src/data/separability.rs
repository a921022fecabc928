use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::linalg::{axpy, dot, norm, norm_sq};

/// Perceptron update budget on unit-normalized points. By Novikoff's bound the
/// perceptron succeeds within this budget whenever the normalized margin is at
/// least `1/sqrt(PERCEPTRON_MAX_UPDATES)` (about 3.2e-3).
pub const PERCEPTRON_MAX_UPDATES: usize = 100_000;
/// Norm below which the min-norm point of the (normalized) convex hull counts as zero.
pub const WOLFE_TOL: f64 = 1e-9;
const WOLFE_MAX_ITERS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityMethod {
    Perceptron,
    MinNormPoint,
    ZeroPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityWitness {
    pub separable: bool,
    /// `<w, x_i> > 0` for every point when separable.
    pub witness_w: Option<Vec<f64>>,
    /// Convex weights over the unit-normalized points whose combination has
    /// norm `certificate_norm` (at most `WOLFE_TOL`): zero lies in the hull.
    pub certificate: Option<Vec<f64>>,
    pub certificate_norm: Option<f64>,
    pub method: SeparabilityMethod,
}

/// Strict linear separability through the origin.
///
/// Runs a perceptron on unit-normalized points first; if the update budget runs
/// out, Wolfe's min-norm-point algorithm over the normalized hull decides. A
/// nonzero min-norm point `p` satisfies `<p, x> >= |p|^2 > 0` on the hull and is
/// returned as witness; otherwise the convex weights certify infeasibility.
pub fn check_separable(ds: &Dataset) -> SeparabilityWitness {
    let n = ds.n();
    if let Some(i) = ds.points().iter().position(|p| norm_sq(p) == 0.0) {
        let mut cert = vec![0.0; n];
        cert[i] = 1.0;
        return SeparabilityWitness {
            separable: false,
            witness_w: None,
            certificate: Some(cert),
            certificate_norm: Some(0.0),
            method: SeparabilityMethod::ZeroPoint,
        };
    }
    let unit: Vec<Vec<f64>> = ds
        .points()
        .iter()
        .map(|p| {
            let s = norm(p);
            p.iter().map(|v| v / s).collect()
        })
        .collect();

    if let Some(w) = perceptron(&unit) {
        if strictly_positive(ds, &w) {
            return SeparabilityWitness {
                separable: true,
                witness_w: Some(w),
                certificate: None,
                certificate_norm: None,
                method: SeparabilityMethod::Perceptron,
            };
        }
    }

    let (x, lambda) = min_norm_point(&unit);
    let xn = norm(&x);
    if xn > WOLFE_TOL && strictly_positive(ds, &x) {
        return SeparabilityWitness {
            separable: true,
            witness_w: Some(x),
            certificate: None,
            certificate_norm: None,
            method: SeparabilityMethod::MinNormPoint,
        };
    }
    SeparabilityWitness {
        separable: false,
        witness_w: None,
        certificate: Some(lambda),
        certificate_norm: Some(xn),
        method: SeparabilityMethod::MinNormPoint,
    }
}

fn strictly_positive(ds: &Dataset, w: &[f64]) -> bool {
    ds.points().iter().all(|p| dot(w, p) > 0.0)
}

fn perceptron(unit: &[Vec<f64>]) -> Option<Vec<f64>> {
    let d = unit[0].len();
    let mut w = vec![0.0; d];
    let mut updates = 0;
    loop {
        let mut clean = true;
        for p in unit {
            if dot(&w, p) <= 0.0 {
                axpy(1.0, p, &mut w);
                updates += 1;
                clean = false;
                if updates >= PERCEPTRON_MAX_UPDATES {
                    return None;
                }
            }
        }
        if clean {
            return Some(w);
        }
    }
}

/// Wolfe's algorithm: returns the min-norm point of conv(points) and its convex
/// weights (indexed like `points`).
fn min_norm_point(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = points.len();
    let d = points[0].len();
    let combine = |s: &[usize], lam: &[f64]| {
        let mut x = vec![0.0; d];
        for (&i, &l) in s.iter().zip(lam) {
            axpy(l, &points[i], &mut x);
        }
        x
    };
    let start = (0..n).min_by(|&a, &b| norm_sq(&points[a]).total_cmp(&norm_sq(&points[b]))).unwrap();
    let mut corral = vec![start];
    let mut lam = vec![1.0];
    let mut x = points[start].clone();
    let big = points.iter().map(|p| norm_sq(p)).fold(0.0, f64::max);

    for _ in 0..WOLFE_MAX_ITERS {
        if norm(&x) <= WOLFE_TOL {
            break;
        }
        let (j, best) = (0..n)
            .map(|i| (i, dot(&x, &points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if norm_sq(&x) - best <= 1e-15 * big || corral.contains(&j) {
            break;
        }
        corral.push(j);
        lam.push(0.0);
        loop {
            let mu = affine_min_norm(points, &corral);
            if mu.iter().all(|&m| m > 1e-15) {
                lam = mu;
                break;
            }
            let mut theta = 1.0f64;
            for (l, m) in lam.iter().zip(&mu) {
                if *m <= 1e-15 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lam.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let mut keep_c = Vec::new();
            let mut keep_l = Vec::new();
            for (&c, &l) in corral.iter().zip(&lam) {
                if l > 1e-15 {
                    keep_c.push(c);
                    keep_l.push(l);
                }
            }
            if keep_c.is_empty() {
                keep_c.push(corral[0]);
                keep_l.push(1.0);
            }
            let s: f64 = keep_l.iter().sum();
            keep_l.iter_mut().for_each(|l| *l /= s);
            corral = keep_c;
            lam = keep_l;
        }
        x = combine(&corral, &lam);
    }

    let mut weights = vec![0.0; n];
    for (&i, &l) in corral.iter().zip(&lam) {
        weights[i] += l;
    }
    (x, weights)
}

/// Minimizes `|sum mu_k p_k|` over the affine hull (`sum mu_k = 1`) of the corral.
fn affine_min_norm(points: &[Vec<f64>], corral: &[usize]) -> Vec<f64> {
    let k = corral.len();
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = dot(&points[corral[a]], &points[corral[b]]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| kkt.svd(true, true).solve(&rhs, 1e-13).expect("svd solve"));
    sol.iter().take(k).cloned().collect()
}
