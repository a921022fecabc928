use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::linalg::{dot, norm};

pub const POWER_REL_TOL: f64 = 1e-12;
pub const POWER_MAX_ITERS: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralNorm {
    pub value: f64,
    /// Set when every point is zero; `value` is then 0.
    pub degenerate: bool,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Largest singular value of the point matrix (cached on the dataset).
pub fn spectral_norm(ds: &Dataset) -> SpectralNorm {
    ds.spectral().clone()
}

/// Power iteration on the d x d Gram matrix `sum_i x_i x_i^T`.
pub(super) fn power_iteration(points: &[Vec<f64>], d: usize) -> SpectralNorm {
    let mut gram = vec![vec![0.0; d]; d];
    for p in points {
        for (r, row) in gram.iter_mut().enumerate() {
            for (c, g) in row.iter_mut().enumerate() {
                *g += p[r] * p[c];
            }
        }
    }
    let scale = gram.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return SpectralNorm { value: 0.0, degenerate: true, iterations: 0, rel_residual: 0.0 };
    }
    let apply = |v: &[f64]| -> Vec<f64> { gram.iter().map(|row| dot(row, v)).collect() };

    // Fixed, irrational-looking mix of Gram columns so the start is never
    // orthogonal to the top eigenvector in practice.
    let mix: Vec<f64> = (0..d).map(|j| 1.0 + ((j as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let mut v = apply(&mix);
    if norm(&v) == 0.0 {
        let j = (0..d).max_by(|&a, &b| gram[a][a].total_cmp(&gram[b][b])).unwrap_or(0);
        v = gram[j].clone();
    }

    let mut lambda = 0.0;
    let mut rel = f64::INFINITY;
    let mut iters = 0;
    while iters < POWER_MAX_ITERS {
        iters += 1;
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let gv = apply(&v);
        lambda = dot(&v, &gv);
        let res: f64 = gv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        rel = if lambda > 0.0 { res / lambda } else { f64::INFINITY };
        if rel <= POWER_REL_TOL {
            break;
        }
        v = gv;
    }
    SpectralNorm { value: lambda.max(0.0).sqrt(), degenerate: false, iterations: iters, rel_residual: rel }
}
