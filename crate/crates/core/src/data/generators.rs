//! Seeded synthetic datasets.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;

use super::{fold_labels, Dataset};
use crate::error::{invalid, Result};
use crate::linalg::dot;
use crate::rng::{seeded_rng, STREAM_GENERATOR};

/// Max-margin direction of the four fixed support points.
pub const SOUDRY_W_HAT: [f64; 2] = [0.5, 0.5];
/// Extra points satisfy `<SOUDRY_W_HAT, x> > 1 + SOUDRY_DELTA_GEN`.
pub const SOUDRY_DELTA_GEN: f64 = 0.1;
/// Unfolded support points and labels. The negative class mirrors the positive
/// one, i.e. `((-1.5,-0.5),-1)` and `((-0.5,-1.5),-1)`.
pub const SOUDRY_SUPPORT: [([f64; 2], f64); 4] = [
    ([1.5, 0.5], 1.0),
    ([0.5, 1.5], 1.0),
    ([-1.5, -0.5], -1.0),
    ([-0.5, -1.5], -1.0),
];
/// Number of large non-support points in the ill-posed set.
pub const ILLPOSED_N_OUTER: usize = 8;

fn folded_support() -> (Vec<Vec<f64>>, Vec<f64>) {
    SOUDRY_SUPPORT.iter().map(|(x, y)| (x.to_vec(), *y)).unzip()
}

/// Four fixed folded support points `{(1.5,0.5),(0.5,1.5)}` (each twice) plus
/// `n_extra` seeded points.
///
/// Extra point: direction angle uniform in `[pi/4 - pi/3, pi/4 + pi/3]`, radius
/// `r = (1 + delta) / <w_true, dir> * (1 + U)` with `U ~ Open01`, so
/// `<w_true, x> = 1.1 (1 + U) > 1.1`. The support set is therefore unchanged.
pub fn make_soudry_dataset(seed: u64, n_extra: usize) -> Dataset {
    let (mut feats, mut labels) = folded_support();
    let mut rng = seeded_rng(seed, STREAM_GENERATOR);
    for _ in 0..n_extra {
        let theta = PI / 4.0 + rng.random_range(-PI / 3.0..=PI / 3.0);
        let dir = [theta.cos(), theta.sin()];
        let u: f64 = rng.sample(Open01);
        let r = (1.0 + SOUDRY_DELTA_GEN) / dot(&SOUDRY_W_HAT, &dir) * (1.0 + u);
        feats.push(vec![r * dir[0], r * dir[1]]);
        labels.push(1.0);
    }
    fold_labels(&feats, &labels).expect("generator output is valid")
}

/// Support pair `(1.5,0.5), (0.5,1.5)` plus `ILLPOSED_N_OUTER` non-support points with
/// `x0 ~ U[-2, 2]` and `x1 ~ U[scale, 3 scale]`. Every outer point has
/// `<(0.5,0.5), x> >= (scale - 2)/2 >= 4`, so the max-margin solution stays `(0.5,0.5)`.
pub fn make_illposed_dataset(seed: u64, scale: f64) -> Result<Dataset> {
    if !(scale >= 10.0) || !scale.is_finite() {
        return Err(invalid(format!("ill-posed scale must be >= 10, got {scale}")));
    }
    let mut pts = vec![vec![1.5, 0.5], vec![0.5, 1.5]];
    let mut rng = seeded_rng(seed, STREAM_GENERATOR);
    for _ in 0..ILLPOSED_N_OUTER {
        let x0 = rng.random_range(-2.0..=2.0);
        let x1 = rng.random_range(scale..=3.0 * scale);
        pts.push(vec![x0, x1]);
    }
    Dataset::new(pts)
}
