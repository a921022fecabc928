//! Exponential-tailed losses `l(x)`, evaluated at margins `x = <w, x_i>`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSpec {
    /// `e^{-x}`
    Exponential,
    /// `ln(1 + e^{-x})`
    Logistic,
}

/// Constants with `(1 - e^{-mu_minus x}) e^{-x} <= -l'(x)` for `x > x_minus`
/// and `-l'(x) <= (1 + e^{-mu_plus x}) e^{-x}` for `x > x_plus`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub x_plus: f64,
    pub x_minus: f64,
}

/// Grid used to locate the bracket threshold `x0`.
pub const BRACKET_GRID: (f64, f64, f64) = (-20.0, 20.0, 0.01);

impl LossSpec {
    pub fn name(self) -> &'static str {
        match self {
            LossSpec::Exponential => "exponential",
            LossSpec::Logistic => "logistic",
        }
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            LossSpec::Exponential => (-x).exp(),
            LossSpec::Logistic => {
                if x > 0.0 {
                    (-x).exp().ln_1p()
                } else {
                    -x + x.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            LossSpec::Exponential => -(-x).exp(),
            LossSpec::Logistic => {
                if x >= 0.0 {
                    let e = (-x).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + x.exp())
                }
            }
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            LossSpec::Exponential => (-x).exp(),
            LossSpec::Logistic => {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// `x` with `l(x) = v`, for `v > 0`.
    pub fn inverse(self, v: f64) -> f64 {
        match self {
            LossSpec::Exponential => -v.ln(),
            LossSpec::Logistic => {
                // l^{-1}(v) = -ln(e^v - 1); for large v factor out e^v.
                if v > 30.0 {
                    -(v + (-(-v).exp()).ln_1p())
                } else {
                    -v.exp_m1().ln()
                }
            }
        }
    }

    /// Lipschitz constant of `l'` on `[s0, inf)`.
    pub fn smoothness_at(self, s0: f64) -> f64 {
        match self {
            LossSpec::Exponential => (-s0).exp(),
            // l'' peaks at 0 with value 1/4 and decreases for x > 0.
            LossSpec::Logistic => {
                if s0 <= 0.0 {
                    0.25
                } else {
                    self.second_derivative(s0).min(0.25)
                }
            }
        }
    }

    /// Global smoothness, when `l'` is globally Lipschitz.
    pub fn global_smoothness(self) -> Option<f64> {
        match self {
            LossSpec::Exponential => None,
            LossSpec::Logistic => Some(0.25),
        }
    }

    pub fn tail_constants(self) -> TailConstants {
        match self {
            LossSpec::Exponential => TailConstants { mu_plus: 1.0, mu_minus: 1.0, x_plus: 0.0, x_minus: 0.0 },
            LossSpec::Logistic => TailConstants { mu_plus: 1.0, mu_minus: 1.0, x_plus: 1.0, x_minus: 0.0 },
        }
    }

    /// Smallest grid point `x0` of [`BRACKET_GRID`] such that
    /// `-l'(x)/4 <= l(x) <= -4 l'(x)` at every grid point `x >= x0`.
    ///
    /// Exponential: `l = -l'`, so `x0` is the grid floor (-20).
    /// Logistic: `l >= -l'` everywhere and `l <= -4 l'` fails only for very
    /// negative margins; the scan gives `x0 = -3.90`.
    pub fn bracket_x0(self) -> f64 {
        let (lo, hi, step) = BRACKET_GRID;
        let steps = ((hi - lo) / step).round() as i64;
        let mut x0 = lo;
        for k in (0..=steps).rev() {
            let x = lo + k as f64 * step;
            let (l, dl) = (self.value(x), -self.derivative(x));
            if !(dl / 4.0 <= l && l <= 4.0 * dl) {
                x0 = lo + (k + 1) as f64 * step;
                break;
            }
        }
        x0
    }

    /// Loss threshold `C_l = l(x0) / N`: below it every margin exceeds `x0`.
    pub fn small_loss_threshold(self, n: usize) -> f64 {
        self.value(self.bracket_x0()) / n as f64
    }
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{x}")))
    }
}

pub fn loss_value(spec: LossSpec, x: f64) -> Result<f64> {
    finite(x)?;
    finite(spec.value(x))
}

pub fn loss_derivative(spec: LossSpec, x: f64) -> Result<f64> {
    finite(x)?;
    finite(spec.derivative(x))
}

pub fn loss_inverse(spec: LossSpec, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("loss inverse needs 0 < v < inf, got {v}")));
    }
    finite(spec.inverse(v))
}

pub fn smoothness_at(spec: LossSpec, s0: f64) -> f64 {
    spec.smoothness_at(s0)
}

fn check_w(ds: &Dataset, w: &[f64]) -> Result<()> {
    if w.len() != ds.d() {
        return Err(Error::DimensionMismatch { expected: ds.d(), got: w.len() });
    }
    Ok(())
}

/// Mean loss and gradient over `idx`. Full-data and batch evaluation share this
/// loop so a batch of all indices in order is bit-identical to the full gradient.
pub(crate) fn mean_loss_grad<I>(spec: LossSpec, ds: &Dataset, idx: I, w: &[f64]) -> (f64, Vec<f64>)
where
    I: IntoIterator<Item = usize>,
{
    let mut loss = 0.0;
    let mut grad = vec![0.0; ds.d()];
    let mut count = 0usize;
    for i in idx {
        let x = ds.point(i);
        let m = dot(w, x);
        loss += spec.value(m);
        axpy(spec.derivative(m), x, &mut grad);
        count += 1;
    }
    let c = count as f64;
    grad.iter_mut().for_each(|g| *g /= c);
    (loss / c, grad)
}

fn check_indices(ds: &Dataset, idx: &[usize]) -> Result<()> {
    if idx.is_empty() {
        return Err(invalid("empty index set"));
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= ds.n()) {
        return Err(invalid(format!("index {i} out of range for n = {}", ds.n())));
    }
    Ok(())
}

pub fn empirical_loss(spec: LossSpec, ds: &Dataset, w: &[f64]) -> Result<f64> {
    check_w(ds, w)?;
    Ok(mean_loss_grad(spec, ds, 0..ds.n(), w).0)
}

pub fn empirical_grad(spec: LossSpec, ds: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    check_w(ds, w)?;
    Ok(mean_loss_grad(spec, ds, 0..ds.n(), w).1)
}

pub fn batch_loss(spec: LossSpec, ds: &Dataset, idx: &[usize], w: &[f64]) -> Result<f64> {
    check_w(ds, w)?;
    check_indices(ds, idx)?;
    Ok(mean_loss_grad(spec, ds, idx.iter().copied(), w).0)
}

pub fn batch_grad(spec: LossSpec, ds: &Dataset, idx: &[usize], w: &[f64]) -> Result<Vec<f64>> {
    check_w(ds, w)?;
    check_indices(ds, idx)?;
    Ok(mean_loss_grad(spec, ds, idx.iter().copied(), w).1)
}

/// `(gamma/4) L <= |grad L| <= 4 R L` with `R = max(1, max_i |x_i|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradLossBracket {
    pub loss: f64,
    pub grad_norm: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether `loss < C_l`, the regime in which the bracket is guaranteed.
    pub below_threshold: bool,
}

impl GradLossBracket {
    pub fn holds(&self) -> bool {
        self.lower <= self.grad_norm && self.grad_norm <= self.upper
    }
}

pub fn grad_loss_bracket(spec: LossSpec, ds: &Dataset, gamma: f64, w: &[f64]) -> Result<GradLossBracket> {
    check_w(ds, w)?;
    let (loss, grad) = mean_loss_grad(spec, ds, 0..ds.n(), w);
    let r = ds.max_point_norm().max(1.0);
    Ok(GradLossBracket {
        loss,
        grad_norm: norm(&grad),
        lower: gamma / 4.0 * loss,
        upper: 4.0 * r * loss,
        below_threshold: loss < spec.small_loss_threshold(ds.n()),
    })
}
