use serde::{Deserialize, Serialize};

use super::*;
use crate::maxmargin::{solve_max_margin, solve_tilde_w, tilde_constant, DEFAULT_TOL};
use crate::optimizers::OptimizerKind;
use crate::trajectory::Trajectory;

/// Column order of the per-step series CSV.
pub const SERIES_COLUMNS: [&str; 10] =
    ["t", "loss", "grad_norm", "delta_w_norm", "xi", "g", "L_u", "r_norm", "angle", "tL"];

/// One row of the plot-ready series; `None` marks an inapplicable diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub delta_w_norm: f64,
    pub xi: Option<f64>,
    pub g: Option<f64>,
    #[serde(rename = "L_u")]
    pub l_u: Option<f64>,
    pub r_norm: Option<f64>,
    pub angle: Option<f64>,
    #[serde(rename = "tL")]
    pub tl: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub violations: usize,
    pub checked: usize,
    pub worst_slack: f64,
}

impl From<&DescentCheck> for ViolationSummary {
    fn from(c: &DescentCheck) -> Self {
        ViolationSummary { violations: c.violations, checked: c.checked, worst_slack: c.worst_slack }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kind: OptimizerKind,
    pub loss: LossSpec,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    /// Last step of the dense prefix that fed the cumulative diagnostics.
    pub dense_horizon: u64,
    pub final_t: u64,
    pub final_loss: f64,
    pub final_w: Vec<f64>,
    pub final_angle: Option<f64>,
    pub w_hat: Vec<f64>,
    pub gamma: f64,
    pub c3: Option<f64>,
    pub w_tilde: Option<Vec<f64>>,
    pub tilde_residual: Option<f64>,
    /// Potential descent check (deterministic GD/GDM and Adam).
    pub descent: Option<ViolationSummary>,
    pub u_identity_max_err: Option<f64>,
    pub g_identity_max_err: Option<f64>,
    /// `max |r|` over `[T/2, T]` divided by `max |r|` over `[T/10, T/5]`.
    pub r_window_ratio: Option<f64>,
    /// `max g` over `[T/10, T]` relative to `max g` over `[T/100, T/10]`, minus 1.
    pub g_window_growth: Option<f64>,
    pub rates: Option<RateEstimates>,
    pub min_update_norm: Option<f64>,
    /// Records with `L < C_l` and how many break `(gamma/4) L <= |grad L| <= 4 max(1,R) L`.
    pub bracket_checked: usize,
    pub bracket_violations: usize,
    pub notes: Vec<String>,
}

/// Full diagnostic pass over a sealed trajectory; cumulative functionals use the
/// dense prefix up to `horizon`.
pub fn diagnose(traj: &Trajectory, horizon: u64) -> Result<(DiagnosticsReport, Vec<SeriesRow>)> {
    let ds = &traj.dataset;
    let spec = traj.loss;
    let h = traj.hyper;
    let kind = traj.kind;
    let records = &traj.records;
    let dense = traj.dense_until(horizon)?;
    let w1 = &records[0].w;
    let sol = solve_max_margin(ds, DEFAULT_TOL)?;
    let mut notes = Vec::new();

    let tilde = match tilde_constant(kind, h.eta, h.beta1, ds.n(), h.epsilon) {
        Ok(c3) => Some(solve_tilde_w(&sol, ds, c3)?),
        Err(_) => {
            notes.push(format!("no residual centering constant for {}; r(t) not reported", kind.name()));
            None
        }
    };
    if matches!(kind, OptimizerKind::Sgd | OptimizerKind::Sgdm) {
        notes.push("stochastic residual omits the sampling drift term; a wider bounded band is expected".into());
    }

    let n = records.len();
    let mut xi: Vec<Option<f64>> = vec![None; n];
    let mut g: Vec<Option<f64>> = vec![None; n];
    let mut l_u: Vec<Option<f64>> = vec![None; n];
    let mut descent = None;
    let mut u_err = None;
    let mut g_err = None;
    let mut g_vals: Option<Vec<f64>> = None;

    if kind.is_heavy_ball() {
        for (slot, v) in xi.iter_mut().zip(xi_gdm(records, h.eta, h.beta1)) {
            *slot = Some(v);
        }
        for (slot, s) in l_u.iter_mut().zip(u_series(records, h.beta1, ds, spec)?) {
            *slot = Some(s.loss_u);
        }
        u_err = Some(u_identity_error(dense, h.beta1, ds, spec));
        if !kind.is_stochastic() {
            descent = Some(ViolationSummary::from(&check_descent_gdm(dense, h.eta, h.beta1, ds, spec, w1)?));
        }
        if let Some(tw) = &tilde {
            let gs = g_series_gdm(dense, &sol.w_hat, &tw.w_tilde, h.beta1, ds, spec)?;
            g_err = Some(gs.identity_max_err);
            g_vals = Some(gs.g);
        }
    } else if kind == OptimizerKind::Adam {
        for (slot, v) in xi.iter_mut().zip(xi_adam(dense, h.eta, h.beta1, h.epsilon)?) {
            *slot = Some(v);
        }
        descent = Some(ViolationSummary::from(&check_descent_adam(dense, h.eta, h.beta1, h.beta2, h.epsilon)?));
        if let Some(tw) = &tilde {
            let gs = g_series_adam(dense, &sol.w_hat, &tw.w_tilde, h.eta, h.beta1, h.epsilon, ds, spec)?;
            g_err = Some(gs.identity_max_err);
            g_vals = Some(gs.g);
        }
    } else if kind == OptimizerKind::Sahb {
        for (slot, s) in l_u.iter_mut().zip(u_series(records, h.beta1, ds, spec)?) {
            *slot = Some(s.loss_u);
        }
    }
    if let Some(gv) = &g_vals {
        for (slot, v) in g.iter_mut().zip(gv) {
            *slot = Some(*v);
        }
    }

    let r_norm: Option<Vec<f64>> = tilde.as_ref().map(|tw| residual_series(records, &sol.w_hat, &tw.w_tilde));
    let big_t = dense.last().unwrap().t;
    let r_window_ratio = r_norm.as_ref().and_then(|r| {
        let late = window_max(dense, r, big_t / 2, big_t)?;
        let early = window_max(dense, r, big_t / 10, big_t / 5)?;
        (big_t >= 10).then(|| late / early)
    });
    let g_window_growth = g_vals.as_ref().and_then(|gv| {
        let late = window_max(dense, gv, big_t / 10, big_t)?;
        let early = window_max(dense, gv, (big_t / 100).max(1), big_t / 10)?;
        (big_t >= 100).then(|| late / early - 1.0)
    });

    let threshold = spec.small_loss_threshold(ds.n());
    let (mut b_checked, mut b_viol) = (0, 0);
    let max_norm = ds.max_point_norm().max(1.0);
    for r in records.iter().filter(|r| r.loss < threshold) {
        b_checked += 1;
        if !(sol.gamma / 4.0 * r.loss <= r.grad_norm && r.grad_norm <= 4.0 * max_norm * r.loss) {
            b_viol += 1;
        }
    }

    let rows: Vec<SeriesRow> = records
        .iter()
        .enumerate()
        .map(|(i, r)| SeriesRow {
            t: r.t,
            loss: r.loss,
            grad_norm: r.grad_norm,
            delta_w_norm: r.delta_w_norm(),
            xi: xi[i],
            g: g[i],
            l_u: l_u[i],
            r_norm: r_norm.as_ref().map(|v| v[i]),
            angle: angle_gap(&r.w, &sol.w_hat).ok(),
            tl: r.t as f64 * r.loss,
        })
        .collect();

    let last = traj.last();
    let report = DiagnosticsReport {
        kind,
        loss: spec,
        n: ds.n(),
        d: ds.d(),
        eta: h.eta,
        dense_horizon: big_t,
        final_t: last.t,
        final_loss: last.loss,
        final_w: last.w.clone(),
        final_angle: angle_gap(&last.w, &sol.w_hat).ok(),
        gamma: sol.gamma,
        w_hat: sol.w_hat,
        c3: tilde.as_ref().map(|t| t.c3),
        tilde_residual: tilde.as_ref().map(|t| t.residual),
        w_tilde: tilde.map(|t| t.w_tilde),
        descent,
        u_identity_max_err: u_err,
        g_identity_max_err: g_err,
        r_window_ratio,
        g_window_growth,
        rates: rate_estimates(records).ok(),
        min_update_norm: min_update_norm(records),
        bracket_checked: b_checked,
        bracket_violations: b_viol,
        notes,
    };
    Ok((report, rows))
}
