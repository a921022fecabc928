use super::*;
use crate::data::make_soudry_dataset;
use crate::maxmargin::{solve_max_margin, solve_tilde_w, tilde_constant, DEFAULT_TOL};
use crate::optimizers::{lr_bound_adam, lr_bound_gdm, run, Hyper, OptimizerConfig, OptimizerKind, SamplerMode, ADAM_T_MAX};
use crate::trajectory::{Recording, Trajectory};
use proptest::prelude::*;

fn gdm_run(ds: &Dataset, spec: LossSpec, eta: f64, beta: f64, steps: u64) -> Trajectory {
    let cfg = OptimizerConfig::new(OptimizerKind::Gdm, Hyper::gdm(eta, beta), SamplerMode::FullBatch, 0);
    run(ds, spec, cfg, vec![0.0; ds.d()], steps, Recording::dense()).unwrap()
}

fn adam_run(ds: &Dataset, spec: LossSpec, eta: f64, b1: f64, b2: f64, steps: u64) -> Trajectory {
    let cfg = OptimizerConfig::new(OptimizerKind::Adam, Hyper::adam(eta, b1, b2, 1e-8), SamplerMode::FullBatch, 0);
    run(ds, spec, cfg, vec![0.0; ds.d()], steps, Recording::dense()).unwrap()
}

#[test]
fn xi_gdm_examples() {
    let ds = Dataset::new(vec![vec![1.0, 0.0]]).unwrap();
    let (eta, beta) = (0.1, 0.9);
    let tr = gdm_run(&ds, LossSpec::Exponential, eta, beta, 3);
    let xi = xi_gdm(&tr.records, eta, beta);
    // Hand computation: w1 = 0, m1 = -0.1, w2 = 0.01, m2 = 0.9 m1 - 0.1 e^{-0.01}, w3 = w2 - 0.1 m2.
    let w2 = 0.01f64;
    let m2 = 0.9 * -0.1 - 0.1 * (-w2).exp();
    let w3 = w2 - 0.1 * m2;
    let k = beta / (2.0 * eta * (1.0 - beta));
    let hand = [1.0, (-w2).exp() + k * w2 * w2, (-w3).exp() + k * (w3 - w2).powi(2)];
    for (a, b) in xi.iter().zip(hand) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let xi0 = xi_gdm(&gdm_run(&ds, LossSpec::Exponential, eta, 0.0, 5).records, eta, 0.0);
    let tr0 = gdm_run(&ds, LossSpec::Exponential, eta, 0.0, 5);
    assert!(xi0.iter().zip(&tr0.records).all(|(x, r)| *x == r.loss));
}

#[test]
fn gdm_descent_on_four_point_set() {
    let ds = make_soudry_dataset(0, 0);
    for spec in [LossSpec::Exponential, LossSpec::Logistic] {
        let tr = gdm_run(&ds, spec, 0.1, 0.9, 10_000);
        let chk = check_descent_gdm(&tr.records, 0.1, 0.9, &ds, spec, &[0.0, 0.0]).unwrap();
        assert_eq!(chk.checked, 9_999);
        assert_eq!(chk.violations, 0, "{spec:?} worst {}", chk.worst_slack);
    }
}

#[test]
fn gdm_descent_beta_zero_is_plain_descent() {
    let ds = make_soudry_dataset(4, 6);
    let eta = 0.2;
    let tr = gdm_run(&ds, LossSpec::Logistic, eta, 0.0, 200);
    let chk = check_descent_gdm(&tr.records, eta, 0.0, &ds, LossSpec::Logistic, &[0.0, 0.0]).unwrap();
    let c1 = c1_gdm(&ds, LossSpec::Logistic, &[0.0, 0.0], eta).unwrap();
    for (i, s) in chk.slack.iter().enumerate() {
        let (a, b) = (&tr.records[i], &tr.records[i + 1]);
        let plain = a.loss - b.loss - (1.0 - c1) / eta * norm_sq(&b.delta_w);
        assert!((s - plain).abs() < 1e-15);
    }
}

#[test]
fn large_step_is_observational() {
    let ds = make_soudry_dataset(0, 0);
    let bound = lr_bound_gdm(&ds, LossSpec::Exponential, &[0.0, 0.0]).unwrap().bound;
    let eta = 10.0 * bound;
    let cfg = OptimizerConfig::new(OptimizerKind::Gdm, Hyper::gdm(eta, 0.9), SamplerMode::FullBatch, 0);
    if let Ok(tr) = run(&ds, LossSpec::Exponential, cfg, vec![0.0; 2], 200, Recording::dense()) {
        let chk = check_descent_gdm(&tr.records, eta, 0.9, &ds, LossSpec::Exponential, &[0.0, 0.0]).unwrap();
        assert_eq!(chk.checked, 199);
    }
}

#[test]
fn u_series_and_identity() {
    let ds = make_soudry_dataset(0, 10);
    let tr = gdm_run(&ds, LossSpec::Logistic, 0.1, 0.0, 50);
    let us = u_series(&tr.records, 0.0, &ds, LossSpec::Logistic).unwrap();
    assert!(us.iter().zip(&tr.records).all(|(u, r)| u.u == r.w));
    assert!(u_series(&tr.records, 1.0, &ds, LossSpec::Logistic).is_err());

    for (kind, mode) in [(OptimizerKind::Gdm, SamplerMode::FullBatch), (OptimizerKind::Sgdm, SamplerMode::WithReplacement), (OptimizerKind::Sgdm, SamplerMode::WithoutReplacement)] {
        let cfg = OptimizerConfig::new(kind, Hyper::sgdm(0.1, 0.9, 1), mode, 3);
        let tr = run(&ds, LossSpec::Logistic, cfg, vec![0.0; 2], 2000, Recording::dense()).unwrap();
        let us = u_series(&tr.records, 0.9, &ds, LossSpec::Logistic).unwrap();
        assert_eq!(us[0].u, tr.records[0].w);
        assert!(u_identity_error(&tr.records, 0.9, &ds, LossSpec::Logistic) <= 1e-12);
    }
}

#[test]
fn residual_examples() {
    let ds = make_soudry_dataset(0, 0);
    let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
    let tw = solve_tilde_w(&sol, &ds, tilde_constant(OptimizerKind::Gdm, 0.1, 0.9, 4, 0.0).unwrap()).unwrap();
    let tr = gdm_run(&ds, LossSpec::Exponential, 0.1, 0.9, 20);
    let r = residual_series(&tr.records, &sol.w_hat, &tw.w_tilde);
    assert!((r[0] - norm(&sub(&tr.records[0].w, &tw.w_tilde))).abs() < 1e-15);
}

#[test]
fn residual_stays_bounded_and_drift_settles() {
    let ds = make_soudry_dataset(0, 0);
    let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
    let tw = solve_tilde_w(&sol, &ds, tilde_constant(OptimizerKind::Gdm, 0.1, 0.9, 4, 0.0).unwrap()).unwrap();
    let tr = gdm_run(&ds, LossSpec::Exponential, 0.1, 0.9, 20_000);
    let r = residual_series(&tr.records, &sol.w_hat, &tw.w_tilde);
    let late = window_max(&tr.records, &r, 10_000, 20_000).unwrap();
    let early = window_max(&tr.records, &r, 2_000, 4_000).unwrap();
    assert!(late <= 1.2 * early, "{late} vs {early}");
    let drift = w_hat_drift(&tr.records, &sol.w_hat);
    let tail = &drift[5_000..];
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1.0, "{spread}");
}

#[test]
fn g_gdm_reduces_and_identity_holds() {
    let ds = make_soudry_dataset(0, 10);
    let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
    for beta in [0.0, 0.5, 0.9] {
        let c3 = tilde_constant(OptimizerKind::Gdm, 0.1, beta, ds.n(), 0.0).unwrap();
        let tw = solve_tilde_w(&sol, &ds, c3).unwrap();
        let tr = gdm_run(&ds, LossSpec::Logistic, 0.1, beta, 3000);
        let gs = g_series_gdm(&tr.records, &sol.w_hat, &tw.w_tilde, beta, &ds, LossSpec::Logistic).unwrap();
        assert!(gs.identity_max_err <= 1e-10, "beta {beta}: {}", gs.identity_max_err);
        if beta == 0.0 {
            let r = residual_series(&tr.records, &sol.w_hat, &tw.w_tilde);
            assert!(gs.g.iter().zip(&r).all(|(g, r)| (g - 0.5 * r * r).abs() < 1e-12));
        }
    }
    let sparse = run(&ds, LossSpec::Logistic, OptimizerConfig::new(OptimizerKind::Gdm, Hyper::gdm(0.1, 0.9), SamplerMode::FullBatch, 0), vec![0.0; 2], 100, Recording { every: 5, dense_until: 10 }).unwrap();
    assert!(g_series_gdm(&sparse.records, &sol.w_hat, &[0.0, 0.0], 0.9, &ds, LossSpec::Logistic).is_err());
}

#[test]
fn xi_adam_examples() {
    let ds = make_soudry_dataset(0, 0);
    let tr = adam_run(&ds, LossSpec::Logistic, 1e-3, 0.9, 0.999, 50);
    let xi = xi_adam(&tr.records, 1e-3, 0.9, 1e-8).unwrap();
    assert_eq!(xi[0], tr.records[0].loss);

    // With beta1 = 0 the momentum term of the right-hand side vanishes, leaving
    // L(t+1) + |dw(t+1)|^2_{nu(t)} / (2 eta) <= L(t).
    let tr = adam_run(&ds, LossSpec::Logistic, 1e-4, 0.0, 0.999, 200);
    let chk = check_descent_adam(&tr.records, 1e-4, 0.0, 0.999, 1e-8).unwrap();
    for (i, s) in chk.slack.iter().enumerate() {
        let (a, b) = (&tr.records[i], &tr.records[i + 1]);
        let nu = a.nu_hat.as_ref().unwrap();
        let pq: f64 = nu.iter().zip(&b.delta_w).map(|(n, d)| (1e-8 + n).sqrt() * d * d).sum();
        let plain = a.loss - (b.loss + pq / (2.0 * 1e-4));
        assert!((s - plain).abs() < 1e-15);
    }
    let mut stripped = tr.clone();
    stripped.records.iter_mut().for_each(|r| r.nu_hat = None);
    assert!(xi_adam(&stripped.records, 1e-4, 0.0, 1e-8).is_err());
}

#[test]
fn adam_inequality_under_bound() {
    let ds = make_soudry_dataset(0, 0);
    for spec in [LossSpec::Exponential, LossSpec::Logistic] {
        let bound = lr_bound_adam(&ds, spec, 0.9, 0.999, 1e-8, &[0.0, 0.0], ADAM_T_MAX).unwrap().bound;
        let tr = adam_run(&ds, spec, 0.5 * bound, 0.9, 0.999, 10_000);
        let chk = check_descent_adam(&tr.records, 0.5 * bound, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(chk.violations, 0, "{spec:?} worst {}", chk.worst_slack);
    }
}

#[test]
fn g_adam_reduces_and_identity_holds() {
    let ds = make_soudry_dataset(0, 10);
    let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
    for b1 in [0.0, 0.9] {
        let eta = 1e-3;
        let c3 = tilde_constant(OptimizerKind::Adam, eta, b1, ds.n(), 1e-8).unwrap();
        let tw = solve_tilde_w(&sol, &ds, c3).unwrap();
        let tr = adam_run(&ds, LossSpec::Logistic, eta, b1, 0.999, 3000);
        let gs = g_series_adam(&tr.records, &sol.w_hat, &tw.w_tilde, eta, b1, 1e-8, &ds, LossSpec::Logistic).unwrap();
        assert!(gs.identity_max_err <= 1e-10, "{}", gs.identity_max_err);
        if b1 == 0.0 {
            let r = residual_series(&tr.records, &sol.w_hat, &tw.w_tilde);
            assert!(gs.g.iter().zip(&r).all(|(g, r)| (g - 0.5 * 1e-4 * r * r).abs() < 1e-15));
        }
    }
}

#[test]
fn angle_examples() {
    let wh = [0.5, 0.5];
    assert_eq!(angle_gap(&wh, &wh).unwrap(), 0.0);
    assert!((angle_gap(&[1.0, -1.0], &wh).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!(angle_gap(&[1.0, 1.0], &wh).unwrap().abs() < 1e-7);
    assert!(angle_gap(&[0.0, 0.0], &wh).is_err());
}

#[test]
fn rates_need_long_runs() {
    let ds = make_soudry_dataset(0, 0);
    let tr = gdm_run(&ds, LossSpec::Logistic, 0.1, 0.9, 500);
    assert!(rate_estimates(&tr.records).is_err());
    let tr = gdm_run(&ds, LossSpec::Logistic, 0.1, 0.9, 2000);
    let r = rate_estimates(&tr.records).unwrap();
    assert_eq!(r.window, (200, 2000));
    assert!(r.tl_plateau > 0.0 && r.wnorm_over_lnt_tail > 0.0);
}

#[test]
fn medians() {
    assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn dyadic_sums() {
    let v: Vec<f64> = (1..=16).map(|t| 1.0 / (t * t) as f64).collect();
    let s = dyadic_window_sums(&v, 1);
    assert_eq!(s.len(), 4);
    assert_eq!(s[0], 1.0);
    assert!((s[1] - (0.25 + 1.0 / 9.0)).abs() < 1e-15);
    assert!(s.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn grad_bracket_in_late_trajectory() {
    let ds = make_soudry_dataset(0, 10);
    let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
    let tr = gdm_run(&ds, LossSpec::Logistic, 0.1, 0.9, 5000);
    let mut checked = 0;
    for r in tr.records.iter().skip(100) {
        let b = crate::losses::grad_loss_bracket(LossSpec::Logistic, &ds, sol.gamma, &r.w).unwrap();
        if b.below_threshold {
            checked += 1;
            assert!(b.holds());
        }
    }
    assert!(checked > 4000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn sandwich_holds_exhaustively(seed in any::<u64>(), n in 0usize..=3, wx in -1.0f64..3.0, wy in -1.0f64..3.0, logistic in any::<bool>()) {
        let spec = if logistic { LossSpec::Logistic } else { LossSpec::Exponential };
        let ds = make_soudry_dataset(seed, n);
        let sol = solve_max_margin(&ds, DEFAULT_TOL).unwrap();
        for b in 1..=ds.n() {
            let s = second_moment_sandwich(spec, &ds, &[wx, wy], b, sol.gamma).unwrap();
            prop_assert!(s.holds(1e-10), "{:?}", s);
        }
    }

    #[test]
    fn angle_is_scale_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, s in 0.01f64..100.0) {
        prop_assume!(x.abs() + y.abs() > 1e-3);
        let wh = [0.5, 0.5];
        let a = angle_gap(&[x, y], &wh).unwrap();
        let b = angle_gap(&[s * x, s * y], &wh).unwrap();
        prop_assert!((a - b).abs() < 1e-7);
    }
}
