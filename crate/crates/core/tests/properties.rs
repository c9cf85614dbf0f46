mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use spac::conditions::{
    block_exchangeable_cov, check_irrepresentable, exchangeable_sufficient_check, random_c1_covariance,
};
use spac::penalty::{adaptive_threshold, scad_threshold, soft_threshold};
use spac::precision::{
    ols_residual_precision_diag, sample_precision_diag, sqrt_lasso_column, PrecisionDiag,
};
use spac::simulation::{builtin_setting, generate_design, run_setting_with, BetaValue, RunOptions, SettingId};
use spac::solver::{coordinate_descent_fit, lambda_max};
use spac::{standardize, Error, FitControls, Method, PenaltySpec};

fn tight() -> FitControls {
    FitControls {
        tol: 1e-12,
        max_iter: 200_000,
    }
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Valid block-exchangeable triples; draws that are not positive definite are discarded by the caller.
fn alpha_triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..0.9f64, -0.6..0.6f64, 0.0..0.9f64)
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn threshold_maps_are_odd_shrinkages(z in -50.0..50.0f64, lambda in 0.0..5.0f64, a in 2.01..8.0f64, w in 0.0..4.0f64) {
        let maps: [Box<dyn Fn(f64) -> f64>; 3] = [
            Box::new(move |z| soft_threshold(z, lambda)),
            Box::new(move |z| adaptive_threshold(z, lambda, w)),
            Box::new(move |z| scad_threshold(z, lambda, a)),
        ];
        for f in &maps {
            prop_assert_eq!(f(-z), -f(z));
            prop_assert!(f(z).abs() <= z.abs());
        }
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn standardize_is_idempotent_and_reversible(seed in any::<u64>(), n in 5usize..40, p in 1usize..8) {
        let mut r = rng(seed);
        let raw = DMatrix::from_fn(n, p, |_, j| 3.0 * j as f64 + 10.0 * rand::Rng::random::<f64>(&mut r));
        let y = DVector::from_fn(n, |i, _| i as f64 + rand::Rng::random::<f64>(&mut r));
        let once = standardize(&raw, &y).unwrap();
        let twice = standardize(once.x(), once.y()).unwrap();
        prop_assert!((once.x() - twice.x()).amax() <= 1e-12);
        prop_assert!((once.y() - twice.y()).amax() <= 1e-12);
        let back = once.unscaled_x();
        prop_assert!((&back - &raw).amax() <= 1e-10 * raw.amax());
    }

    #[test]
    fn sample_and_ols_precision_differ_by_degrees_of_freedom(seed in any::<u64>(), n in 15usize..60, p in 2usize..8) {
        let data = random_problem(n, p, seed, &[]);
        let sample = sample_precision_diag(&data).unwrap();
        let ols = ols_residual_precision_diag(&data).unwrap();
        let factor = n as f64 / (n - p + 1) as f64;
        for j in 0..p {
            prop_assert!((sample.d[j] - factor * ols.d[j]).abs() <= 1e-8 * sample.d[j]);
            prop_assert!((sample.d[j] - residual_precision(data.x(), j)).abs() <= 1e-8 * sample.d[j]);
        }
    }

    #[test]
    fn sqrt_lasso_columns_satisfy_kkt(seed in any::<u64>(), lambda_d in 0.05..0.6f64) {
        let (n, p) = (40, 12);
        let data = random_problem(n, p, seed, &[]);
        for j in [0, p / 2, p - 1] {
            let b = sqrt_lasso_column(&data, j, lambda_d).unwrap();
            let u = data.x() * DVector::from_column_slice(&b);
            let scale = (n as f64).sqrt() * u.norm();
            for k in (0..p).filter(|&k| k != j) {
                let score = data.x().column(k).dot(&u) / scale;
                prop_assert!(score.abs() <= lambda_d + 1e-6);
                if b[k] != 0.0 {
                    prop_assert!((score + lambda_d * b[k].signum()).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn converged_lasso_fits_satisfy_kkt(seed in any::<u64>(), frac in 0.02..0.9f64, high_dim in any::<bool>()) {
        let (n, p) = if high_dim { (30, 45) } else { (50, 15) };
        let data = random_problem(n, p, seed, &[1.2, -0.9, 0.6]);
        let d = random_d(p, seed ^ 0x5eed);
        let lambda = frac * lambda_max(&data, &d, &PenaltySpec::lasso(0.0)).unwrap();
        let fit = coordinate_descent_fit(&data, &d, &PenaltySpec::lasso(lambda), &vec![0.0; p], &tight()).unwrap();
        let (v, signs) = kkt_violation(&data, &d.d, &vec![1.0; p], lambda, &fit.gamma);
        prop_assert!(v <= 1e-4);
        prop_assert!(signs);
    }

    #[test]
    fn convex_objectives_decrease_every_sweep(seed in any::<u64>(), frac in 0.05..0.8f64) {
        let (n, p) = (40, 25);
        let data = random_problem(n, p, seed, &[1.0, 0.5]);
        let d = random_d(p, seed.wrapping_add(1));
        let lambda = frac * lambda_max(&data, &d, &PenaltySpec::lasso(0.0)).unwrap();
        let weights: Vec<f64> = (0..p).map(|j| 0.5 + (j % 4) as f64).collect();
        for spec in [PenaltySpec::lasso(lambda), PenaltySpec::adaptive(lambda, 1.0, weights.clone()), PenaltySpec::scad(lambda, 3.7)] {
            let fit = coordinate_descent_fit(&data, &d, &spec, &vec![0.0; p], &tight()).unwrap();
            let mut prev = 0.5 * data.y().norm_squared();
            for v in &fit.trace {
                prop_assert!(*v <= prev + 1e-10);
                prev = *v;
            }
        }
    }

    #[test]
    fn column_permutation_permutes_the_fit(seed in any::<u64>(), frac in 0.05..0.7f64) {
        let (n, p) = (50, 10);
        let data = random_problem(n, p, seed, &[1.0, -1.0, 0.5]);
        let d = random_d(p, seed ^ 7);
        let mut perm: Vec<usize> = (0..p).collect();
        perm.rotate_left((seed % p as u64) as usize);
        perm.swap(0, p - 1);
        let permuted = data.select_columns(&perm);
        let dp = PrecisionDiag { d: perm.iter().map(|&j| d.d[j]).collect(), ..d.clone() };
        let lambda = frac * lambda_max(&data, &d, &PenaltySpec::lasso(0.0)).unwrap();
        let a = coordinate_descent_fit(&data, &d, &PenaltySpec::lasso(lambda), &vec![0.0; p], &tight()).unwrap();
        let b = coordinate_descent_fit(&permuted, &dp, &PenaltySpec::lasso(lambda), &vec![0.0; p], &tight()).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            prop_assert!((b.gamma[i] - a.gamma[j]).abs() <= 1e-6);
        }
    }

    #[test]
    fn unit_precision_reduces_to_the_baseline(seed in any::<u64>(), frac in 0.02..0.9f64) {
        let (n, p) = (40, 12);
        let data = random_problem(n, p, seed, &[0.8, 0.4]);
        let ones = PrecisionDiag::ones(p);
        let lambda = frac * lambda_max(&data, &ones, &PenaltySpec::lasso(0.0)).unwrap();
        let spec = PenaltySpec::scad(lambda, 3.7);
        let spac = coordinate_descent_fit(&data, &ones, &spec, &vec![0.0; p], &FitControls::default()).unwrap();
        let base = spac::solver::baseline_fit(&data, &spec, &FitControls::default()).unwrap();
        for (x, y) in spac.beta.iter().zip(&base.beta) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn exchangeable_closed_form_and_verdicts(
        q in 1usize..25,
        extra in 1usize..40,
        alpha in alpha_triple(),
        sign_bits in any::<u32>(),
    ) {
        let p = q + extra;
        let cov = match block_exchangeable_cov(q, p, alpha) {
            Ok(c) => c,
            Err(Error::NotPositiveDefinite(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let signs: Vec<f64> = (0..q).map(|i| if sign_bits >> (i % 32) & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let r = check_irrepresentable(&cov, q, &signs).unwrap();
        let m: f64 = signs.iter().sum();
        let expect = (alpha.1 * m).abs() / (1.0 - alpha.0 + alpha.0 * q as f64);
        for v in &r.original_vector {
            prop_assert!((v - expect).abs() <= 1e-10);
        }
        let max_t = r.transformed_vector.iter().copied().fold(0.0, f64::max);
        prop_assert_eq!(r.transformed_weak, max_t <= 1.0 + 1e-10);
        if r.transformed_strong_margin > 0.0 {
            prop_assert!(r.transformed_weak);
        }
        if r.original_strong_margin > 0.0 {
            prop_assert!(r.original_weak);
        }
    }

    #[test]
    fn precision_diagonal_is_the_inverse_conditional_variance(p in 3usize..20, q in 1usize..3, seed in any::<u64>()) {
        let cov = random_c1_covariance(p, q, (0.2, 1.0), seed).unwrap();
        let c = cov.matrix();
        let d = cov.precision_diag().unwrap();
        for j in 0..p {
            let keep: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let rest = c.select_rows(&keep).select_columns(&keep);
            let v = DVector::from_iterator(p - 1, keep.iter().map(|&k| c[(k, j)]));
            let cond_var = 1.0 - v.dot(&rest.lu().solve(&v).unwrap());
            prop_assert!((d[j] - 1.0 / cond_var).abs() <= 1e-10 * d[j].max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn transformation_shrinks_a_failing_original_condition(
        q in 50usize..70,
        extra in 100usize..140,
        a1 in 0.05..0.8f64,
        a2 in 0.1..0.6f64,
        a3 in 0.05..0.9f64,
    ) {
        let p = q + extra;
        let cov = match block_exchangeable_cov(q, p, (a1, a2, a3)) {
            Ok(c) => c,
            Err(Error::NotPositiveDefinite(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let r = check_irrepresentable(&cov, q, &vec![1.0; q]).unwrap();
        if r.original_vector.iter().all(|v| *v >= 1.0) {
            for (t, o) in r.transformed_vector.iter().zip(&r.original_vector) {
                prop_assert!(t < o, "transformed {t} vs original {o}");
            }
        }
    }

    #[test]
    fn exchangeable_sufficient_condition_implies_margin(
        q in 50usize..70,
        extra in 10usize..60,
        a1 in 0.05..0.9f64,
        a2 in -0.3..0.3f64,
        a3 in 0.0..0.9f64,
        eta in 0.0..0.5f64,
    ) {
        let p = q + extra;
        let cov = match block_exchangeable_cov(q, p, (a1, a2, a3)) {
            Ok(c) => c,
            Err(Error::NotPositiveDefinite(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        if exchangeable_sufficient_check((a1, a2, a3), 1.0, eta) {
            let r = check_irrepresentable(&cov, q, &vec![1.0; q]).unwrap();
            prop_assert!(r.transformed_strong_margin > 0.0);
        }
    }
}

#[test]
fn sample_precision_converges_to_the_truth() {
    let cov = block_exchangeable_cov(2, 5, (0.3, 0.5, 0.8)).unwrap();
    let truth = cov.matrix().clone().try_inverse().unwrap();
    let mut r = rng(11);
    let x = generate_design(&cov, 10_000, &[], &mut r).unwrap();
    let data = standardize(&x, &DVector::zeros(10_000)).unwrap();
    let d = sample_precision_diag(&data).unwrap();
    for j in 0..5 {
        assert!((d.d[j] - truth[(j, j)]).abs() < 0.1, "j={j}: {} vs {}", d.d[j], truth[(j, j)]);
    }
}

#[test]
fn simulation_tables_are_consistent_and_worker_independent() {
    let mut cfg = builtin_setting(SettingId::S1, (0.2, 0.4, 0.8), vec![BetaValue::Scalar(1.0)]).unwrap();
    cfg.replications = 8;
    cfg.seed = 5;
    cfg.methods = vec![Method::Lasso, Method::SpacLasso, Method::Scad, Method::SpacScad];
    let serial = run_setting_with(&cfg, &RunOptions { workers: Some(1), ..Default::default() }).unwrap();
    let parallel = run_setting_with(&cfg, &RunOptions { workers: Some(3), ..Default::default() }).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial.per_rep, parallel.per_rep);
    for row in &serial.rows {
        assert!((0.0..=1.0).contains(&row.fnr_mean) && (0.0..=1.0).contains(&row.fpr_mean));
    }
    for ratio in &serial.ratios {
        let base = serial.row(&ratio.beta, ratio.baseline).unwrap().total_error();
        let spac = serial.row(&ratio.beta, ratio.spac).unwrap().total_error();
        match ratio.ratio {
            Some(v) => assert_abs_diff_eq!(v, base / spac, epsilon = 1e-12),
            None => assert_eq!(spac, 0.0),
        }
    }
}

#[test]
fn stronger_signal_does_not_raise_the_miss_rate() {
    let mut cfg = builtin_setting(
        SettingId::S1,
        (0.3, 0.5, 0.8),
        vec![BetaValue::Scalar(0.1), BetaValue::Scalar(0.5)],
    )
    .unwrap();
    cfg.methods = vec![Method::SpacLasso];
    cfg.seed = 3;
    let t = run_setting_with(&cfg, &RunOptions::default()).unwrap();
    let weak = t.row("0.1", Method::SpacLasso).unwrap().fnr_mean;
    let strong = t.row("0.5", Method::SpacLasso).unwrap().fnr_mean;
    assert!(strong <= weak, "FNR {strong} at 0.5 vs {weak} at 0.1");
}
