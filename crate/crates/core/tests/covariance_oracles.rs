mod common;

use common::*;
use proptest::prelude::*;
use tenv::covariance::{
    flip_flop_mle, flip_flop_with_report, kron_modes, log_det, normalize_and_tau,
    sample_matrix_normal, sample_matrix_normal_stack, whiten_apply, FlipFlopOptions,
    SeparableCovariance,
};
use tenv::{Matrix, Tensor};

fn dense_log_det(m: &Matrix) -> f64 {
    2.0 * m.clone().cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `n^{-1} sum_i e_i e_i^T` over the trailing sample mode of a vector stack.
fn second_moment(e: &Tensor) -> Matrix {
    let m = e.matricize(0).unwrap();
    &m * m.transpose() / e.dims()[1] as f64
}

#[test]
fn one_mode_equals_sample_second_moment() {
    for seed in 0..10 {
        let mut rng = rng(seed);
        let e = random_tensor(&[4, 12], &mut rng);
        let cov = flip_flop_mle(&e, None, &FlipFlopOptions::default()).unwrap();
        let expected = second_moment(&e);
        assert!((cov.dense() - &expected).norm() <= 1e-12 * expected.norm());
    }
}

#[test]
fn zero_residuals_fail_at_first_mode() {
    let err = flip_flop_mle(&Tensor::zeros(&[2, 3, 5]), None, &FlipFlopOptions::default()).unwrap_err();
    assert!(matches!(err, tenv::Error::SingularUpdate { mode: 0 }));
}

#[test]
fn recovers_known_separable_covariance() {
    let mut rng = rng(11);
    let truth = SeparableCovariance::from_raw(vec![random_spd(2, &mut rng), random_spd(3, &mut rng)]).unwrap();
    let e = sample_matrix_normal_stack(&truth, 2000, &mut rng).unwrap();
    let (fit, report) = flip_flop_with_report(&e, None, &FlipFlopOptions::default()).unwrap();
    assert!(rel_diff(&fit.dense(), &truth.dense()) < 0.10);
    assert!(report.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
    for f in fit.factors() {
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn whitened_residuals_give_unit_scale() {
    let mut rng = rng(12);
    let dims = [3, 4];
    let e = random_tensor(&[3, 4, 50], &mut rng);
    let factors: Vec<Matrix> = dims.iter().map(|&r| Matrix::identity(r, r) / (r as f64).sqrt()).collect();
    let cov = normalize_and_tau(&factors, &e).unwrap();
    // tau is the mean quadratic form in the unit-norm identity factors
    let expected = e.norm_sq() * (3.0f64).sqrt() * 2.0 / e.len() as f64;
    assert!((cov.tau() - expected).abs() < 1e-12 * expected);
}

#[test]
fn single_residual_dense_quadratic_form() {
    let mut rng = rng(13);
    let e = random_tensor(&[5, 1], &mut rng);
    let cov = normalize_and_tau(&[Matrix::identity(5, 5)], &e).unwrap();
    let r = 5.0f64;
    assert!((cov.tau() - e.norm_sq() * r.sqrt() / r).abs() < 1e-12);
    let s = random_spd(5, &mut rng);
    let cov = normalize_and_tau(&[s.clone()], &e).unwrap();
    let sn = &s / s.norm();
    let v = column(e.data());
    let quad = (v.transpose() * sn.try_inverse().unwrap() * &v)[(0, 0)];
    assert!((cov.tau() - quad / r).abs() < 1e-10 * quad);
}

#[test]
fn rescaling_a_raw_factor_keeps_the_covariance() {
    let mut rng = rng(14);
    let e = random_tensor(&[2, 3, 20], &mut rng);
    let f = vec![random_spd(2, &mut rng), random_spd(3, &mut rng)];
    let a = normalize_and_tau(&f, &e).unwrap();
    let b = normalize_and_tau(&[f[0].clone() * 7.5, f[1].clone()], &e).unwrap();
    assert!(rel_diff(&a.dense(), &b.dense()) < 1e-10);
}

fn dims23(seed: u64) -> (SeparableCovariance, Tensor) {
    let mut rng = rng(seed);
    let cov = SeparableCovariance::new(
        vec![
            { let s = random_spd(2, &mut rng); &s / s.norm() },
            { let s = random_spd(3, &mut rng); &s / s.norm() },
        ],
        1.7,
    )
    .unwrap();
    (cov, random_tensor(&[2, 3], &mut rng))
}

#[test]
fn whiten_matches_dense_inverse() {
    let (cov, t) = dims23(15);
    let w = whiten_apply(&t, &cov, None).unwrap();
    let dense = cov.dense().try_inverse().unwrap() * column(&t.vec());
    assert!(max_abs_diff(&w.vec(), dense.as_slice()) < 1e-10);
    let partial = whiten_apply(&t, &cov, Some(0)).unwrap();
    let expected = t.to_matrix().unwrap() * cov.factors()[1].clone().try_inverse().unwrap();
    assert!(max_abs_diff(partial.data(), expected.as_slice()) < 1e-10);
    let id = SeparableCovariance::new(vec![Matrix::identity(2, 2), Matrix::identity(3, 3)], 4.0).unwrap();
    assert!(max_abs_diff(whiten_apply(&t, &id, None).unwrap().data(), t.scaled(0.25).data()) < 1e-15);
}

#[test]
fn log_det_cases() {
    assert_eq!(log_det(&SeparableCovariance::identity(&[2, 3])).unwrap(), 0.0);
    let (cov, _) = dims23(16);
    assert!((log_det(&cov).unwrap() - dense_log_det(&cov.dense())).abs() < 1e-10);
    let doubled = SeparableCovariance::new(cov.factors().to_vec(), 2.0 * cov.tau()).unwrap();
    assert!((log_det(&doubled).unwrap() - log_det(&cov).unwrap() - 6.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn identity_sampling_has_unit_variance() {
    let mut rng = rng(17);
    let cov = SeparableCovariance::identity(&[2, 2]);
    let draws = sample_matrix_normal_stack(&cov, 100_000, &mut rng).unwrap();
    let var = draws.norm_sq() / draws.len() as f64;
    assert!((0.98..=1.02).contains(&var), "variance {var}");
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let (cov, _) = dims23(18);
    let a = sample_matrix_normal(&[2, 3], &cov, &mut rng(5)).unwrap();
    let b = sample_matrix_normal(&[2, 3], &cov, &mut rng(5)).unwrap();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn sample_covariance_matches_dense() {
    let (cov, _) = dims23(19);
    let draws = sample_matrix_normal_stack(&cov, 100_000, &mut rng(20)).unwrap();
    let emp = second_moment(&Tensor::new(vec![6, 100_000], draws.into_data()).unwrap());
    assert!(rel_diff(&emp, &cov.dense()) < 0.05);
}

#[test]
fn kronecker_order_is_descending() {
    let a = Matrix::from_diagonal_element(2, 2, 2.0);
    let b = Matrix::identity(3, 3);
    let d = kron_modes(&[a, b]);
    // first index fastest: entry (1,0) of the 2x3 tensor sits at position 1
    assert_eq!(d[(1, 1)], 2.0);
    assert_eq!(d.nrows(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flip_flop_never_increases_the_objective(seed in 0u64..10_000) {
        let mut rng = rng(seed);
        let e = random_tensor(&[3, 2, 2, 6], &mut rng);
        let (_, report) = flip_flop_with_report(&e, None, &FlipFlopOptions::default()).unwrap();
        for w in report.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn representation_invariant_to_factor_scaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = rng(seed);
        let f = vec![random_spd(2, &mut rng), random_spd(2, &mut rng)];
        let a = SeparableCovariance::from_raw(f.clone()).unwrap();
        let b = SeparableCovariance::from_raw(vec![f[0].clone() * c, f[1].clone() / c]).unwrap();
        prop_assert!(rel_diff(&a.dense(), &b.dense()) < 1e-10);
    }

    #[test]
    fn whiten_and_log_det_match_dense(seed in 0u64..10_000, dims in prop::collection::vec(1usize..4, 1..4)) {
        let mut rng = rng(seed);
        let factors: Vec<Matrix> = dims.iter().map(|&r| random_spd(r, &mut rng)).collect();
        let cov = SeparableCovariance::from_raw(factors).unwrap();
        let t = random_tensor(&dims, &mut rng);
        let dense = cov.dense();
        let expected = dense.clone().try_inverse().unwrap() * column(&t.vec());
        let got = whiten_apply(&t, &cov, None).unwrap();
        prop_assert!(max_abs_diff(&got.vec(), expected.as_slice()) <= 1e-10 * expected.norm().max(1.0));
        prop_assert!((log_det(&cov).unwrap() - dense_log_det(&dense)).abs() < 1e-10);
    }
}
