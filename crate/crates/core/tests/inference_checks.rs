mod common;

use common::*;
use proptest::prelude::*;
use tenv::covariance::{kron_modes, SeparableCovariance};
use tenv::estimators::{ols_fit, Dataset, EnvelopeBasis, FitOptions};
use tenv::inference::{bh_fdr, pvalue_map, threshold_map, two_sided_p, u_gamma, u_ols};
use tenv::simgen::{gen_dataset, ScenarioConfig};
use tenv::tensor::kron;
use tenv::{Matrix, Tensor};

#[test]
fn u_ols_matches_dense_kronecker() {
    let mut rng = rng(1);
    let sx = random_spd(2, &mut rng);
    let f = vec![random_spd(2, &mut rng), random_spd(3, &mut rng)];
    let cov = SeparableCovariance::new(f.clone(), 2.5).unwrap();
    let u = u_ols(&sx, &cov).unwrap();
    let expected = kron(&[sx.clone().try_inverse().unwrap(), f[1].clone(), f[0].clone()]) * 2.5;
    assert!(rel_diff(&u.dense(), &expected) < 1e-10);
    let diag = u.diagonal();
    for (i, &d) in diag.data().iter().enumerate() {
        assert!((d - u.dense()[(i, i)]).abs() < 1e-12 * d.abs().max(1.0));
    }
}

#[test]
fn scaling_predictors_scales_variances() {
    let data = random_dataset(3);
    let c = 3.0;
    let scaled = Dataset::new(data.x() * c, data.y().clone()).unwrap();
    let cov = SeparableCovariance::identity(&[2, 3]);
    let a = u_ols(&data.predictor_covariance().unwrap(), &cov).unwrap().diagonal();
    let b = u_ols(&scaled.predictor_covariance().unwrap(), &cov).unwrap().diagonal();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((y - x / (c * c)).abs() < 1e-12 * x);
    }
}

fn random_dataset(seed: u64) -> Dataset {
    let mut rng = rng(seed);
    Dataset::new(normal_matrix(2, 12, &mut rng), random_tensor(&[2, 3, 12], &mut rng)).unwrap()
}

#[test]
fn known_basis_covariance_cases() {
    let mut rng = rng(4);
    let sx = random_spd(2, &mut rng);
    let omegas = vec![random_spd(3, &mut rng), random_spd(4, &mut rng)];
    let full = u_gamma(&sx, &EnvelopeBasis::identity(&[3, 4]), &omegas, 1.5).unwrap();
    let ols = u_ols(&sx, &SeparableCovariance::new(omegas.clone(), 1.5).unwrap()).unwrap();
    assert!(rel_diff(&full.dense(), &ols.dense()) < 1e-12);

    let basis = EnvelopeBasis::new(vec![random_orthonormal(3, 1, &mut rng), random_orthonormal(4, 2, &mut rng)]).unwrap();
    let om = vec![random_spd(1, &mut rng), random_spd(2, &mut rng)];
    let om0 = vec![random_spd(2, &mut rng), random_spd(2, &mut rng)];
    let factors: Vec<Matrix> = (0..2).map(|k| basis.assemble(k, &om[k], &om0[k])).collect();
    let g = u_gamma(&sx, &basis, &om, 0.7).unwrap().diagonal();
    let o = u_ols(&sx, &SeparableCovariance::new(factors, 0.7).unwrap()).unwrap().diagonal();
    for (a, b) in g.data().iter().zip(o.data()) {
        assert!(*a <= *b + 1e-12);
        assert!(*a >= 0.0);
    }

    let empty = EnvelopeBasis::new(vec![Matrix::zeros(3, 0), Matrix::identity(4, 2)]).unwrap();
    let zero = u_gamma(&sx, &empty, &[Matrix::zeros(0, 0), random_spd(2, &mut rng)], 1.0).unwrap();
    assert!(zero.diagonal().data().iter().all(|&v| v == 0.0));
    assert!(u_gamma(&sx, &basis, &[random_spd(2, &mut rng), om[1].clone()], 1.0).is_err());
}

#[test]
fn pvalue_conventions() {
    let cov = u_ols(&Matrix::identity(1, 1), &SeparableCovariance::identity(&[2, 2])).unwrap();
    let b = Tensor::new(vec![2, 2, 1], vec![0.0, 1.959964 / 3.0, -1.959964 / 3.0, 0.5]).unwrap();
    let map = pvalue_map(&b, &cov, 9).unwrap();
    assert_eq!(map.pvalues.data()[0], 1.0);
    assert_eq!(map.z.data()[0], 0.0);
    assert!((map.pvalues.data()[1] - 0.05).abs() < 1e-6);
    assert!((map.pvalues.data()[2] - 0.05).abs() < 1e-6);
    assert!((map.z.data()[3] - 1.5).abs() < 1e-15);
    assert!(pvalue_map(&b, &cov, 1).is_err());
    assert!(pvalue_map(&Tensor::zeros(&[2, 3, 1]), &cov, 9).is_err());
    let mut bad = cov.clone();
    bad.factors[0][(0, 0)] = -1.0;
    assert!(pvalue_map(&b, &bad, 9).is_err());
    assert!((two_sided_p(-1.959964) - 0.05).abs() < 1e-6);
}

#[test]
fn threshold_edge_levels() {
    let p = Tensor::new(vec![4], vec![0.0, 0.3, 0.999, 1.0]).unwrap();
    assert_eq!(threshold_map(&p, 1.0).unwrap().data(), &[1.0, 1.0, 1.0, 0.0]);
    assert_eq!(threshold_map(&p, 0.0).unwrap().data(), &[0.0; 4]);
    assert!(threshold_map(&p, 1.5).is_err());
    assert!(bh_fdr(&p, -0.1).is_err());
}

#[test]
fn diagonal_matches_dense_on_small_instances() {
    for seed in 0..5 {
        let mut rng = rng(10 + seed);
        let cov = SeparableCovariance::new(vec![random_spd(2, &mut rng), random_spd(3, &mut rng), random_spd(2, &mut rng)], 0.3).unwrap();
        let u = u_ols(&random_spd(3, &mut rng), &cov).unwrap();
        let dense = u.dense();
        let diag = u.diagonal();
        assert_eq!(diag.len(), dense.nrows());
        for (i, &d) in diag.data().iter().enumerate() {
            assert!((d - dense[(i, i)]).abs() <= 1e-12 * dense[(i, i)].abs().max(1.0));
        }
    }
}

#[test]
fn layout_permutation_invariance() {
    let mut rng = rng(20);
    let (f0, f1) = (random_spd(3, &mut rng), random_spd(4, &mut rng));
    let sx = random_spd(2, &mut rng);
    let b = random_tensor(&[3, 4, 2], &mut rng);
    let swapped = Tensor::from_fn(&[4, 3, 2], |i| b.get(&[i[1], i[0], i[2]]));
    let a = pvalue_map(&b, &u_ols(&sx, &SeparableCovariance::new(vec![f0.clone(), f1.clone()], 2.0).unwrap()).unwrap(), 30).unwrap();
    let c = pvalue_map(&swapped, &u_ols(&sx, &SeparableCovariance::new(vec![f1, f0], 2.0).unwrap()).unwrap(), 30).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            for l in 0..2 {
                assert_eq!(a.pvalues.get(&[i, j, l]), c.pvalues.get(&[j, i, l]));
            }
        }
    }
}

/// Pooled fraction of `p < 0.05` over null replications of the 64x64
/// two-group design.
pub fn null_rejection_rate(reps: u64, n: usize) -> f64 {
    let config = ScenarioConfig {
        dims: vec![64, 64],
        p: 1,
        n,
        snr: 1.0,
        sigma0_sq: 1.0,
        u: vec![14, 14],
        fit_u: None,
        reps: 1,
        seed: 0,
        shape: None,
    };
    let (mut hits, mut total) = (0usize, 0usize);
    for rep in 0..reps {
        let (data, _) = gen_dataset(&config, &Tensor::zeros(&[64, 64, 1]), &mut rng(500 + rep)).unwrap();
        let fit = ols_fit(&data, &FitOptions::default()).unwrap();
        let cov = u_ols(&data.predictor_covariance().unwrap(), &fit.cov).unwrap();
        let map = pvalue_map(&fit.b, &cov, data.n()).unwrap();
        hits += map.pvalues.data().iter().filter(|&&p| p < 0.05).count();
        total += map.pvalues.len();
    }
    hits as f64 / total as f64
}

#[test]
fn null_maps_are_calibrated() {
    let rate = null_rejection_rate(50, 50);
    assert!((rate - 0.05).abs() <= 0.02, "rate {rate}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bh_sandwich(p in prop::collection::vec(0.0f64..=1.0, 1..60), q in 0.001f64..0.999) {
        let t = Tensor::new(vec![p.len()], p.clone()).unwrap();
        let bh = bh_fdr(&t, q).unwrap();
        let lower = threshold_map(&t, q / p.len() as f64).unwrap();
        let upper = p.iter().map(|&v| if v <= q { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        for i in 0..p.len() {
            prop_assert!(lower.data()[i] <= bh.data()[i]);
            prop_assert!(bh.data()[i] <= upper[i]);
        }
    }

    #[test]
    fn threshold_is_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..60), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let t = Tensor::new(vec![p.len()], p).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let small = threshold_map(&t, lo).unwrap();
        let large = threshold_map(&t, hi).unwrap();
        for (s, l) in small.data().iter().zip(large.data()) {
            prop_assert!(s <= l);
        }
    }

    #[test]
    fn kron_diagonal_agrees(seed in 0u64..10_000) {
        let mut rng = rng(seed);
        let f = vec![random_spd(2, &mut rng), random_spd(2, &mut rng)];
        let dense = kron_modes(&f);
        let u = u_ols(&Matrix::identity(1, 1), &SeparableCovariance::new(f, 1.0).unwrap()).unwrap();
        for (i, &d) in u.diagonal().data().iter().enumerate() {
            prop_assert!((d - dense[(i, i)]).abs() <= 1e-12 * d.max(1.0));
        }
    }
}
