mod common;

use common::*;
use proptest::prelude::*;
use tenv::covariance::kron_modes;
use tenv::tensor::{kron, tucker};
use tenv::{Error, Matrix, Tensor};

#[test]
fn vec_is_column_major_stacking() {
    let t = Tensor::from_matrix(&Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
    assert_eq!(t.vec(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn vec_position_formula() {
    let t = Tensor::zeros(&[3, 4, 5]);
    // entry (2,1,1) in one-based terms
    assert_eq!(t.flat_index(&[1, 0, 0]) + 1, 2);
    let mut rng = rng(1);
    let t = random_tensor(&[3, 4, 5], &mut rng);
    for idx in [[0, 0, 0], [2, 3, 4], [1, 2, 3]] {
        let j = idx[0] + 3 * idx[1] + 12 * idx[2];
        assert_eq!(t.vec()[j], t.get(&idx));
    }
}

#[test]
fn vec_fold_round_trip() {
    let t = random_tensor(&[3, 4, 2], &mut rng(2));
    let back = Tensor::fold_vec(&t.vec(), t.dims()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn matricize_order_two_cases() {
    let m = normal_matrix(2, 3, &mut rng(3));
    let t = Tensor::from_matrix(&m);
    assert_eq!(t.matricize(0).unwrap(), m);
    assert_eq!(t.matricize(1).unwrap(), m.transpose());
}

#[test]
fn matricize_index_formula() {
    let t = random_tensor(&[2, 3, 4], &mut rng(4));
    let unf = t.matricize(1).unwrap();
    assert_eq!(unf.shape(), (3, 8));
    // one-based (2,3,4) -> row 3, column 1 + (2-1) + (4-1)*2 = 8
    assert_eq!(unf[(2, 7)], t.get(&[1, 2, 3]));
    assert!(matches!(t.matricize(3), Err(Error::ModeOutOfRange { mode: 3, order: 3 })));
}

#[test]
fn fold_cases() {
    let row = Matrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
    let t = Tensor::fold(&row, 0, &[1, 4]).unwrap();
    assert_eq!(t.dims(), &[1, 4]);
    assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    assert!(Tensor::fold(&Matrix::zeros(3, 7), 0, &[3, 2, 4]).is_err());
}

#[test]
fn mode_product_against_fibers() {
    let mut rng = rng(5);
    let t = random_tensor(&[2, 3, 4], &mut rng);
    let c = normal_matrix(5, 3, &mut rng);
    let out = t.mode_product(&c, 1).unwrap();
    assert_eq!(out.dims(), &[2, 5, 4]);
    for i in 0..2 {
        for s in 0..5 {
            for l in 0..4 {
                let direct: f64 = (0..3).map(|j| c[(s, j)] * t.get(&[i, j, l])).sum();
                assert!((out.get(&[i, s, l]) - direct).abs() < 1e-12);
            }
        }
    }
    let unf = &c * t.matricize(1).unwrap();
    assert!(max_abs_diff(out.matricize(1).unwrap().as_slice(), unf.as_slice()) < 1e-12);
    assert_eq!(t.mode_product(&Matrix::identity(3, 3), 1).unwrap(), t);
}

#[test]
fn mode_vec_product_cases() {
    let mut rng = rng(6);
    let t = random_tensor(&[3, 4, 2], &mut rng);
    let e = [0.0, 1.0, 0.0, 0.0];
    let slice = t.mode_vec_product(&e, 1).unwrap();
    assert_eq!(slice.dims(), &[3, 2]);
    assert_eq!(slice.get(&[2, 1]), t.get(&[2, 1, 1]));
    let v = [0.3, -1.0, 2.0, 0.5];
    let squeezed = t.mode_product(&Matrix::from_row_slice(1, 4, &v), 1).unwrap();
    assert!(max_abs_diff(t.mode_vec_product(&v, 1).unwrap().data(), squeezed.data()) < 1e-12);
    let b = random_tensor(&[2, 2, 1], &mut rng);
    let scaled = b.mode_vec_product(&[2.5], 2).unwrap();
    assert!(max_abs_diff(scaled.data(), b.scaled(2.5).data()) < 1e-15);
    let scalar = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().mode_vec_product(&[1.0, 1.0, 1.0], 0).unwrap();
    assert_eq!(scalar.order(), 0);
    assert_eq!(scalar.scalar_value(), 6.0);
}

#[test]
fn tucker_oracles() {
    let mut rng = rng(7);
    let core = random_tensor(&[2, 3, 2], &mut rng);
    let f: Vec<Matrix> = vec![normal_matrix(3, 2, &mut rng), normal_matrix(2, 3, &mut rng), normal_matrix(4, 2, &mut rng)];
    let t = tucker(&core, &f).unwrap();
    let dense = kron_modes(&f) * column(&core.vec());
    let scale = dense.norm();
    assert!(max_abs_diff(&t.vec(), dense.as_slice()) <= 1e-12 * scale);
    let ids: Vec<Matrix> = [2, 3, 2].iter().map(|&r| Matrix::identity(r, r)).collect();
    assert_eq!(tucker(&core, &ids).unwrap(), core);
    let c2 = normal_matrix(2, 3, &mut rng);
    let (a, b) = (normal_matrix(4, 2, &mut rng), normal_matrix(5, 3, &mut rng));
    let t2 = tucker(&Tensor::from_matrix(&c2), &[a.clone(), b.clone()]).unwrap();
    assert!(max_abs_diff(t2.data(), (&a * &c2 * b.transpose()).as_slice()) < 1e-12);
}

#[test]
fn kron_cases() {
    assert_eq!(kron(&[Matrix::identity(2, 2), Matrix::identity(3, 3)]), Matrix::identity(6, 6));
    let mut rng = rng(8);
    let a = normal_matrix(2, 2, &mut rng);
    assert_eq!(kron(&[a.clone()]), a);
    let (b, c, d) = (normal_matrix(2, 2, &mut rng), normal_matrix(2, 2, &mut rng), normal_matrix(2, 2, &mut rng));
    let lhs = kron(&[a.clone(), b.clone()]) * kron(&[c.clone(), d.clone()]);
    let rhs = kron(&[&a * &c, &b * &d]);
    assert!((lhs - rhs).norm() < 1e-12);
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..5)
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    dims_strategy().prop_flat_map(|dims| {
        let len: usize = dims.iter().product();
        prop::collection::vec(-10.0f64..10.0, len).prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn matricize_fold_round_trip(t in tensor_strategy()) {
        for k in 0..t.order() {
            let m = t.matricize(k).unwrap();
            let back = Tensor::fold(&m, k, t.dims()).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.matricize(k).unwrap(), m);
        }
        prop_assert_eq!(Tensor::fold_vec(&t.vec(), t.dims()).unwrap(), t.clone());
    }

    #[test]
    fn norm_matches_vec_norm(t in tensor_strategy()) {
        let v = t.vec();
        prop_assert_eq!(t.norm_sq(), v.iter().map(|x| x * x).sum::<f64>());
    }

    #[test]
    fn mode_products_commute_and_compose(t in tensor_strategy(), seed in 0u64..1000) {
        let mut rng = rng(seed);
        if t.order() >= 2 {
            let a = normal_matrix(3, t.dims()[0], &mut rng);
            let b = normal_matrix(2, t.dims()[1], &mut rng);
            let ab = t.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
            let ba = t.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
            prop_assert!(max_abs_diff(ab.data(), ba.data()) <= 1e-10 * (1.0 + ab.norm()));
        }
        let a = normal_matrix(3, t.dims()[0], &mut rng);
        let b = normal_matrix(2, 3, &mut rng);
        let twice = t.mode_product(&a, 0).unwrap().mode_product(&b, 0).unwrap();
        let once = t.mode_product(&(&b * &a), 0).unwrap();
        prop_assert!(max_abs_diff(twice.data(), once.data()) <= 1e-10 * (1.0 + once.norm()));
    }

    #[test]
    fn tucker_matches_kronecker(seed in 0u64..1000, dims in prop::collection::vec(1usize..4, 1..5)) {
        let mut rng = rng(seed);
        let core = random_tensor(&dims, &mut rng);
        let factors: Vec<Matrix> = dims.iter().map(|&u| normal_matrix(u + 1, u, &mut rng)).collect();
        let t = tucker(&core, &factors).unwrap();
        let dense = kron_modes(&factors) * column(&core.vec());
        prop_assert!(max_abs_diff(&t.vec(), dense.as_slice()) <= 1e-12 * dense.norm().max(1.0));
    }
}
