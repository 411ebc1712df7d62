#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tenv::linalg;
use tenv::{Matrix, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.sample(StandardNormal))
}

pub fn random_spd(r: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = normal_matrix(r, r, rng);
    &a * a.transpose() + Matrix::identity(r, r) * 0.5
}

pub fn random_orthonormal(r: usize, u: usize, rng: &mut ChaCha8Rng) -> Matrix {
    linalg::orthonormalize(&normal_matrix(r, u, rng))
}

pub fn column(v: &[f64]) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
