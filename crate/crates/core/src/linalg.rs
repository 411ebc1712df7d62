//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= tol * m.norm().max(1.0)
}

/// Cholesky factorization with a single diagonal jitter retry of
/// `1e-10 * trace / r`.
pub fn cholesky(m: &Matrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::dim(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::not_pd(format!("{what} (non-finite entries)")));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let r = m.nrows().max(1) as f64;
    let lambda = 1e-10 * m.trace() / r;
    if lambda > 0.0 {
        let jittered = m + Matrix::identity(m.nrows(), m.ncols()) * lambda;
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::not_pd(what))
}

pub fn spd_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

/// `log|m|` for a symmetric positive definite matrix.
pub fn log_det_spd(m: &Matrix, what: &str) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let l = cholesky(m, what)?;
    Ok(2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Inverse of the lower Cholesky factor, `L^{-1}` with `m = L L^T`.
pub fn whitening_factor(m: &Matrix, what: &str) -> Result<Matrix> {
    let l = cholesky(m, what)?.l();
    let n = l.nrows();
    l.solve_lower_triangular(&Matrix::identity(n, n))
        .ok_or_else(|| Error::not_pd(what))
}

/// Eigenvalues in descending order with matching eigenvector columns.
pub fn sym_eigen_desc(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn top_eigenvectors(m: &Matrix, u: usize) -> Matrix {
    let (_, v) = sym_eigen_desc(m);
    v.columns(0, u).into_owned()
}

/// Orthonormal basis of the column span (thin QR).
pub fn orthonormalize(m: &Matrix) -> Matrix {
    if m.ncols() == 0 {
        return Matrix::zeros(m.nrows(), 0);
    }
    m.clone().qr().q()
}

/// Orthonormal basis of the orthogonal complement of `span(g)`, `g` semi-orthogonal.
pub fn orthogonal_complement(g: &Matrix) -> Matrix {
    let r = g.nrows();
    let u = g.ncols();
    if u == 0 {
        return Matrix::identity(r, r);
    }
    if u >= r {
        return Matrix::zeros(r, 0);
    }
    // Project the identity off span(g) and keep the dominant directions.
    let q = Matrix::identity(r, r) - g * g.transpose();
    let (_, v) = sym_eigen_desc(&q);
    orthonormalize(&v.columns(0, r - u).into_owned())
}

pub fn projection(g: &Matrix) -> Matrix {
    g * g.transpose()
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    // nalgebra's bidiagonal sweep misconverges on some exact 0/1 images
    match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => {
            let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        }
    }
}

/// Thin SVD left factor: singular values in descending order and the matching
/// left singular vectors as columns.
pub fn left_singular(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::invalid("singular value decomposition did not converge"))?;
    let (u, s) = (svd.U(), svd.S().column_vector());
    let k = s.nrows();
    Ok((
        (0..k).map(|i| s[i]).collect(),
        Matrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
    ))
}

/// Principal angles (radians, ascending) between the column spans of `a` and `b`.
///
/// Computed from sines, `asin` of the singular values of `(I - P_b) Q_a` with the
/// smaller subspace as `a`, so tiny angles keep full relative accuracy.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let (small, large) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    let qa = orthonormalize(small);
    let qb = orthonormalize(large);
    let residual = &qa - &qb * (qb.transpose() * &qa);
    let mut angles: Vec<f64> = singular_values(&residual)
        .iter()
        .map(|v| v.clamp(0.0, 1.0).asin())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Largest principal angle; zero when the smaller span lies inside the larger one.
pub fn containment_angle(a: &Matrix, b: &Matrix) -> f64 {
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

/// Condition number `lambda_max / lambda_min` of a symmetric matrix.
pub fn condition_number(m: &Matrix) -> f64 {
    let (vals, _) = sym_eigen_desc(m);
    match (vals.first(), vals.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal() {
        let g = orthonormalize(&Matrix::from_row_slice(4, 2, &[1., 0., 1., 1., 0., 2., 1., -1.]));
        let g0 = orthogonal_complement(&g);
        assert_eq!(g0.shape(), (4, 2));
        assert!((g.transpose() * &g0).norm() < 1e-12);
        assert!((g0.transpose() * &g0 - Matrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
        assert!((log_det_spd(&m, "m").unwrap() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn jitter_is_single_and_small() {
        assert!(cholesky(&Matrix::zeros(3, 3), "zero").is_err());
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        // rank-deficient but the tiny jitter rescues it
        assert!(cholesky(&m, "rank one").is_ok());
        let neg = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky(&neg, "indefinite").is_err());
    }

    #[test]
    fn angles_between_identical_spans_vanish() {
        let a = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 2.0]);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 2.0, 0.0]);
        assert!(containment_angle(&a, &b) < 1e-7);
    }
}
