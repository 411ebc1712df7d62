use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::Matrix;

use super::grassmann::{grassmann_minimize, EnvelopeObjective, GrassmannObjective, GrassmannOptions};

/// Eigenvector starts kept for refinement in [`sphere_minimize`].
pub const REFINED_STARTS: usize = 10;

/// Approximate minimizer of `log(w^T A w) + log(w^T B^{-1} w)` over unit vectors.
///
/// Every eigenvector of `A`, `B` and `A + B` is scored; the best
/// `REFINED_STARTS` are refined by projected gradient descent on the sphere and
/// the best result is returned.
pub fn sphere_minimize(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    sphere_minimize_with(a, b, &GrassmannOptions::default())
}

pub(crate) fn sphere_minimize_with(
    a: &Matrix,
    b: &Matrix,
    opts: &GrassmannOptions,
) -> Result<Vec<f64>> {
    let d = a.nrows();
    if d == 0 {
        return Err(Error::dim("empty matrices"));
    }
    let objective = EnvelopeObjective::new(a, b)?;
    if d == 1 {
        return Ok(vec![1.0]);
    }
    let mut scored = Vec::with_capacity(3 * d);
    for m in [a.clone(), b.clone(), a + b] {
        let (_, v) = linalg::sym_eigen_desc(&m);
        for c in v.column_iter() {
            let w = Matrix::from_column_slice(d, 1, c.as_slice());
            scored.push((objective.value(&w)?, w));
        }
    }
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    let starts: Vec<Matrix> = scored.into_iter().take(REFINED_STARTS).map(|(_, w)| w).collect();
    let w = grassmann_minimize(&objective, d, 1, &starts, opts)?;
    Ok(w.column(0).iter().copied().collect())
}

/// Sequential one-direction-at-a-time basis for the separable objective
/// `log|G^T S G| + log|G^T N^{-1} G|`, built in the orthogonal complement of
/// the directions found so far.
pub fn onestep_basis(sigma: &Matrix, n: &Matrix, u: usize) -> Result<Matrix> {
    onestep_basis_with(sigma, n, u, &GrassmannOptions::default())
}

pub(crate) fn onestep_basis_with(
    sigma: &Matrix,
    n: &Matrix,
    u: usize,
    opts: &GrassmannOptions,
) -> Result<Matrix> {
    let r = sigma.nrows();
    if sigma.shape() != n.shape() || !sigma.is_square() {
        return Err(Error::dim("moment matrices must be square and of equal size"));
    }
    if u > r {
        return Err(Error::invalid(format!("cannot fit {u} directions in dimension {r}")));
    }
    linalg::cholesky(sigma, "covariance factor")?;
    linalg::cholesky(n, "response moment")?;
    let mut g = Matrix::zeros(r, u);
    for s in 0..u {
        let found = g.columns(0, s).into_owned();
        let g0 = linalg::orthogonal_complement(&found);
        let a = linalg::symmetrize(&(g0.transpose() * sigma * &g0));
        let b = linalg::symmetrize(&(g0.transpose() * n * &g0));
        let w = sphere_minimize_with(&a, &b, opts)?;
        let dir = &g0 * Matrix::from_column_slice(w.len(), 1, &w);
        // re-orthogonalize against earlier directions before normalizing
        let dir = &dir - &found * (found.transpose() * &dir);
        g.set_column(s, &(&dir / dir.norm()).column(0));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_full_dimensions() {
        let s = Matrix::identity(3, 3);
        let n = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(onestep_basis(&s, &n, 0).unwrap().shape(), (3, 0));
        let full = onestep_basis(&s, &n, 3).unwrap();
        assert!((&full * full.transpose() - Matrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn identity_first_argument_picks_leading_eigenvector() {
        let b = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let w = sphere_minimize(&Matrix::identity(2, 2), &b).unwrap();
        let lead = linalg::top_eigenvectors(&b, 1);
        let w = Matrix::from_column_slice(2, 1, &w);
        assert!(linalg::containment_angle(&w, &lead) < 1e-6);
    }
}
