use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::Matrix;

/// A smooth function of an `r x u` semi-orthogonal matrix that only depends on
/// its column span.
pub trait GrassmannObjective {
    fn value(&self, g: &Matrix) -> Result<f64>;

    /// Value and Euclidean gradient with respect to `g`.
    fn value_and_gradient(&self, g: &Matrix) -> Result<(f64, Matrix)>;
}

/// `log|G^T M G| + log|G^T N^{-1} G|`.
#[derive(Clone, Debug)]
pub struct EnvelopeObjective {
    m: Matrix,
    n_inv: Matrix,
}

impl EnvelopeObjective {
    pub fn new(m: &Matrix, n: &Matrix) -> Result<Self> {
        if m.shape() != n.shape() || !m.is_square() {
            return Err(Error::dim("moment matrices must be square and of equal size"));
        }
        linalg::cholesky(m, "first moment matrix")?;
        let n_inv = linalg::spd_inverse(n, "second moment matrix")?;
        Ok(EnvelopeObjective {
            m: linalg::symmetrize(m),
            n_inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

fn log_det_and_grad(a: &Matrix, g: &Matrix, with_grad: bool) -> Result<(f64, Option<Matrix>)> {
    let ag = a * g;
    let inner = linalg::symmetrize(&(g.transpose() * &ag));
    let chol = inner
        .clone()
        .cholesky()
        .ok_or_else(|| Error::not_pd("projected moment matrix"))?;
    let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let grad = with_grad.then(|| chol.solve(&ag.transpose()).transpose() * 2.0);
    Ok((ld, grad))
}

impl GrassmannObjective for EnvelopeObjective {
    fn value(&self, g: &Matrix) -> Result<f64> {
        if g.ncols() == 0 {
            return Ok(0.0);
        }
        let (a, _) = log_det_and_grad(&self.m, g, false)?;
        let (b, _) = log_det_and_grad(&self.n_inv, g, false)?;
        Ok(a + b)
    }

    fn value_and_gradient(&self, g: &Matrix) -> Result<(f64, Matrix)> {
        if g.ncols() == 0 {
            return Ok((0.0, g.clone()));
        }
        let (a, ga) = log_det_and_grad(&self.m, g, true)?;
        let (b, gb) = log_det_and_grad(&self.n_inv, g, true)?;
        Ok((a + b, ga.unwrap() + gb.unwrap()))
    }
}

/// `log|G^T M G| + log|G^T N^{-1} G|` for a semi-orthogonal `g`.
pub fn envelope_objective_fk(g: &Matrix, m: &Matrix, n: &Matrix) -> Result<f64> {
    if g.nrows() != m.nrows() {
        return Err(Error::dim(format!(
            "basis has {} rows, moments are {}x{}",
            g.nrows(),
            m.nrows(),
            m.ncols()
        )));
    }
    let u = g.ncols();
    if (g.transpose() * g - Matrix::identity(u, u)).norm() > 1e-8 {
        return Err(Error::invalid("basis columns are not orthonormal"));
    }
    EnvelopeObjective::new(m, n)?.value(g)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrassmannOptions {
    pub max_iter: usize,
    /// Stop when an accepted step changes the objective by less than this, relative.
    pub rel_tol: f64,
    pub armijo_slope: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for GrassmannOptions {
    fn default() -> Self {
        GrassmannOptions {
            max_iter: 500,
            rel_tol: 1e-8,
            armijo_slope: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GrassmannOutcome {
    pub basis: Matrix,
    pub value: f64,
    /// Index of the start that produced the winner.
    pub start: usize,
    /// Objective at each start before refinement.
    pub start_values: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `objective` over `r x u` semi-orthogonal matrices from every start
/// and returns the best local solution.
pub fn grassmann_minimize<O: GrassmannObjective + ?Sized>(
    objective: &O,
    r: usize,
    u: usize,
    starts: &[Matrix],
    opts: &GrassmannOptions,
) -> Result<Matrix> {
    grassmann_minimize_report(objective, r, u, starts, opts).map(|o| o.basis)
}

pub fn grassmann_minimize_report<O: GrassmannObjective + ?Sized>(
    objective: &O,
    r: usize,
    u: usize,
    starts: &[Matrix],
    opts: &GrassmannOptions,
) -> Result<GrassmannOutcome> {
    if u > r {
        return Err(Error::invalid(format!("cannot fit {u} directions in dimension {r}")));
    }
    if starts.is_empty() {
        return Err(Error::invalid("no starting values"));
    }
    let mut best: Option<GrassmannOutcome> = None;
    let mut start_values = Vec::with_capacity(starts.len());
    for (s, start) in starts.iter().enumerate() {
        if start.shape() != (r, u) {
            return Err(Error::dim(format!(
                "start {s} is {}x{}, expected {r}x{u}",
                start.nrows(),
                start.ncols()
            )));
        }
        let g0 = linalg::orthonormalize(start);
        let (g, value, f_start, iterations) = descend(objective, g0, opts)?;
        start_values.push(f_start);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(GrassmannOutcome {
                basis: g,
                value,
                start: s,
                start_values: Vec::new(),
                iterations,
            });
        }
    }
    let mut best = best.unwrap();
    best.start_values = start_values;
    Ok(best)
}

/// QR retraction with column signs fixed so that `R` has a positive diagonal.
fn retract(g: &Matrix, step: &Matrix, t: f64) -> Matrix {
    let qr = (g - step * t).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Projected gradient descent with a QR retraction, Barzilai-Borwein trial steps
/// and Armijo backtracking.
fn descend<O: GrassmannObjective + ?Sized>(
    objective: &O,
    mut g: Matrix,
    opts: &GrassmannOptions,
) -> Result<(Matrix, f64, f64, usize)> {
    let (mut f, grad) = objective.value_and_gradient(&g)?;
    let f_start = f;
    if g.ncols() == 0 || g.ncols() == g.nrows() {
        return Ok((g, f, f_start, 0));
    }
    let mut xi = &grad - &g * (g.transpose() * &grad);
    let mut t = 0.5 / xi.norm().max(1e-300);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let slope = xi.norm_squared();
        if slope <= 1e-28 * f.abs().max(1.0) {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let mut trial_t = t;
        for _ in 0..opts.max_backtracks {
            let candidate = retract(&g, &xi, trial_t);
            if let Ok(fc) = objective.value(&candidate) {
                if fc <= f - opts.armijo_slope * trial_t * slope {
                    accepted = Some((candidate, fc));
                    break;
                }
            }
            trial_t *= opts.shrink;
        }
        let Some((g_new, f_new)) = accepted else {
            break;
        };
        let (f_check, grad_new) = objective.value_and_gradient(&g_new)?;
        debug_assert!((f_check - f_new).abs() <= 1e-9 * f_new.abs().max(1.0));
        let xi_new = &grad_new - &g_new * (g_new.transpose() * &grad_new);
        let change = (f - f_new).abs();
        // Barzilai-Borwein step from the ambient differences
        let s = &g_new - &g;
        let y = &xi_new - &xi;
        let sy = s.dot(&y).abs();
        t = if sy > 0.0 { s.norm_squared() / sy } else { trial_t * 2.0 };
        t = t.clamp(1e-12, 1e6);
        g = g_new;
        f = f_new;
        xi = xi_new;
        if change <= opts.rel_tol * f.abs().max(1.0) {
            break;
        }
    }
    Ok((g, f, f_start, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(vals: &[f64], rot: f64) -> Matrix {
        let (s, c) = rot.sin_cos();
        let q = Matrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        &q * Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(vals)) * q.transpose()
    }

    #[test]
    fn full_space_objective_is_constant() {
        let m = spd(&[1.0, 2.0, 3.0], 0.3);
        let n = spd(&[4.0, 1.0, 2.0], 1.1);
        let f = envelope_objective_fk(&Matrix::identity(3, 3), &m, &n).unwrap();
        let expected = m.determinant().ln() - n.determinant().ln();
        assert!((f - expected).abs() < 1e-12);
    }

    #[test]
    fn descent_never_worsens_a_start() {
        let m = spd(&[1.0, 2.0, 3.0], 0.3);
        let n = spd(&[4.0, 1.0, 2.0], 1.1);
        let obj = EnvelopeObjective::new(&m, &n).unwrap();
        let start = linalg::orthonormalize(&Matrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]));
        let out = grassmann_minimize_report(&obj, 3, 1, &[start], &Default::default()).unwrap();
        assert!(out.value <= out.start_values[0]);
        assert!((out.basis.transpose() * &out.basis)[(0, 0)] - 1.0 < 1e-12);
    }
}
