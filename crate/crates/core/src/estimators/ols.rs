use std::time::Instant;

use crate::covariance::{flip_flop_raw, log_det, normalize_and_tau, whitened_mode_moment};
use crate::error::Result;
use crate::tensor::{Matrix, Tensor};

use super::{Dataset, FitOptions, FitResult, PredictorGram};

/// Quantities shared by every fit: (optionally centered) data, the predictor
/// Gram, the OLS coefficients and the OLS residual stack.
pub(crate) struct Prepared {
    pub data: Dataset,
    pub gram: PredictorGram,
    pub b_ols: Tensor,
    pub residuals: Tensor,
}

impl Prepared {
    pub fn new(data: &Dataset, opts: &FitOptions) -> Result<Self> {
        let data = if opts.center { data.center()? } else { data.clone() };
        let gram = PredictorGram::new(data.x())?;
        let b_ols = gram.regress(data.y())?;
        let fitted = predict(&b_ols, data.x())?;
        let residuals = data.y().sub(&fitted)?;
        Ok(Prepared {
            data,
            gram,
            b_ols,
            residuals,
        })
    }

    pub fn dims(&self) -> &[usize] {
        self.data.response_dims()
    }

    pub fn order(&self) -> usize {
        self.data.order()
    }

    /// `n prod_{j != k} r_j`.
    pub fn divisor(&self, k: usize) -> f64 {
        let total: usize = self.dims().iter().product();
        (self.data.n() * total / self.dims()[k]) as f64
    }

    /// Whitened mode-`k` moment of the residual stack, unscaled.
    pub fn residual_moment(&self, k: usize, whiteners: &[Matrix]) -> Result<Matrix> {
        whitened_mode_moment(&self.residuals, whiteners, k)
    }

    /// Whitened mode-`k` moment of `{e_i + D x_i}` given the residual part.
    ///
    /// Since `sum_i e_i x_i^T = 0` the cross terms vanish and the fitted part
    /// only needs `D x_{m+1} L_X^T` with `X X^T = L_X L_X^T`.
    pub fn shifted_moment(
        &self,
        k: usize,
        whiteners: &[Matrix],
        residual_part: &Matrix,
        shift: &Tensor,
    ) -> Result<Matrix> {
        let compact = shift.mode_product(&self.gram.lower.transpose(), self.order())?;
        let extra = whitened_mode_moment(&compact, whiteners, k)?;
        Ok((residual_part + extra) / self.divisor(k))
    }
}

/// Fitted values `B x_{m+1} X^T`, stacked along the sample mode.
pub(crate) fn predict(b: &Tensor, x: &Matrix) -> Result<Tensor> {
    b.mode_product(&x.transpose(), b.order() - 1)
}

/// Entrywise least squares `B = Y x_{m+1} {(X X^T)^{-1} X}` with a separable
/// covariance estimated from the residuals by flip-flop.
pub fn ols_fit(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let prep = Prepared::new(data, opts)?;
    let (raw, report) = flip_flop_raw(&prep.residuals, None, &opts.flip_flop)?;
    let cov = normalize_and_tau(&raw, &prep.residuals)?;
    let total: usize = prep.dims().iter().product();
    // tau is the exact scale optimum, so the quadratic term averages prod r_k
    let objective = log_det(&cov)? + total as f64;
    Ok(FitResult {
        b: prep.b_ols,
        cov,
        model: None,
        objective_trace: vec![objective],
        iterations: report.sweeps,
        converged: report.converged,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_predictor_hand_instance() {
        // p = 1, no centering: B = sum x_i Y_i / sum x_i^2 entrywise
        let x = Matrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        let y = Tensor::from_fn(&[2, 2, 3], |i| [[1.0, 0.5, 2.0, -1.0], [3.0, 1.0, 0.0, 2.0], [0.0, 4.0, 1.0, 1.0]][i[2]][i[0] + 2 * i[1]]);
        let d = Dataset::new(x, y.clone()).unwrap();
        let opts = FitOptions {
            center: false,
            ..FitOptions::default()
        };
        let fit = ols_fit(&d, &opts).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let num = y.get(&[a, b, 0]) + 2.0 * y.get(&[a, b, 1]) - y.get(&[a, b, 2]);
                assert!((fit.b.get(&[a, b, 0]) - num / 6.0).abs() < 1e-12);
            }
        }
    }
}
