use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{Matrix, Tensor};

/// Paired observations: predictors `x` (`p x n`, one column per sample) and
/// responses `y` stacked along a trailing sample mode, dims `(r_1, ..., r_m, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Tensor,
    x_means: Vec<f64>,
    y_means: Option<Tensor>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Tensor) -> Result<Self> {
        if y.order() < 2 {
            return Err(Error::dim("responses need at least one mode plus the sample mode"));
        }
        let n = *y.dims().last().unwrap();
        if x.ncols() != n {
            return Err(Error::dim(format!(
                "{} predictor columns but {n} stacked responses",
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::dim("predictor dimension is zero"));
        }
        Ok(Dataset {
            x,
            y,
            x_means: Vec::new(),
            y_means: None,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Tensor {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    /// `(r_1, ..., r_m)`.
    pub fn response_dims(&self) -> &[usize] {
        &self.y.dims()[..self.y.order() - 1]
    }

    /// Number of response modes `m`.
    pub fn order(&self) -> usize {
        self.y.order() - 1
    }

    pub fn response(&self, i: usize) -> Tensor {
        self.y.last_mode_slice(i)
    }

    pub fn is_centered(&self) -> bool {
        self.y_means.is_some()
    }

    /// Means removed by [`Dataset::center`], if any.
    pub fn means(&self) -> Option<(&[f64], &Tensor)> {
        self.y_means.as_ref().map(|y| (self.x_means.as_slice(), y))
    }

    /// Subtracts predictor and response sample means; a no-op on centered data.
    pub fn center(&self) -> Result<Dataset> {
        if self.is_centered() {
            return Ok(self.clone());
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::invalid(format!("centering needs n >= 2, got {n}")));
        }
        let x_means: Vec<f64> = self.x.row_iter().map(|r| r.sum() / n as f64).collect();
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            for (v, m) in col.iter_mut().zip(&x_means) {
                *v -= m;
            }
        }
        let chunk = self.y.len() / n;
        let mut mean = vec![0.0; chunk];
        for block in self.y.data().chunks(chunk) {
            for (m, v) in mean.iter_mut().zip(block) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut y = self.y.clone();
        for block in y.data_mut().chunks_mut(chunk) {
            for (v, m) in block.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        Ok(Dataset {
            x,
            y,
            x_means,
            y_means: Some(Tensor::new(self.response_dims().to_vec(), mean)?),
        })
    }

    /// Adds the stored means back.
    pub fn uncenter(&self) -> Dataset {
        let Some(y_means) = &self.y_means else {
            return self.clone();
        };
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            for (v, m) in col.iter_mut().zip(&self.x_means) {
                *v += m;
            }
        }
        let mut y = self.y.clone();
        for block in y.data_mut().chunks_mut(y_means.len()) {
            for (v, m) in block.iter_mut().zip(y_means.data()) {
                *v += m;
            }
        }
        Dataset {
            x,
            y,
            x_means: Vec::new(),
            y_means: None,
        }
    }

    /// Sample predictor covariance with divisor `n`, on centered predictors.
    pub fn predictor_covariance(&self) -> Result<Matrix> {
        let c = self.center()?;
        Ok(linalg::symmetrize(&(c.x() * c.x().transpose())) / self.n() as f64)
    }
}

/// `S = X X^T` with its inverse, Cholesky factor and the OLS hat map `S^{-1} X`.
#[derive(Clone, Debug)]
pub(crate) struct PredictorGram {
    pub lower: Matrix,
    pub hat: Matrix,
}

/// Largest accepted condition number of `X X^T`.
pub const MAX_CONDITION: f64 = 1e12;

impl PredictorGram {
    pub fn new(x: &Matrix) -> Result<Self> {
        let s = linalg::symmetrize(&(x * x.transpose()));
        let cond = linalg::condition_number(&s);
        if !(cond < MAX_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        let chol = s.clone().cholesky().ok_or(Error::IllConditioned(cond))?;
        let hat = chol.solve(x);
        Ok(PredictorGram {
            lower: chol.l(),
            hat,
        })
    }

    /// `T x_{m+1} (S^{-1} X)`: regression of a stacked array on the predictors.
    pub fn regress(&self, stacked: &Tensor) -> Result<Tensor> {
        stacked.mode_product(&self.hat, stacked.order() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, -1.0]);
        let y = Tensor::from_fn(&[2, 2, 3], |i| (i[0] + 3 * i[1]) as f64 + (i[2] * i[2]) as f64);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn centering_round_trip() {
        let d = toy();
        let c = d.center().unwrap();
        for row in c.x().row_iter() {
            assert!(row.sum().abs() < 1e-12);
        }
        let back = c.uncenter();
        assert!((back.x() - d.x()).norm() < 1e-12);
        assert!(back.y().sub(d.y()).unwrap().norm() < 1e-12);
        assert_eq!(c.center().unwrap(), c);
    }

    #[test]
    fn single_sample_cannot_be_centered() {
        let d = Dataset::new(Matrix::from_element(1, 1, 1.0), Tensor::zeros(&[2, 1])).unwrap();
        assert!(matches!(d.center(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constant_predictor_is_ill_conditioned() {
        let x = Matrix::from_row_slice(1, 3, &[2.0, 2.0, 2.0]);
        let d = Dataset::new(x, Tensor::zeros(&[2, 3])).unwrap().center().unwrap();
        assert!(d.x().iter().all(|v| *v == 0.0));
        assert!(matches!(PredictorGram::new(d.x()), Err(Error::IllConditioned(_))));
    }
}
