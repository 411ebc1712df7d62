//! Asymptotic coefficient covariances, entrywise z-tests and multiplicity control.
//!
//! Tests are two-sided against the standard normal; with small `n` the
//! p-values are approximate.

use crate::covariance::{kron_modes, SeparableCovariance};
use crate::error::{Error, Result};
use crate::estimators::EnvelopeBasis;
use crate::linalg;
use crate::tensor::{kron, Matrix, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceKind {
    /// `Sigma_X^{-1} ⊗ Sigma`, the covariance of the OLS estimator.
    Ols,
    /// `Sigma_X^{-1} ⊗ Gamma_m Omega_m Gamma_m^T ⊗ ... ⊗ Gamma_1 Omega_1 Gamma_1^T`,
    /// the envelope estimator with a known basis.
    KnownBasis,
}

/// `scale * Sigma_X^{-1} ⊗ F_m ⊗ ... ⊗ F_1` over `vec(B)` with `B` of dims `(r_1, ..., r_m, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientCovariance {
    pub sigma_x_inv: Matrix,
    pub factors: Vec<Matrix>,
    pub scale: f64,
    pub kind: CovarianceKind,
}

impl CoefficientCovariance {
    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.factors.iter().map(|f| f.nrows()).collect();
        d.push(self.sigma_x_inv.nrows());
        d
    }

    /// Diagonal as a tensor shaped like the coefficients.
    pub fn diagonal(&self) -> Tensor {
        let dims = self.dims();
        let m = self.factors.len();
        Tensor::from_fn(&dims, |idx| {
            let modes: f64 = (0..m).map(|k| self.factors[k][(idx[k], idx[k])]).product();
            self.scale * modes * self.sigma_x_inv[(idx[m], idx[m])]
        })
    }

    pub fn dense(&self) -> Matrix {
        kron(&[self.sigma_x_inv.clone(), kron_modes(&self.factors)]) * self.scale
    }
}

fn invert_sigma_x(sigma_x: &Matrix) -> Result<Matrix> {
    if !sigma_x.is_square() || sigma_x.nrows() == 0 {
        return Err(Error::dim("predictor covariance must be square and non-empty"));
    }
    linalg::spd_inverse(sigma_x, "predictor covariance")
}

pub fn u_ols(sigma_x: &Matrix, cov: &SeparableCovariance) -> Result<CoefficientCovariance> {
    Ok(CoefficientCovariance {
        sigma_x_inv: invert_sigma_x(sigma_x)?,
        factors: cov.factors().to_vec(),
        scale: cov.tau(),
        kind: CovarianceKind::Ols,
    })
}

/// Known-basis envelope covariance; `omegas` are on the same scale as the
/// factors of a covariance whose overall scale is `tau`.
pub fn u_gamma(
    sigma_x: &Matrix,
    basis: &EnvelopeBasis,
    omegas: &[Matrix],
    tau: f64,
) -> Result<CoefficientCovariance> {
    if omegas.len() != basis.order() {
        return Err(Error::dim(format!(
            "{} material blocks for a basis of order {}",
            omegas.len(),
            basis.order()
        )));
    }
    let mut factors = Vec::with_capacity(omegas.len());
    for (k, (g, o)) in basis.gammas().iter().zip(omegas).enumerate() {
        if o.shape() != (g.ncols(), g.ncols()) {
            return Err(Error::dim(format!(
                "mode {k}: material block is {}x{}, basis has {} columns",
                o.nrows(),
                o.ncols(),
                g.ncols()
            )));
        }
        factors.push(linalg::symmetrize(&(g * o * g.transpose())));
    }
    Ok(CoefficientCovariance {
        sigma_x_inv: invert_sigma_x(sigma_x)?,
        factors,
        scale: tau,
        kind: CovarianceKind::KnownBasis,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PValueMap {
    pub pvalues: Tensor,
    pub z: Tensor,
    pub n: usize,
}

impl PValueMap {
    pub fn threshold(&self, alpha: f64) -> Result<Tensor> {
        threshold_map(&self.pvalues, alpha)
    }

    pub fn bh(&self, q: f64) -> Result<Tensor> {
        bh_fdr(&self.pvalues, q)
    }
}

/// Two-sided standard normal tail probability `2 (1 - Phi(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Entrywise `z = sqrt(n) b / sqrt(var)` and its two-sided p-value; entries
/// with zero variance get `z = 0` and `p = 1`.
pub fn pvalue_map(b_hat: &Tensor, cov: &CoefficientCovariance, n: usize) -> Result<PValueMap> {
    if n < 2 {
        return Err(Error::invalid("need n >= 2 for a p-value map"));
    }
    let var = cov.diagonal();
    if var.dims() != b_hat.dims() {
        return Err(Error::dim(format!(
            "coefficients have dims {:?}, covariance implies {:?}",
            b_hat.dims(),
            var.dims()
        )));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut z = Vec::with_capacity(var.len());
    let mut p = Vec::with_capacity(var.len());
    for (&b, &v) in b_hat.data().iter().zip(var.data()) {
        if v < 0.0 || v.is_nan() {
            return Err(Error::not_pd(format!("coefficient covariance (variance {v})")));
        }
        if v == 0.0 || b == 0.0 {
            z.push(0.0);
            p.push(1.0);
        } else {
            let zi = sqrt_n * b / v.sqrt();
            z.push(zi);
            p.push(two_sided_p(zi));
        }
    }
    let dims = b_hat.dims().to_vec();
    Ok(PValueMap {
        pvalues: Tensor::new(dims.clone(), p)?,
        z: Tensor::new(dims, z)?,
        n,
    })
}

fn indicator(pvalues: &Tensor, cut: impl Fn(f64) -> bool) -> Tensor {
    let data = pvalues.data().iter().map(|&p| if cut(p) { 1.0 } else { 0.0 }).collect();
    Tensor::new(pvalues.dims().to_vec(), data).expect("same length")
}

/// `1` where `p < alpha`.
pub fn threshold_map(pvalues: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(indicator(pvalues, |p| p < alpha))
}

/// Benjamini-Hochberg step-up over all entries at level `q`.
pub fn bh_fdr(pvalues: &Tensor, q: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("FDR level must lie in [0, 1], got {q}")));
    }
    let mut sorted = pvalues.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let cutoff = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &p)| p <= (i + 1) as f64 * q / total)
        .map(|(_, &p)| p);
    Ok(match cutoff {
        Some(c) => indicator(pvalues, |p| p <= c),
        None => indicator(pvalues, |_| false),
    })
}
