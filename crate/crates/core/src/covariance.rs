//! Separable (Kronecker) covariance `tau * Sigma_m ⊗ ... ⊗ Sigma_1`.
//!
//! The covariance of `vec(E)` for an error tensor `E` with dims `(r_1, ..., r_m)`
//! is represented by per-mode factors and one positive scale. Factors are kept at
//! unit Frobenius norm so that the representation is identifiable; `tau` carries
//! the overall scale. The dense matrix is only formed on request for small oracles.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{kron, Matrix, Tensor};

/// Kronecker factors are multiplied in descending mode order, `Sigma_m ⊗ ... ⊗ Sigma_1`,
/// which matches the first-index-fastest `vec` layout of [`Tensor`].
pub const DESCENDING_KRONECKER: bool = true;

/// Dense Kronecker product of per-mode matrices given in mode order.
pub fn kron_modes(mats: &[Matrix]) -> Matrix {
    let mut ordered: Vec<Matrix> = mats.to_vec();
    if DESCENDING_KRONECKER {
        ordered.reverse();
    }
    kron(&ordered)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparableCovariance {
    factors: Vec<Matrix>,
    tau: f64,
}

impl SeparableCovariance {
    /// Checks symmetry and positive definiteness; does not rescale.
    pub fn new(factors: Vec<Matrix>, tau: f64) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("a separable covariance needs at least one factor"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("covariance scale must be positive, got {tau}")));
        }
        for (k, f) in factors.iter().enumerate() {
            if !linalg::is_symmetric(f, 1e-12) {
                return Err(Error::dim(format!("factor {k} is not square and symmetric")));
            }
            linalg::cholesky(f, &format!("covariance factor {k}"))?;
        }
        Ok(SeparableCovariance { factors, tau })
    }

    /// Normalizes arbitrary positive definite factors to unit Frobenius norm and
    /// moves their norms into `tau`; the dense covariance is unchanged.
    pub fn from_raw(factors: Vec<Matrix>) -> Result<Self> {
        let mut tau = 1.0;
        let mut normed = Vec::with_capacity(factors.len());
        for f in factors {
            let f = linalg::symmetrize(&f);
            let norm = f.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::not_pd("zero covariance factor"));
            }
            tau *= norm;
            normed.push(f / norm);
        }
        SeparableCovariance::new(normed, tau)
    }

    pub fn identity(dims: &[usize]) -> Self {
        SeparableCovariance {
            factors: dims.iter().map(|&r| Matrix::identity(r, r)).collect(),
            tau: 1.0,
        }
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Same covariance with the unit-norm convention re-applied.
    pub fn normalized(&self) -> Result<Self> {
        let mut c = SeparableCovariance::from_raw(self.factors.clone())?;
        c.tau *= self.tau;
        Ok(c)
    }

    /// Factors with `tau` spread evenly, `tau^{1/m} Sigma_k`, so that their plain
    /// Kronecker product is the full covariance.
    pub fn balanced_factors(&self) -> Vec<Matrix> {
        let s = self.tau.powf(1.0 / self.order() as f64);
        self.factors.iter().map(|f| f * s).collect()
    }

    /// `tau * Sigma_m ⊗ ... ⊗ Sigma_1`, materialized.
    pub fn dense(&self) -> Matrix {
        kron_modes(&self.factors) * self.tau
    }

    /// `tau * prod_k trace(Sigma_k)`.
    pub fn trace(&self) -> f64 {
        self.tau * self.factors.iter().map(|f| f.trace()).product::<f64>()
    }

    pub fn cholesky(&self) -> Result<CholeskyFactors> {
        let lowers = self
            .factors
            .iter()
            .enumerate()
            .map(|(k, f)| Ok(linalg::cholesky(f, &format!("covariance factor {k}"))?.l()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CholeskyFactors {
            lowers,
            sqrt_tau: self.tau.sqrt(),
        })
    }

    fn check_dims(&self, dims: &[usize]) -> Result<()> {
        let own = self.dims();
        if dims.len() < own.len() || dims[..own.len()] != own[..] {
            return Err(Error::dim(format!(
                "tensor dims {dims:?} do not start with covariance dims {own:?}"
            )));
        }
        Ok(())
    }
}

/// Per-mode lower Cholesky factors `Sigma_k = L_k L_k^T` and `sqrt(tau)`.
#[derive(Clone, Debug)]
pub struct CholeskyFactors {
    pub lowers: Vec<Matrix>,
    pub sqrt_tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipFlopOptions {
    pub max_sweeps: usize,
    /// Stop once the largest relative Frobenius change of the normalized factors
    /// over one sweep falls below this value.
    pub tol: f64,
}

impl Default for FlipFlopOptions {
    fn default() -> Self {
        FlipFlopOptions {
            max_sweeps: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlipFlopReport {
    pub sweeps: usize,
    pub converged: bool,
    /// Normalized negative log-likelihood `log|Sigma| + n^{-1} sum_i quad_i`
    /// after each sweep; non-increasing.
    pub objective_trace: Vec<f64>,
}

/// Whitened per-mode second moment
/// `sum_i E_i(k) {⊗_{j != k} W_j^T W_j} E_i(k)^T`, where `stack` holds the `E_i`
/// along its trailing modes and `whiteners[j] = L_j^{-1}`.
pub(crate) fn whitened_mode_moment(
    stack: &Tensor,
    whiteners: &[Matrix],
    k: usize,
) -> Result<Matrix> {
    let mats: Vec<Option<&Matrix>> = whiteners
        .iter()
        .enumerate()
        .map(|(j, w)| if j == k { None } else { Some(w) })
        .collect();
    stack.multi_mode_product(&mats)?.mode_gram(k)
}

pub(crate) fn whiteners_of(factors: &[Matrix]) -> Result<Vec<Matrix>> {
    factors
        .iter()
        .enumerate()
        .map(|(k, f)| linalg::whitening_factor(f, &format!("covariance factor {k}")))
        .collect()
}

/// `sum_k (prod_{j != k} r_j) log|Sigma_k|` for raw factors.
pub(crate) fn kron_log_det(factors: &[Matrix]) -> Result<f64> {
    let total: usize = factors.iter().map(|f| f.nrows()).product();
    let mut acc = 0.0;
    for (k, f) in factors.iter().enumerate() {
        let rk = f.nrows();
        acc += (total / rk) as f64 * linalg::log_det_spd(f, &format!("covariance factor {k}"))?;
    }
    Ok(acc)
}

fn unit(m: &Matrix) -> Matrix {
    m / m.norm()
}

/// Flip-flop maximum likelihood estimate of a separable covariance from a stack
/// of residual tensors (dims `(r_1, ..., r_m, n)`), followed by unit-norm
/// normalization and the matching scale `tau`.
///
/// Each sweep cycles `k = 1..m` and sets
/// `Sigma_k = (n prod_{j != k} r_j)^{-1} sum_i e_i(k) {⊗_{j != k} Sigma_j^{-1}} e_i(k)^T`.
/// The scale is folded out of the sweep and recovered at the end.
pub fn flip_flop_mle(
    residuals: &Tensor,
    init: Option<&SeparableCovariance>,
    opts: &FlipFlopOptions,
) -> Result<SeparableCovariance> {
    flip_flop_with_report(residuals, init, opts).map(|(c, _)| c)
}

pub fn flip_flop_with_report(
    residuals: &Tensor,
    init: Option<&SeparableCovariance>,
    opts: &FlipFlopOptions,
) -> Result<(SeparableCovariance, FlipFlopReport)> {
    let (factors, report) = flip_flop_raw(residuals, init.map(|c| c.balanced_factors()), opts)?;
    Ok((normalize_and_tau(&factors, residuals)?, report))
}

/// Flip-flop sweeps on raw factors (`tau` folded in). `residuals` has the
/// response modes first and samples along the last mode.
pub(crate) fn flip_flop_raw(
    residuals: &Tensor,
    init: Option<Vec<Matrix>>,
    opts: &FlipFlopOptions,
) -> Result<(Vec<Matrix>, FlipFlopReport)> {
    if residuals.order() < 2 {
        return Err(Error::dim("residual stack needs a response mode and a sample mode"));
    }
    let dims = &residuals.dims()[..residuals.order() - 1];
    let n = residuals.dims()[residuals.order() - 1];
    let m = dims.len();
    let total: usize = dims.iter().product();
    for (k, &rk) in dims.iter().enumerate() {
        if n * (total / rk) < rk {
            return Err(Error::invalid(format!(
                "mode {k}: {n} samples cannot estimate a {rk}x{rk} factor"
            )));
        }
    }
    let mut factors = match init {
        Some(f) => {
            if f.len() != m || f.iter().zip(dims).any(|(f, &r)| f.nrows() != r) {
                return Err(Error::dim("initial covariance does not match residual dims"));
            }
            f
        }
        None => dims.iter().map(|&r| Matrix::identity(r, r)).collect(),
    };
    let mut whiteners = whiteners_of(&factors)?;
    let mut report = FlipFlopReport {
        sweeps: 0,
        converged: false,
        objective_trace: Vec::new(),
    };
    for sweep in 1..=opts.max_sweeps {
        let kept = factors.clone();
        let previous: Vec<Matrix> = factors.iter().map(unit).collect();
        for k in 0..m {
            let denom = (n * (total / dims[k])) as f64;
            let update = whitened_mode_moment(residuals, &whiteners, k)? / denom;
            let w = linalg::whitening_factor(&update, &format!("flip-flop update of mode {k}"))
                .map_err(|_| Error::SingularUpdate { mode: k })?;
            factors[k] = update;
            whiteners[k] = w;
        }
        // At a partial optimum the quadratic term equals prod r_k exactly.
        let objective = kron_log_det(&factors)? + total as f64;
        if let Some(&last) = report.objective_trace.last() {
            // a rise can only come from rounding once the sweeps have stalled
            if objective > last {
                factors = kept;
                report.converged = true;
                break;
            }
        }
        report.objective_trace.push(objective);
        report.sweeps = sweep;
        let change = factors
            .iter()
            .zip(&previous)
            .map(|(f, p)| (unit(f) - p).norm())
            .fold(0.0, f64::max);
        if change < opts.tol {
            report.converged = true;
            break;
        }
    }
    Ok((factors, report))
}

/// Normalizes each factor to unit Frobenius norm and computes
/// `tau = (n prod r_j)^{-1} sum_i vec(e_i)^T {⊗_k Sigma_k^{-1}} vec(e_i)`.
pub fn normalize_and_tau(factors: &[Matrix], residuals: &Tensor) -> Result<SeparableCovariance> {
    let m = factors.len();
    if residuals.order() != m + 1
        || factors.iter().zip(residuals.dims()).any(|(f, &r)| f.nrows() != r)
    {
        return Err(Error::dim("factors do not match residual dims"));
    }
    let normed: Vec<Matrix> = factors.iter().map(|f| unit(&linalg::symmetrize(f))).collect();
    let whiteners = whiteners_of(&normed)?;
    let mats: Vec<Option<&Matrix>> = whiteners.iter().map(Some).collect();
    let quad = residuals.multi_mode_product(&mats)?.norm_sq();
    let tau = quad / residuals.len() as f64;
    if !(tau > 0.0) {
        return Err(Error::not_pd("covariance scale (all residuals are zero)"));
    }
    SeparableCovariance::new(normed, tau)
}

/// Applies `Sigma_j^{-1}` along every response mode `j != exclude_mode`.
///
/// Without an excluded mode the result is `(tau Sigma)^{-1} vec(t)`; with one, only
/// the factor inverses of the other modes are applied and `tau` is left out.
/// Modes of `t` past the covariance order are untouched.
pub fn whiten_apply(
    t: &Tensor,
    cov: &SeparableCovariance,
    exclude_mode: Option<usize>,
) -> Result<Tensor> {
    cov.check_dims(t.dims())?;
    let inverses = cov
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| {
            if Some(k) == exclude_mode {
                Ok(None)
            } else {
                linalg::spd_inverse(f, &format!("covariance factor {k}")).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mats: Vec<Option<&Matrix>> = inverses.iter().map(|m| m.as_ref()).collect();
    let mut out = t.multi_mode_product(&mats)?;
    if exclude_mode.is_none() {
        out.scale(1.0 / cov.tau);
    }
    Ok(out)
}

/// `log|tau Sigma_m ⊗ ... ⊗ Sigma_1|`.
pub fn log_det(cov: &SeparableCovariance) -> Result<f64> {
    let total: usize = cov.dims().iter().product();
    Ok(total as f64 * cov.tau.ln() + kron_log_det(&cov.factors)?)
}

/// Draws one tensor with `vec` distributed as `N(0, tau Sigma_m ⊗ ... ⊗ Sigma_1)`.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    dims: &[usize],
    cov: &SeparableCovariance,
    rng: &mut R,
) -> Result<Tensor> {
    if dims != cov.dims().as_slice() {
        return Err(Error::dim(format!(
            "sample dims {dims:?} differ from covariance dims {:?}",
            cov.dims()
        )));
    }
    let stack = sample_matrix_normal_stack(cov, 1, rng)?;
    Ok(stack.last_mode_slice(0))
}

/// Draws `n` independent samples stacked along a trailing mode.
pub fn sample_matrix_normal_stack<R: Rng + ?Sized>(
    cov: &SeparableCovariance,
    n: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let chol = cov.cholesky()?;
    let mut dims = cov.dims();
    dims.push(n);
    let len: usize = dims.iter().product();
    let z: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let z = Tensor::new(dims, z)?;
    let mats: Vec<Option<&Matrix>> = chol.lowers.iter().map(Some).collect();
    let mut out = z.multi_mode_product(&mats)?;
    out.scale(chol.sqrt_tau);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(r: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(r, r, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + Matrix::identity(r, r) * 0.5
    }

    #[test]
    fn zero_residuals_are_singular() {
        let e = Tensor::zeros(&[3, 2, 10]);
        let err = flip_flop_mle(&e, None, &FlipFlopOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularUpdate { mode: 0 }));
    }

    #[test]
    fn log_det_scale_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = SeparableCovariance::from_raw(vec![random_spd(2, &mut rng), random_spd(3, &mut rng)])
            .unwrap();
        let doubled = SeparableCovariance::new(c.factors().to_vec(), 2.0 * c.tau()).unwrap();
        let diff = log_det(&doubled).unwrap() - log_det(&c).unwrap();
        assert!((diff - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(log_det(&SeparableCovariance::identity(&[2, 3])).unwrap(), 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = SeparableCovariance::identity(&[2, 3]);
        let a = sample_matrix_normal(&[2, 3], &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_matrix_normal(&[2, 3], &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn whiten_with_identity_only_scales() {
        let c = SeparableCovariance::new(vec![Matrix::identity(2, 2)], 4.0).unwrap();
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        assert_eq!(whiten_apply(&t, &c, None).unwrap().data(), &[0.25, -0.5]);
    }
}
