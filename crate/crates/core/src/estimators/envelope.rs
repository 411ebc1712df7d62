use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::covariance::{
    flip_flop_raw, kron_log_det, log_det, whiten_apply, whitened_mode_moment, whiteners_of,
    FlipFlopOptions, SeparableCovariance,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{Matrix, Tensor};

use super::grassmann::{grassmann_minimize, EnvelopeObjective};
use super::ols::{predict, Prepared};
use super::onestep::onestep_basis_with;
use super::{
    check_envelope_dims, Dataset, EnvelopeBasis, EnvelopeModel, FitOptions, FitResult,
    PredictorGram,
};

/// `[[B; A_1, ..., A_m, I_p]]` with `None` standing for an identity factor.
fn project(b: &Tensor, projections: &[Option<Matrix>]) -> Result<Tensor> {
    let mats: Vec<Option<&Matrix>> = projections.iter().map(|p| p.as_ref()).collect();
    b.multi_mode_product(&mats)
}

fn basis_projections(basis: &EnvelopeBasis) -> Vec<Option<Matrix>> {
    (0..basis.order()).map(|k| Some(basis.projection(k))).collect()
}

/// Moment matrices of the basis objective for mode `k`, evaluated directly:
/// `M_k` from `delta_i = Y_i - [[B_OLS; P_1, .., I, .., P_m, I_p]] x_{m+1} X_i` and
/// `N_k` from the responses, both whitened by the other modes' factors of `cov`
/// and divided by `n prod_{j != k} r_j`.
pub fn compute_mn(
    k: usize,
    data: &Dataset,
    cov: &SeparableCovariance,
    basis: &EnvelopeBasis,
    b_ols: &Tensor,
) -> Result<(Matrix, Matrix)> {
    let dims = data.response_dims();
    if k >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode: k,
            order: dims.len(),
        });
    }
    if cov.dims() != dims || basis.response_dims() != dims {
        return Err(Error::dim("covariance or basis does not match the responses"));
    }
    let mut projections = basis_projections(basis);
    projections[k] = None;
    let fitted = predict(&project(b_ols, &projections)?, data.x())?;
    let delta = data.y().sub(&fitted)?;
    let whiteners = whiteners_of(cov.factors())?;
    let total: usize = dims.iter().product();
    let divisor = (data.n() * total / dims[k]) as f64;
    let m = whitened_mode_moment(&delta, &whiteners, k)? / divisor;
    let n = whitened_mode_moment(data.y(), &whiteners, k)? / divisor;
    Ok((m, n))
}

/// Negative log-likelihood `log|Sigma| + n^{-1} sum_i r_i^T Sigma^{-1} r_i` with
/// `r_i = vec(Y_i - B x_{m+1} X_i)`.
pub fn objective_l(b: &Tensor, cov: &SeparableCovariance, data: &Dataset) -> Result<f64> {
    let fitted = predict(b, data.x())?;
    let resid = data.y().sub(&fitted)?;
    let whitened = whiten_apply(&resid, cov, None)?;
    let quad = resid.dot(&whitened)?;
    Ok(log_det(cov)? + quad / data.n() as f64)
}

/// Core regression `Theta = Z x_{m+1} {(X X^T)^{-1} X}` with
/// `Z_i = [[Y_i; Gamma_1^T, ..., Gamma_m^T]]`.
pub fn update_theta(data: &Dataset, basis: &EnvelopeBasis) -> Result<Tensor> {
    let gram = PredictorGram::new(data.x())?;
    let z = core_responses(data.y(), basis)?;
    gram.regress(&z)
}

fn core_responses(y: &Tensor, basis: &EnvelopeBasis) -> Result<Tensor> {
    if basis.dims().contains(&0) {
        return Err(Error::invalid("empty envelope: some envelope dimension is zero"));
    }
    let transposed: Vec<Matrix> = basis.gammas().iter().map(|g| g.transpose()).collect();
    let mats: Vec<Option<&Matrix>> = transposed.iter().map(Some).collect();
    y.multi_mode_product(&mats)
}

/// Material blocks by flip-flop on the core residuals, warm-started at
/// `Gamma_k^T Sigma_k Gamma_k`, then rescaled per mode so that their relative
/// sizes follow the previous factors (the flip-flop only fixes their product).
fn core_omegas(
    core_resid: &Tensor,
    basis: &EnvelopeBasis,
    raw_prev: &[Matrix],
    opts: &FlipFlopOptions,
) -> Result<Vec<Matrix>> {
    let init: Vec<Matrix> = basis
        .gammas()
        .iter()
        .zip(raw_prev)
        .map(|(g, s)| linalg::symmetrize(&(g.transpose() * s * g)))
        .collect();
    let (mut omegas, _) = flip_flop_raw(core_resid, Some(init.clone()), opts)?;
    let logs: Vec<f64> = omegas
        .iter()
        .zip(&init)
        .map(|(o, i)| (o.trace() / i.trace()).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    for (o, c) in omegas.iter_mut().zip(&logs) {
        *o *= (mean - c).exp();
    }
    Ok(omegas)
}

fn previous_material(basis: &EnvelopeBasis, raw_prev: &[Matrix]) -> Vec<Matrix> {
    basis
        .gammas()
        .iter()
        .zip(raw_prev)
        .map(|(g, s)| linalg::symmetrize(&(g.transpose() * s * g)))
        .collect()
}

/// Material blocks `Omega_k` (flip-flop on core residuals) and immaterial blocks
/// `Omega_0k = Gamma_0k^T N_k Gamma_0k` with `N_k` whitened by `cov_prev`.
///
/// `theta` may be `None` only when some envelope dimension is zero; the material
/// blocks then keep their values under `cov_prev`.
pub fn update_omegas(
    data: &Dataset,
    basis: &EnvelopeBasis,
    theta: Option<&Tensor>,
    cov_prev: &SeparableCovariance,
    opts: &FlipFlopOptions,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let dims = data.response_dims();
    if cov_prev.dims() != dims || basis.response_dims() != dims {
        return Err(Error::dim("covariance or basis does not match the responses"));
    }
    let raw_prev = cov_prev.balanced_factors();
    let whiteners = whiteners_of(&raw_prev)?;
    let total: usize = dims.iter().product();
    let mut omega0s = Vec::with_capacity(dims.len());
    for (k, g0) in basis.completions().iter().enumerate() {
        let divisor = (data.n() * total / dims[k]) as f64;
        let n = whitened_mode_moment(data.y(), &whiteners, k)? / divisor;
        omega0s.push(linalg::symmetrize(&(g0.transpose() * n * g0)));
    }
    let omegas = match theta {
        _ if basis.dims().contains(&0) => previous_material(basis, &raw_prev),
        None => return Err(Error::invalid("core coefficients required for a nonempty envelope")),
        Some(theta) => {
            let z = core_responses(data.y(), basis)?;
            let s = z.sub(&predict(theta, data.x())?)?;
            core_omegas(&s, basis, &raw_prev, opts)?
        }
    };
    Ok((omegas, omega0s))
}

/// `B = [[B_OLS; P_1, ..., P_m, I_p]]` and
/// `Sigma_k = Gamma_k Omega_k Gamma_k^T + Gamma_0k Omega_0k Gamma_0k^T`, normalized.
pub fn reconstruct(
    basis: &EnvelopeBasis,
    b_ols: &Tensor,
    omegas: &[Matrix],
    omega0s: &[Matrix],
) -> Result<(Tensor, SeparableCovariance)> {
    let m = basis.order();
    if omegas.len() != m || omega0s.len() != m {
        return Err(Error::dim("one material and one immaterial block per mode required"));
    }
    for k in 0..m {
        let (u, r) = (basis.dims()[k], basis.response_dims()[k]);
        if omegas[k].shape() != (u, u) || omega0s[k].shape() != (r - u, r - u) {
            return Err(Error::dim(format!("mode {k}: block shapes do not match the basis")));
        }
    }
    let b = project(b_ols, &basis_projections(basis))?;
    let raw: Vec<Matrix> = (0..m)
        .map(|k| basis.assemble(k, &omegas[k], &omega0s[k]))
        .collect();
    Ok((b, SeparableCovariance::from_raw(raw)?))
}

/// Residual-part moments keyed by the factors they were whitened with.
struct MomentCache {
    slots: Vec<Option<(Vec<Matrix>, Matrix)>>,
}

impl MomentCache {
    fn new(m: usize) -> Self {
        MomentCache {
            slots: vec![None; m],
        }
    }

    fn residual(&mut self, prep: &Prepared, k: usize, raw: &[Matrix]) -> Result<(Matrix, Vec<Matrix>)> {
        let whiteners = whiteners_of(raw)?;
        if let Some((key, value)) = &self.slots[k] {
            if key.iter().zip(raw).enumerate().all(|(j, (a, b))| j == k || a == b) {
                return Ok((value.clone(), whiteners));
            }
        }
        let value = prep.residual_moment(k, &whiteners)?;
        self.slots[k] = Some((raw.to_vec(), value.clone()));
        Ok((value, whiteners))
    }
}

/// `(M_k, N_k)` on the prepared data, with `None` projections meaning "not yet estimated".
fn envelope_moments(
    prep: &Prepared,
    cache: &mut MomentCache,
    k: usize,
    raw: &[Matrix],
    gammas: &[Option<Matrix>],
) -> Result<(Matrix, Matrix)> {
    let (resid, whiteners) = cache.residual(prep, k, raw)?;
    let n = prep.shifted_moment(k, &whiteners, &resid, &prep.b_ols)?;
    let projections: Vec<Option<Matrix>> = gammas
        .iter()
        .enumerate()
        .map(|(j, g)| if j == k { None } else { g.as_ref().map(linalg::projection) })
        .collect();
    let m = if projections.iter().all(Option::is_none) {
        resid / prep.divisor(k)
    } else {
        let shift = prep.b_ols.sub(&project(&prep.b_ols, &projections)?)?;
        prep.shifted_moment(k, &whiteners, &resid, &shift)?
    };
    Ok((m, n))
}

fn random_start<R: Rng>(r: usize, u: usize, rng: &mut R) -> Matrix {
    let a = Matrix::from_fn(r, u, |_, _| rng.sample::<f64, _>(StandardNormal));
    linalg::orthonormalize(&a)
}

fn estimate_basis<R: Rng>(
    m: &Matrix,
    n: &Matrix,
    u: usize,
    current: Option<&Matrix>,
    rng: &mut R,
    opts: &FitOptions,
) -> Result<Matrix> {
    let r = m.nrows();
    if u == 0 {
        return Ok(Matrix::zeros(r, 0));
    }
    if u == r {
        return Ok(Matrix::identity(r, r));
    }
    let mut starts = Vec::with_capacity(3 + opts.random_starts);
    starts.extend(current.cloned());
    starts.push(onestep_basis_with(m, n, u, &opts.grassmann)?);
    starts.push(linalg::top_eigenvectors(n, u));
    for _ in 0..opts.random_starts {
        starts.push(random_start(r, u, rng));
    }
    let objective = EnvelopeObjective::new(m, n)?;
    grassmann_minimize(&objective, r, u, &starts, &opts.grassmann)
}

/// `B_OLS - [[B_OLS; P_1, ..., P_m, I_p]]`.
fn full_shift(prep: &Prepared, basis: &EnvelopeBasis) -> Result<Tensor> {
    prep.b_ols.sub(&project(&prep.b_ols, &basis_projections(basis))?)
}

/// Objective at `B = [[B_OLS; P]]` (given through `shift = B_OLS - B`) and raw factors.
fn objective_raw(prep: &Prepared, raw: &[Matrix], shift: &Tensor) -> Result<f64> {
    let whiteners = whiteners_of(raw)?;
    let mats: Vec<Option<&Matrix>> = whiteners.iter().map(Some).collect();
    let resid = prep.residuals.multi_mode_product(&mats)?.norm_sq();
    let compact = shift.mode_product(&prep.gram.lower.transpose(), prep.order())?;
    let fitted = compact.multi_mode_product(&mats)?.norm_sq();
    Ok(kron_log_det(raw)? + (resid + fitted) / prep.data.n() as f64)
}

fn omegas_on_prepared(
    prep: &Prepared,
    cache: &mut MomentCache,
    basis: &EnvelopeBasis,
    raw_prev: &[Matrix],
    opts: &FitOptions,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut omega0s = Vec::with_capacity(basis.order());
    for (k, g0) in basis.completions().iter().enumerate() {
        let (resid, whiteners) = cache.residual(prep, k, raw_prev)?;
        let n = prep.shifted_moment(k, &whiteners, &resid, &prep.b_ols)?;
        omega0s.push(linalg::symmetrize(&(g0.transpose() * n * g0)));
    }
    let omegas = if basis.dims().contains(&0) {
        previous_material(basis, raw_prev)
    } else {
        let z = core_responses(prep.data.y(), basis)?;
        let theta = prep.gram.regress(&z)?;
        let s = z.sub(&predict(&theta, prep.data.x())?)?;
        core_omegas(&s, basis, raw_prev, &opts.flip_flop)?
    };
    Ok((omegas, omega0s))
}

fn finish(
    prep: Prepared,
    basis: EnvelopeBasis,
    raw: Vec<Matrix>,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    start: Instant,
) -> Result<FitResult> {
    let cov = SeparableCovariance::from_raw(raw)?;
    let theta = if basis.dims().contains(&0) {
        None
    } else {
        Some(prep.gram.regress(&core_responses(prep.data.y(), &basis)?)?)
    };
    let omegas = previous_material(&basis, cov.factors());
    let omega0s = basis
        .completions()
        .iter()
        .zip(cov.factors())
        .map(|(g0, s)| linalg::symmetrize(&(g0.transpose() * s * g0)))
        .collect();
    let b = project(&prep.b_ols, &basis_projections(&basis))?;
    Ok(FitResult {
        b,
        cov,
        model: Some(EnvelopeModel {
            theta,
            basis,
            omegas,
            omega0s,
        }),
        objective_trace,
        iterations,
        converged,
        elapsed: start.elapsed(),
    })
}

/// Alternating envelope fit: per-mode basis updates on the Grassmann manifold,
/// core and covariance updates, until the objective settles.
///
/// Every covariance update is a partial minimizer of the objective (or is only
/// accepted when it lowers it), so the recorded objective never increases.
pub fn fit_iterative(data: &Dataset, u: &[usize], opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let prep = Prepared::new(data, opts)?;
    let dims = prep.dims().to_vec();
    check_envelope_dims(&dims, u)?;
    let m = dims.len();
    let total: usize = dims.iter().product();
    let (mut raw, _) = flip_flop_raw(&prep.residuals, None, &opts.flip_flop)?;
    let mut cache = MomentCache::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut gammas: Vec<Option<Matrix>> = vec![None; m];
    let mut basis = EnvelopeBasis::identity(&dims);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let kept = (raw.clone(), basis.clone());
        for k in 0..m {
            let (mk, nk) = envelope_moments(&prep, &mut cache, k, &raw, &gammas)?;
            let g = estimate_basis(&mk, &nk, u[k], gammas[k].as_ref(), &mut rng, opts)?;
            let g0 = linalg::orthogonal_complement(&g);
            let inner = g.transpose() * &mk * &g;
            let outer = g0.transpose() * &nk * &g0;
            raw[k] = linalg::symmetrize(&(&g * inner * g.transpose() + &g0 * outer * g0.transpose()));
            gammas[k] = Some(g);
        }
        basis = EnvelopeBasis::new(gammas.iter().map(|g| g.clone().unwrap()).collect())?;
        let mut ell = kron_log_det(&raw)? + total as f64;

        let shift = full_shift(&prep, &basis)?;
        if let Ok((omegas, omega0s)) = omegas_on_prepared(&prep, &mut cache, &basis, &raw, opts) {
            let candidate: Vec<Matrix> = (0..m)
                .map(|k| basis.assemble(k, &omegas[k], &omega0s[k]))
                .collect();
            if let Ok(value) = objective_raw(&prep, &candidate, &shift) {
                if value < ell {
                    raw = candidate;
                    ell = value;
                }
            }
        }
        for _ in 0..opts.polish_sweeps {
            for k in 0..m {
                let (resid, whiteners) = cache.residual(&prep, k, &raw)?;
                let s = prep.shifted_moment(k, &whiteners, &resid, &shift)?;
                raw[k] = basis.reduce(k, &s);
            }
            ell = kron_log_det(&raw)? + total as f64;
        }

        if let Some(&last) = trace.last() {
            // every step is a partial minimization, so a rise is rounding at a stall
            if ell > last {
                (raw, basis) = kept;
                iterations -= 1;
                converged = true;
                break;
            }
            trace.push(ell);
            if last - ell <= opts.tol * ell.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            trace.push(ell);
        }
    }
    finish(prep, basis, raw, trace, iterations, converged, start)
}

/// Single-pass envelope fit: each basis from the separable one-direction-at-a-time
/// algorithm on the initial covariance, then one core and covariance update.
pub fn fit_onestep(data: &Dataset, u: &[usize], opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let prep = Prepared::new(data, opts)?;
    let dims = prep.dims().to_vec();
    check_envelope_dims(&dims, u)?;
    let m = dims.len();
    let (raw0, _) = flip_flop_raw(&prep.residuals, None, &opts.flip_flop)?;
    let mut cache = MomentCache::new(m);
    let unknown: Vec<Option<Matrix>> = vec![None; m];
    let mut gammas = Vec::with_capacity(m);
    for k in 0..m {
        let (_, nk) = envelope_moments(&prep, &mut cache, k, &raw0, &unknown)?;
        let g = if u[k] == dims[k] {
            Matrix::identity(dims[k], dims[k])
        } else {
            onestep_basis_with(&raw0[k], &nk, u[k], &opts.grassmann)?
        };
        gammas.push(g);
    }
    let basis = EnvelopeBasis::new(gammas)?;
    let (omegas, omega0s) = omegas_on_prepared(&prep, &mut cache, &basis, &raw0, opts)?;
    let raw: Vec<Matrix> = (0..m)
        .map(|k| basis.assemble(k, &omegas[k], &omega0s[k]))
        .collect();
    let ell = objective_raw(&prep, &raw, &full_shift(&prep, &basis)?)?;
    finish(prep, basis, raw, vec![ell], 1, true, start)
}
