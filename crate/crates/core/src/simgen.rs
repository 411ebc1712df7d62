//! Simulation designs: true-signal shapes, envelope-structured covariances,
//! datasets, accuracy metrics and seeded replication runs.

use std::path::PathBuf;
use std::time::Instant;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::covariance::{sample_matrix_normal_stack, SeparableCovariance};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, EnvelopeBasis, Estimator, FitOptions};
use crate::io::read_pgm_mask;
use crate::linalg;
use crate::tensor::{tucker, Matrix, Tensor};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Largest disk radius, as a fraction of the side, tried by [`calibrate_disk_radius`].
pub const DISK_RADIUS_CAP: f64 = 0.3;

/// Numerical rank targeted by the default disk.
pub const DISK_TARGET_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeKind {
    Square,
    Cross,
    /// Disk of the given radius; `None` uses the calibrated default.
    Disk(Option<f64>),
    MaskFile(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub size: usize,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, size: usize) -> Self {
        ShapeSpec { kind, size }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(ShapeKind::Square),
            "cross" => Ok(ShapeKind::Cross),
            "disk" => Ok(ShapeKind::Disk(None)),
            other => match other.strip_prefix("mask:") {
                Some(path) => Ok(ShapeKind::MaskFile(PathBuf::from(path))),
                None => Err(Error::invalid(format!(
                    "unknown shape {other:?} (square, cross, disk or mask:<file.pgm>)"
                ))),
            },
        }
    }
}

fn disk(size: usize, radius: f64) -> Matrix {
    let c = (size as f64 - 1.0) / 2.0;
    Matrix::from_fn(size, size, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        if di * di + dj * dj <= radius * radius {
            1.0
        } else {
            0.0
        }
    })
}

/// Largest radius on a quarter-pixel grid below `DISK_RADIUS_CAP * size` whose
/// disk has exactly `target_rank`.
pub fn calibrate_disk_radius(size: usize, target_rank: usize) -> Option<f64> {
    let top = (DISK_RADIUS_CAP * size as f64 * 4.0).floor() as usize;
    (1..=top)
        .rev()
        .map(|q| q as f64 / 4.0)
        .find(|&rho| numerical_rank(&disk(size, rho), DEFAULT_RANK_TOL) == target_rank)
}

/// Default disk radius: the calibrated rank-8 radius, or `DISK_RADIUS_CAP * size`
/// when no radius on the grid reaches that rank.
pub fn default_disk_radius(size: usize) -> f64 {
    calibrate_disk_radius(size, DISK_TARGET_RANK).unwrap_or(DISK_RADIUS_CAP * size as f64)
}

/// Binary `{0, 1}` signal image.
pub fn make_shape(spec: &ShapeSpec) -> Result<Matrix> {
    let size = spec.size;
    if size < 8 && !matches!(spec.kind, ShapeKind::MaskFile(_)) {
        return Err(Error::invalid(format!("shape side must be at least 8, got {size}")));
    }
    Ok(match &spec.kind {
        ShapeKind::Square => {
            let side = size / 2;
            let lo = (size - side) / 2;
            let inside = |i: usize| i >= lo && i < lo + side;
            Matrix::from_fn(size, size, |i, j| if inside(i) && inside(j) { 1.0 } else { 0.0 })
        }
        ShapeKind::Cross => {
            let width = size / 8;
            let lo = (size - width) / 2;
            let margin = size / 8;
            let bar = |i: usize| i >= lo && i < lo + width;
            let span = |i: usize| i >= margin && i < size - margin;
            Matrix::from_fn(size, size, |i, j| {
                if (bar(i) && span(j)) || (bar(j) && span(i)) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        ShapeKind::Disk(radius) => disk(size, radius.unwrap_or_else(|| default_disk_radius(size))),
        ShapeKind::MaskFile(path) => read_pgm_mask(path)?,
    })
}

/// Count of singular values above `tol_ratio` times the largest; 0 for a zero matrix.
pub fn numerical_rank(b: &Matrix, tol_ratio: f64) -> usize {
    if b.is_empty() {
        return 0;
    }
    let s = linalg::singular_values(b);
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol_ratio * top).count()
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    Matrix::from_fn(rows, cols, |_, _| unit.sample(rng))
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal basis of the dominant left singular space of `b`, padded with
/// random orthogonal directions up to `u` columns.
fn dominant_span<R: Rng + ?Sized>(b: &Matrix, u: usize, mode: usize, rng: &mut R) -> Result<Matrix> {
    let r = b.nrows();
    let rank = numerical_rank(b, DEFAULT_RANK_TOL);
    if rank > u {
        return Err(Error::invalid(format!(
            "envelope dimension {u} at mode {mode} is below the signal rank {rank}"
        )));
    }
    let mut g = if rank == 0 {
        Matrix::zeros(r, 0)
    } else {
        let (_, left) = linalg::left_singular(b)?;
        left.columns(0, rank).into_owned()
    };
    if u > rank {
        let fill = normal_matrix(r, u - rank, rng);
        let fill = &fill - &g * (g.transpose() * &fill);
        let mut both = Matrix::zeros(r, u);
        both.columns_mut(0, rank).copy_from(&g);
        both.columns_mut(rank, u - rank).copy_from(&linalg::orthonormalize(&fill));
        g = linalg::orthonormalize(&both);
    }
    Ok(g)
}

/// Envelope-structured factors for a given basis:
/// `Sigma_k = Gamma_k Omega_k Gamma_k^T + sigma0^2 Gamma_0k Omega_0k Gamma_0k^T`
/// with `Omega = A A^T`, `A` uniform(0, 1), then normalized.
pub fn gen_covariance_for_basis<R: Rng + ?Sized>(
    basis: &EnvelopeBasis,
    sigma0_sq: f64,
    rng: &mut R,
) -> Result<SeparableCovariance> {
    if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
        return Err(Error::invalid(format!("immaterial ratio must be >= 0, got {sigma0_sq}")));
    }
    let mut raw = Vec::with_capacity(basis.order());
    for k in 0..basis.order() {
        let (u, r) = (basis.dims()[k], basis.response_dims()[k]);
        let a = uniform_matrix(u, u, rng);
        let a0 = uniform_matrix(r - u, r - u, rng);
        let mut s = basis.assemble(k, &(&a * a.transpose()), &(&a0 * a0.transpose() * sigma0_sq));
        if s.clone().cholesky().is_none() {
            let jitter = 1e-8 * s.trace() / r as f64;
            s += Matrix::identity(r, r) * jitter;
        }
        raw.push(s);
    }
    SeparableCovariance::from_raw(raw)
}

/// Envelope basis around the coefficient tensor `b` (dims `(r_1, ..., r_m, p)`)
/// and a matching envelope-structured covariance.
pub fn gen_envelope_covariance<R: Rng + ?Sized>(
    b: &Tensor,
    u: &[usize],
    sigma0_sq: f64,
    rng: &mut R,
) -> Result<(SeparableCovariance, EnvelopeBasis)> {
    let m = b.order() - 1;
    if u.len() != m {
        return Err(Error::invalid(format!("{} envelope dimensions for {m} modes", u.len())));
    }
    let mut gammas = Vec::with_capacity(m);
    for (k, &uk) in u.iter().enumerate() {
        let rk = b.dims()[k];
        if uk > rk {
            return Err(Error::invalid(format!("envelope dimension {uk} exceeds {rk} at mode {k}")));
        }
        let g = dominant_span(&b.matricize(k)?, uk, k, rng)?;
        let o = linalg::orthonormalize(&uniform_matrix(uk, uk, rng));
        gammas.push(linalg::orthonormalize(&(g * o)));
    }
    let basis = EnvelopeBasis::new(gammas)?;
    let cov = gen_covariance_for_basis(&basis, sigma0_sq, rng)?;
    Ok((cov, basis))
}

/// Coefficient tensor with dims `(size, size, 1)` holding a shape image.
pub fn shape_coefficients(spec: &ShapeSpec) -> Result<Tensor> {
    let img = make_shape(spec)?;
    Tensor::new(vec![img.nrows(), img.ncols(), 1], img.as_slice().to_vec())
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    /// Response dims `(r_1, ..., r_m)`; ignored when a shape fixes them.
    pub dims: Vec<usize>,
    pub p: usize,
    pub n: usize,
    pub snr: f64,
    /// Immaterial-to-material variation ratio.
    pub sigma0_sq: f64,
    /// True envelope dimensions used for generation.
    pub u: Vec<usize>,
    /// Working envelope dimensions used for fitting; defaults to `u`.
    pub fit_u: Option<Vec<usize>>,
    pub reps: usize,
    pub seed: u64,
    /// Two-way shape signal (with `p = 1`); `None` draws a random core.
    pub shape: Option<ShapeSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(Error::invalid(format!("SNR must be positive, got {}", self.snr)));
        }
        if self.reps < 1 {
            return Err(Error::invalid("at least one replication required"));
        }
        if self.n < 2 || self.p < 1 {
            return Err(Error::invalid("need n >= 2 and p >= 1"));
        }
        if self.shape.is_some() && self.p != 1 {
            return Err(Error::invalid("shape signals are two-group designs with p = 1"));
        }
        let dims = self.response_dims();
        if self.u.len() != dims.len() || self.u.iter().zip(&dims).any(|(u, r)| u > r) {
            return Err(Error::invalid(format!(
                "envelope dims {:?} do not fit response dims {dims:?}",
                self.u
            )));
        }
        Ok(())
    }

    pub fn response_dims(&self) -> Vec<usize> {
        match &self.shape {
            Some(s) => vec![s.size, s.size],
            None => self.dims.clone(),
        }
    }

    pub fn working_dims(&self) -> &[usize] {
        self.fit_u.as_deref().unwrap_or(&self.u)
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub b: Tensor,
    /// Covariance of the scaled error `sigma * eps`.
    pub cov: SeparableCovariance,
    pub basis: EnvelopeBasis,
    pub sigma: f64,
}

/// Two-group design (`p = 1`, the first `ceil(n/2)` samples are ones) or
/// standard normal predictors.
pub fn gen_predictors<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> Matrix {
    if p == 1 {
        let ones = n.div_ceil(2);
        Matrix::from_fn(1, n, |_, i| if i < ones { 1.0 } else { 0.0 })
    } else {
        normal_matrix(p, n, rng)
    }
}

/// Noise scale with `||B||_F / (sigma sqrt(tr Sigma)) = snr`; 1 when `B = 0`.
pub fn noise_scale(b: &Tensor, cov: &SeparableCovariance, snr: f64) -> f64 {
    let norm = b.norm();
    if norm == 0.0 {
        1.0
    } else {
        norm / (snr * cov.trace().sqrt())
    }
}

/// `Y_i = B x_{m+1} X_i + sigma eps_i` with envelope-structured `eps`.
pub fn gen_dataset<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    b: &Tensor,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    let m = b.order() - 1;
    if b.dims()[m] != config.p {
        return Err(Error::dim(format!(
            "coefficients have {} predictors, scenario has p = {}",
            b.dims()[m],
            config.p
        )));
    }
    let (cov, basis) = gen_envelope_covariance(b, &config.u, config.sigma0_sq, rng)?;
    simulate(config, b.clone(), cov, basis, rng)
}

fn simulate<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    b: Tensor,
    cov: SeparableCovariance,
    basis: EnvelopeBasis,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    let sigma = noise_scale(&b, &cov, config.snr);
    let x = gen_predictors(config.p, config.n, rng);
    let noise = sample_matrix_normal_stack(&cov, config.n, rng)?;
    let m = b.order() - 1;
    let mut y = b.mode_product(&x.transpose(), m)?;
    y.axpy(sigma, &noise)?;
    let scaled = SeparableCovariance::new(cov.factors().to_vec(), cov.tau() * sigma * sigma)?;
    Ok((
        Dataset::new(x, y)?,
        GroundTruth {
            b,
            cov: scaled,
            basis,
            sigma,
        },
    ))
}

/// Random-core design: orthonormal `Gamma_k`, standard normal core `Theta`,
/// `B = [[Theta; Gamma_1, ..., Gamma_m, I_p]]`.
pub fn gen_dataset_3way<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let dims = config.response_dims();
    let gammas = dims
        .iter()
        .zip(&config.u)
        .map(|(&r, &u)| linalg::orthonormalize(&normal_matrix(r, u, rng)))
        .collect();
    let basis = EnvelopeBasis::new(gammas)?;
    let b = if config.u.contains(&0) {
        let mut d = dims.clone();
        d.push(config.p);
        Tensor::zeros(&d)
    } else {
        let mut core_dims = config.u.clone();
        core_dims.push(config.p);
        let theta = Tensor::from_fn(&core_dims, |_| rng.sample(StandardNormal));
        let mut factors = basis.gammas().to_vec();
        factors.push(Matrix::identity(config.p, config.p));
        tucker(&theta, &factors)?
    };
    let cov = gen_covariance_for_basis(&basis, config.sigma0_sq, rng)?;
    simulate(config, b, cov, basis, rng)
}

/// Scalar-on-image data `y_i = <B, X_i> + eps_i`, for external comparisons.
#[derive(Clone, Debug)]
pub struct CpDataset {
    pub y: Vec<f64>,
    /// Images stacked along a trailing mode, dims `(r_1, r_2, n)`.
    pub x: Tensor,
    pub b: Matrix,
}

pub fn gen_cp_dataset<R: Rng + ?Sized>(b: &Matrix, n: usize, rng: &mut R) -> Result<CpDataset> {
    if n < 1 {
        return Err(Error::invalid("need at least one sample"));
    }
    let (r1, r2) = b.shape();
    let x = Tensor::from_fn(&[r1, r2, n], |_| rng.sample(StandardNormal));
    let vec_b = Tensor::from_matrix(b).into_data();
    let y = (0..n)
        .map(|i| {
            let xi = x.last_mode_slice(i);
            let signal: f64 = xi.data().iter().zip(&vec_b).map(|(a, c)| a * c).sum();
            signal + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Ok(CpDataset {
        y,
        x,
        b: b.clone(),
    })
}

/// `||b_hat - b_true||_F^2`.
pub fn error_metric(b_hat: &Tensor, b_true: &Tensor) -> Result<f64> {
    Ok(b_hat.sub(b_true)?.norm_sq())
}

/// 64-bit avalanche mix of a master seed, a replication index and a stream label.
pub fn derive_seed(master: u64, index: u64, label: &str) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let label_hash = label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3));
    mix(mix(mix(master) ^ index) ^ label_hash)
}

/// One generated replication: data plus truth, from its derived seed.
pub fn replicate(config: &ScenarioConfig, index: usize) -> Result<(Dataset, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64, "data"));
    match &config.shape {
        Some(spec) => gen_dataset(config, &shape_coefficients(spec)?, &mut rng),
        None => gen_dataset_3way(config, &mut rng),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub estimator: Estimator,
    /// `None` when the replication failed.
    pub error: Option<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(R)`; `None` with fewer than two successes.
    pub std_error: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationSummary {
    pub records: Vec<RepRecord>,
    pub summaries: Vec<EstimatorSummary>,
}

pub fn summarize(estimator: Estimator, errors: &[f64], failures: usize) -> EstimatorSummary {
    let r = errors.len();
    let mean = if r == 0 { f64::NAN } else { errors.iter().sum::<f64>() / r as f64 };
    let std_error = (r >= 2).then(|| {
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        (var / r as f64).sqrt()
    });
    EstimatorSummary {
        estimator,
        mean,
        std_error,
        successes: r,
        failures,
    }
}

/// Runs every estimator on `config.reps` seeded replications.
///
/// Replication `i` always uses the same derived seeds, so results do not depend
/// on `threads`; records come back in `(rep, estimator)` order.
pub fn run_replications(
    config: &ScenarioConfig,
    estimators: &[Estimator],
    opts: &FitOptions,
    threads: usize,
) -> Result<ReplicationSummary> {
    config.validate()?;
    let work = |rep: usize| -> Vec<RepRecord> {
        let generated = replicate(config, rep);
        estimators
            .iter()
            .map(|&estimator| {
                let start = Instant::now();
                let outcome = generated.as_ref().map_err(|e| e.to_string()).and_then(|(data, truth)| {
                    let fit_opts = FitOptions {
                        seed: derive_seed(config.seed, rep as u64, "fit"),
                        ..opts.clone()
                    };
                    estimator
                        .fit(data, config.working_dims(), &fit_opts)
                        .and_then(|fit| error_metric(&fit.b, &truth.b))
                        .map_err(|e| e.to_string())
                });
                let seconds = start.elapsed().as_secs_f64();
                let (error, failure) = match outcome {
                    Ok(e) => (Some(e), None),
                    Err(msg) => (None, Some(msg)),
                };
                RepRecord {
                    rep,
                    estimator,
                    error,
                    seconds,
                    failure,
                }
            })
            .collect()
    };
    let records: Vec<RepRecord> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.reps).into_par_iter().flat_map_iter(work).collect())
    } else {
        (0..config.reps).flat_map(work).collect()
    };
    let summaries = estimators
        .iter()
        .map(|&est| {
            let mine: Vec<&RepRecord> = records.iter().filter(|r| r.estimator == est).collect();
            let errors: Vec<f64> = mine.iter().filter_map(|r| r.error).collect();
            summarize(est, &errors, mine.len() - errors.len())
        })
        .collect();
    Ok(ReplicationSummary { records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_shape_ranks() {
        for (kind, rank) in [(ShapeKind::Square, 1), (ShapeKind::Cross, 2), (ShapeKind::Disk(None), 8)] {
            let img = make_shape(&ShapeSpec::new(kind, 64)).unwrap();
            assert!(img.iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(numerical_rank(&img, DEFAULT_RANK_TOL), rank);
        }
        assert_eq!(numerical_rank(&Matrix::identity(5, 5), DEFAULT_RANK_TOL), 5);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn disk_calibration_matches_default() {
        assert_eq!(default_disk_radius(64), 14.5);
    }

    #[test]
    fn balanced_groups() {
        let x = gen_predictors(1, 5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(x.as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 0, "data"), derive_seed(1, 0, "fit"));
        assert_ne!(derive_seed(1, 0, "data"), derive_seed(1, 1, "data"));
        assert_eq!(derive_seed(7, 3, "data"), derive_seed(7, 3, "data"));
    }
}
