//! OLS and envelope estimators for tensor response regression.

mod dataset;
mod envelope;
mod grassmann;
mod ols;
mod onestep;
mod params;

use std::time::Duration;

pub use dataset::{Dataset, MAX_CONDITION};
pub use envelope::{
    compute_mn, fit_iterative, fit_onestep, objective_l, reconstruct, update_omegas,
    update_theta,
};
pub use grassmann::{
    envelope_objective_fk, grassmann_minimize, grassmann_minimize_report, EnvelopeObjective,
    GrassmannObjective, GrassmannOptions, GrassmannOutcome,
};
pub use ols::ols_fit;
pub use onestep::{onestep_basis, sphere_minimize};
pub use params::{parameter_count, ParameterCount};

pub(crate) use dataset::PredictorGram;

use crate::covariance::{FlipFlopOptions, SeparableCovariance};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{tucker, Matrix, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Center predictors and responses before fitting; disable for pre-centered data.
    pub center: bool,
    /// Relative change in the objective that ends the outer loop.
    pub tol: f64,
    pub max_iter: usize,
    /// Random semi-orthogonal starts per basis update, on top of the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
    pub flip_flop: FlipFlopOptions,
    pub grassmann: GrassmannOptions,
    /// Structured covariance sweeps after each outer iteration.
    pub polish_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            center: true,
            tol: 1e-6,
            max_iter: 50,
            random_starts: 3,
            seed: 0,
            flip_flop: FlipFlopOptions::default(),
            grassmann: GrassmannOptions::default(),
            polish_sweeps: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    Ols,
    EnvIterative,
    EnvOnestep,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::EnvIterative => "env-iterative",
            Estimator::EnvOnestep => "env-onestep",
        }
    }

    pub fn fit(self, data: &Dataset, u: &[usize], opts: &FitOptions) -> Result<FitResult> {
        match self {
            Estimator::Ols => ols_fit(data, opts),
            Estimator::EnvIterative => fit_iterative(data, u, opts),
            Estimator::EnvOnestep => fit_onestep(data, u, opts),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Estimator::Ols),
            "env-iterative" | "env" | "iterative" => Ok(Estimator::EnvIterative),
            "env-onestep" | "onestep" => Ok(Estimator::EnvOnestep),
            other => Err(Error::invalid(format!(
                "unknown estimator {other:?} (expected ols, env-iterative or env-onestep)"
            ))),
        }
    }
}

/// Per-mode semi-orthogonal bases `Gamma_k` and their orthogonal completions.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeBasis {
    gammas: Vec<Matrix>,
    completions: Vec<Matrix>,
}

impl EnvelopeBasis {
    pub fn new(gammas: Vec<Matrix>) -> Result<Self> {
        let mut completions = Vec::with_capacity(gammas.len());
        for (k, g) in gammas.iter().enumerate() {
            let u = g.ncols();
            if u > g.nrows() {
                return Err(Error::dim(format!("mode {k}: basis has more columns than rows")));
            }
            if (g.transpose() * g - Matrix::identity(u, u)).norm() > 1e-10 {
                return Err(Error::invalid(format!("mode {k}: basis columns are not orthonormal")));
            }
            completions.push(linalg::orthogonal_complement(g));
        }
        Ok(EnvelopeBasis { gammas, completions })
    }

    /// Full-space basis `Gamma_k = I`.
    pub fn identity(dims: &[usize]) -> Self {
        EnvelopeBasis {
            gammas: dims.iter().map(|&r| Matrix::identity(r, r)).collect(),
            completions: dims.iter().map(|&r| Matrix::zeros(r, 0)).collect(),
        }
    }

    pub fn gammas(&self) -> &[Matrix] {
        &self.gammas
    }

    pub fn completions(&self) -> &[Matrix] {
        &self.completions
    }

    pub fn order(&self) -> usize {
        self.gammas.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.gammas.iter().map(|g| g.ncols()).collect()
    }

    pub fn response_dims(&self) -> Vec<usize> {
        self.gammas.iter().map(|g| g.nrows()).collect()
    }

    /// `P_k = Gamma_k Gamma_k^T`.
    pub fn projection(&self, k: usize) -> Matrix {
        linalg::projection(&self.gammas[k])
    }

    /// `Q_k = Gamma_0k Gamma_0k^T`.
    pub fn complement_projection(&self, k: usize) -> Matrix {
        linalg::projection(&self.completions[k])
    }

    /// `Gamma_k A Gamma_k^T + Gamma_0k C Gamma_0k^T`.
    pub fn assemble(&self, k: usize, inner: &Matrix, outer: &Matrix) -> Matrix {
        let g = &self.gammas[k];
        let g0 = &self.completions[k];
        linalg::symmetrize(&(g * inner * g.transpose() + g0 * outer * g0.transpose()))
    }

    /// `P_k S P_k + Q_k S Q_k`: the part of `S` that `span(Gamma_k)` reduces.
    pub fn reduce(&self, k: usize, s: &Matrix) -> Matrix {
        let g = &self.gammas[k];
        let g0 = &self.completions[k];
        self.assemble(k, &(g.transpose() * s * g), &(g0.transpose() * s * g0))
    }
}

/// Envelope parameterization of a fit.
#[derive(Clone, Debug)]
pub struct EnvelopeModel {
    /// Core coefficients with dims `(u_1, ..., u_m, p)`; `None` when some `u_k = 0`.
    pub theta: Option<Tensor>,
    pub basis: EnvelopeBasis,
    pub omegas: Vec<Matrix>,
    pub omega0s: Vec<Matrix>,
}

impl EnvelopeModel {
    /// `[[Theta; Gamma_1, ..., Gamma_m, I_p]]`.
    pub fn coefficients(&self, p: usize) -> Result<Tensor> {
        let mut dims = self.basis.response_dims();
        dims.push(p);
        match &self.theta {
            None => Ok(Tensor::zeros(&dims)),
            Some(theta) => {
                let mut factors = self.basis.gammas().to_vec();
                factors.push(Matrix::identity(p, p));
                tucker(theta, &factors)
            }
        }
    }

    /// Per-mode `Gamma_k Omega_k Gamma_k^T + Gamma_0k Omega_0k Gamma_0k^T`.
    pub fn covariance_factors(&self) -> Vec<Matrix> {
        (0..self.basis.order())
            .map(|k| self.basis.assemble(k, &self.omegas[k], &self.omega0s[k]))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Coefficients with dims `(r_1, ..., r_m, p)`.
    pub b: Tensor,
    pub cov: SeparableCovariance,
    pub model: Option<EnvelopeModel>,
    /// Negative log-likelihood after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed: Duration,
}

pub(crate) fn check_envelope_dims(dims: &[usize], u: &[usize]) -> Result<()> {
    if u.len() != dims.len() {
        return Err(Error::invalid(format!(
            "{} envelope dimensions for {} response modes",
            u.len(),
            dims.len()
        )));
    }
    for (k, (&uk, &rk)) in u.iter().zip(dims).enumerate() {
        if uk > rk {
            return Err(Error::invalid(format!(
                "envelope dimension {uk} exceeds r = {rk} at mode {k}"
            )));
        }
    }
    Ok(())
}
