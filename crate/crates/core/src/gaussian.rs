//! Dense Gaussians and Gaussian mixtures with log-domain weights.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det_from_cholesky, solve_lower_in_place};
pub use crate::linalg::logsumexp;
use crate::rng::{self, Phase};

/// Smallest weight a mixture component may carry after normalization.
pub const WEIGHT_FLOOR: f64 = 1e-10;

/// `𝒩(mean, cov)` with a cached lower Cholesky factor.
///
/// Besides the Cholesky factor, which drives density evaluation, a Gaussian
/// carries a *sampling factor* `S` with `S Sᵀ = cov`. It defaults to the
/// Cholesky factor; [`Gaussian::from_factor`] lets callers supply any square
/// root, which is what makes the sampling and sigma-point steps exactly
/// equivariant under affine maps `θ ↦ Aθ + b` (use `A·S` as the new factor).
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidArgument("Gaussian of dimension 0".into()));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "covariance",
                expected: n,
                got: cov.nrows(),
            });
        }
        let chol = cholesky_with_jitter(&cov).ok_or(Error::NotPositiveDefinite { what: "covariance" })?;
        let log_det = log_det_from_cholesky(&chol);
        Ok(Self {
            mean,
            cov,
            factor: chol.clone(),
            chol,
            log_det,
        })
    }

    /// Builds `𝒩(mean, S Sᵀ)` and keeps `S` as the sampling factor.
    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() != mean.len() || factor.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance factor",
                expected: mean.len(),
                got: factor.nrows(),
            });
        }
        let cov = &factor * factor.transpose();
        let mut g = Self::new(mean, cov)?;
        g.factor = factor;
        Ok(g)
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = cov`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Square root used for sampling and sigma points.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn logpdf(&self, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.log_density(theta.as_slice(), &mut scratch))
    }

    /// Allocation-free log-density; `scratch` must have length `dim`.
    pub(crate) fn log_density(&self, theta: &[f64], scratch: &mut [f64]) -> f64 {
        let n = self.dim();
        for i in 0..n {
            scratch[i] = theta[i] - self.mean[i];
        }
        solve_lower_in_place(&self.chol, scratch);
        let quad: f64 = scratch.iter().map(|z| z * z).sum();
        -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * self.log_det - 0.5 * quad
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected,
            got,
        })
    }
}

/// `Σ_k w_k 𝒩(m_k, C_k)` with normalized, floored log-weights.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<Gaussian>,
    log_weights: Vec<f64>,
}

impl GaussianMixture {
    /// Normalizes `log_weights` (see [`normalize_log_weights`]) and checks
    /// that all components share one dimension.
    pub fn new(components: Vec<Gaussian>, log_weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if log_weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                what: "log-weights",
                expected: components.len(),
                got: log_weights.len(),
            });
        }
        let dim = components[0].dim();
        if let Some(bad) = components.iter().find(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch {
                what: "mixture component",
                expected: dim,
                got: bad.dim(),
            });
        }
        let log_weights = normalize_log_weights(&log_weights)?;
        Ok(Self {
            components,
            log_weights,
        })
    }

    pub fn equally_weighted(components: Vec<Gaussian>) -> Result<Self> {
        let k = components.len();
        Self::new(components, vec![0.0; k])
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            components: vec![g],
            log_weights: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Gaussian {
        &self.components[k]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn logpdf(&self, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        let mut scratch = vec![0.0; self.dim()];
        let mut terms = vec![0.0; self.len()];
        Ok(self.log_density_terms(theta.as_slice(), &mut scratch, &mut terms))
    }

    /// Writes `ln w_k + ln 𝒩(θ; m_k, C_k)` into `terms` and returns their
    /// log-sum-exp, i.e. `ln ρ(θ)`.
    pub(crate) fn log_density_terms(&self, theta: &[f64], scratch: &mut [f64], terms: &mut [f64]) -> f64 {
        for (k, g) in self.components.iter().enumerate() {
            terms[k] = self.log_weights[k] + g.log_density(theta, scratch);
        }
        logsumexp(terms)
    }

    /// Mixture mean `Σ w_k m_k`.
    pub fn mean(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (g, lw) in self.components.iter().zip(&self.log_weights) {
            out += g.mean() * lw.exp();
        }
        out
    }

    /// Mixture covariance `Σ w_k (C_k + m_k m_kᵀ) − m mᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (g, lw) in self.components.iter().zip(&self.log_weights) {
            let d = g.mean() - &m;
            out += (g.cov() + &d * d.transpose()) * lw.exp();
        }
        out
    }
}

/// `mean + factor · draws[j]` for every row `j` of `draws` (`J × N`).
pub fn sample_with_factor(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    draws: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    let n = mean.len();
    if factor.nrows() != n || factor.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "sampling factor",
            expected: n,
            got: factor.nrows(),
        });
    }
    if draws.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "draw matrix columns",
            expected: n,
            got: draws.ncols(),
        });
    }
    Ok((0..draws.nrows())
        .map(|j| mean + factor * draws.row(j).transpose())
        .collect())
}

/// Normalizes log-weights so they sum to one, floors each at `ln 1e-10`,
/// and renormalizes once by rescaling the unfloored entries.
///
/// Floored entries sit exactly at the floor; the remaining entries share the
/// mass `1 − (#floored)·1e-10`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() || log_weights.iter().any(|l| l.is_nan()) {
        return Err(Error::DegenerateWeights);
    }
    let total = logsumexp(log_weights);
    if !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let floor = WEIGHT_FLOOR.ln();
    let mut out: Vec<f64> = log_weights.iter().map(|l| l - total).collect();
    let floored: Vec<bool> = out.iter().map(|&l| l < floor).collect();
    let n_floored = floored.iter().filter(|&&f| f).count();
    if n_floored == 0 {
        return Ok(out);
    }
    let free: Vec<f64> = out
        .iter()
        .zip(&floored)
        .filter(|(_, &f)| !f)
        .map(|(&l, _)| l)
        .collect();
    let shift = (1.0 - n_floored as f64 * WEIGHT_FLOOR).ln() - logsumexp(&free);
    for (l, &f) in out.iter_mut().zip(&floored) {
        *l = if f { floor } else { *l + shift };
    }
    Ok(out)
}

/// Monte Carlo differential-entropy estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Stratified estimate of `−∫ ρ ln ρ`: component `k` receives
/// `round(n·w_k)` samples (at least two) and the per-stratum means are
/// recombined with the mixture weights.
pub fn mixture_entropy_mc(mix: &GaussianMixture, n_samples: usize, seed: u64) -> Result<EntropyEstimate> {
    if n_samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "entropy estimate needs at least 100 samples, got {n_samples}"
        )));
    }
    let dim = mix.dim();
    let mut scratch = vec![0.0; dim];
    let mut terms = vec![0.0; mix.len()];
    let mut estimate = 0.0;
    let mut variance = 0.0;
    for (k, g) in mix.components().iter().enumerate() {
        let w = mix.log_weights()[k].exp();
        let n_k = ((n_samples as f64 * w).round() as usize).max(2);
        let mut rng = rng::stream(seed, 0, k, Phase::Entropy);
        let draws = rng::standard_normal_matrix(&mut rng, n_k, dim);
        let samples = sample_with_factor(g.mean(), g.factor(), &draws)?;
        let values: Vec<f64> = samples
            .iter()
            .map(|s| mix.log_density_terms(s.as_slice(), &mut scratch, &mut terms))
            .collect();
        let mean = values.iter().sum::<f64>() / n_k as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_k as f64 - 1.0);
        estimate -= w * mean;
        variance += w * w * var / n_k as f64;
    }
    Ok(EntropyEstimate {
        estimate,
        std_error: variance.sqrt(),
    })
}
