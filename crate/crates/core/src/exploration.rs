//! Exploration half-step: each component of `ρ_n^{1−Δt}` is replaced by the
//! Gaussian that matches its zeroth, first and second moments, estimated by
//! self-normalized Monte Carlo.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{sample_with_factor, Gaussian, GaussianMixture};
use crate::linalg::{cholesky_with_jitter, symmetrized};
use crate::rng::{self, Phase};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationParams {
    pub dt: f64,
    pub j_samples: usize,
    pub seed: u64,
    /// Center and whiten each component's draws so their sample mean is 0
    /// and sample covariance is `I`. Single-Gaussian exploration is then
    /// exact rather than exact in expectation.
    pub standardize: bool,
}

impl ExplorationParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, 1), got {}", self.dt)));
        }
        if self.j_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 exploration samples, got {}",
                self.j_samples
            )));
        }
        if self.standardize && self.j_samples <= dim {
            return Err(Error::InvalidArgument(format!(
                "standardized draws need more samples ({}) than dimensions ({dim})",
                self.j_samples
            )));
        }
        Ok(())
    }
}

/// Moment-matched Gaussian for one component together with its unnormalized
/// log-weight.
#[derive(Debug, Clone)]
pub struct ExploredComponent {
    pub log_w_hat: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Terms of `ln f_{n,k}` that do not depend on `θ`.
fn log_f_constant(mix: &GaussianMixture, k: usize, dt: f64) -> f64 {
    let n = mix.dim() as f64;
    let lw = mix.log_weights()[k];
    0.5 * dt * n * (2.0 * PI).ln() - 0.5 * n * (1.0 - dt).ln() + (1.0 - dt) * lw + 0.5 * dt * mix.component(k).log_det()
}

/// `ln f_{n,k}(θ)`, the log of the density ratio whose `𝒩_k^{1−Δt}`-weighted
/// moments define the explored component.
pub fn log_f_nk(mix: &GaussianMixture, k: usize, theta: &DVector<f64>, dt: f64) -> Result<f64> {
    if k >= mix.len() {
        return Err(Error::InvalidArgument(format!("component {k} out of range")));
    }
    if theta.len() != mix.dim() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: mix.dim(),
            got: theta.len(),
        });
    }
    let mut scratch = vec![0.0; mix.dim()];
    let mut terms = vec![0.0; mix.len()];
    let log_rho = mix.log_density_terms(theta.as_slice(), &mut scratch, &mut terms);
    Ok(log_f_constant(mix, k, dt) + dt * (terms[k] - log_rho))
}

/// Explores component `k` using the caller's `J × N` standard-normal draws.
pub fn explore_component(mix: &GaussianMixture, k: usize, dt: f64, draws: &DMatrix<f64>) -> Result<ExploredComponent> {
    if k >= mix.len() {
        return Err(Error::InvalidArgument(format!("component {k} out of range")));
    }
    if !(dt > 0.0 && dt < 1.0) {
        return Err(Error::InvalidArgument(format!("dt must lie in (0, 1), got {dt}")));
    }
    let j = draws.nrows();
    if j < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 exploration samples, got {j}")));
    }
    let n = mix.dim();
    let g = mix.component(k);
    let factor = g.factor() / (1.0 - dt).sqrt();
    let samples = sample_with_factor(g.mean(), &factor, draws)?;

    let constant = log_f_constant(mix, k, dt);
    let mut scratch = vec![0.0; n];
    let mut terms = vec![0.0; mix.len()];
    let log_f: Vec<f64> = samples
        .iter()
        .map(|s| {
            let log_rho = mix.log_density_terms(s.as_slice(), &mut scratch, &mut terms);
            constant + dt * (terms[k] - log_rho)
        })
        .collect();
    let max = log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::ExplorationDegeneracy { component: k });
    }
    let f: Vec<f64> = log_f.iter().map(|l| (l - max).exp()).collect();
    let sum_f: f64 = f.iter().sum();
    let log_w_hat = max + (sum_f / j as f64).ln();

    let mut mean = DVector::zeros(n);
    for (fj, s) in f.iter().zip(&samples) {
        mean.axpy(*fj, s, 1.0);
    }
    mean /= sum_f;

    // rows √fʲ (θʲ − m̂), so that DᵀD = Σ fʲ (θʲ − m̂)(θʲ − m̂)ᵀ
    let mut d = DMatrix::zeros(j, n);
    for (row, (fj, s)) in f.iter().zip(&samples).enumerate() {
        let w = fj.sqrt();
        for c in 0..n {
            d[(row, c)] = w * (s[c] - mean[c]);
        }
    }
    let denom = (j as f64 - 1.0) / j as f64 * sum_f;
    let cov = symmetrized(&(d.tr_mul(&d) / denom));
    if cholesky_with_jitter(&cov).is_none() {
        return Err(Error::ExplorationDegeneracy { component: k });
    }
    Ok(ExploredComponent { log_w_hat, mean, cov })
}

/// Replaces `draws` by `(Z − 1 z̄ᵀ) L⁻ᵀ` where `L Lᵀ` is the sample
/// covariance of the centered rows (divisor `J − 1`).
pub fn standardize_draws(draws: &mut DMatrix<f64>) -> Result<()> {
    let (j, n) = draws.shape();
    if j <= n {
        return Err(Error::InvalidArgument(format!(
            "standardized draws need more samples ({j}) than dimensions ({n})"
        )));
    }
    for c in 0..n {
        let mean = draws.column(c).sum() / j as f64;
        draws.column_mut(c).add_scalar_mut(-mean);
    }
    let cov = draws.tr_mul(draws) / (j as f64 - 1.0);
    let l = cholesky_with_jitter(&cov)
        .ok_or_else(|| Error::InvalidArgument("draw matrix is rank deficient".into()))?;
    // Z L⁻ᵀ: solve L Xᵀ = Zᵀ
    let mut zt = draws.transpose();
    l.solve_lower_triangular_mut(&mut zt);
    *draws = zt.transpose();
    Ok(())
}

/// The exploration draws used for component `k` at `iteration`.
pub fn exploration_draws(params: &ExplorationParams, iteration: usize, k: usize, dim: usize) -> Result<DMatrix<f64>> {
    let mut rng = rng::stream(params.seed, iteration, k, Phase::Exploration);
    let mut draws = rng::standard_normal_matrix(&mut rng, params.j_samples, dim);
    if params.standardize {
        standardize_draws(&mut draws)?;
    }
    Ok(draws)
}

/// Explores every component with its own random stream and normalizes the
/// resulting weights.
pub fn explore_mixture(mix: &GaussianMixture, params: &ExplorationParams, iteration: usize) -> Result<GaussianMixture> {
    params.validate(mix.dim())?;
    let explored: Vec<ExploredComponent> = (0..mix.len())
        .into_par_iter()
        .map(|k| {
            let draws = exploration_draws(params, iteration, k, mix.dim())?;
            explore_component(mix, k, params.dt, &draws)
        })
        .collect::<Result<_>>()?;
    let mut components = Vec::with_capacity(explored.len());
    let mut log_weights = Vec::with_capacity(explored.len());
    for (k, e) in explored.into_iter().enumerate() {
        let g = Gaussian::new(e.mean, e.cov).map_err(|_| Error::ExplorationDegeneracy { component: k })?;
        components.push(g);
        log_weights.push(e.log_w_hat);
    }
    GaussianMixture::new(components, log_weights)
}
