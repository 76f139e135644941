//! Gaussian-mixture variational inference: explicit-Euler steps of the
//! natural gradient flow with a block-diagonal Fisher information, using
//! analytic derivatives of the target and sigma-point quadrature.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{record_for, IterationRecord, RunFailure, RunOutput};
use crate::error::{Error, Result};
use crate::exploitation::sigma_points;
use crate::gaussian::{logsumexp, Gaussian, GaussianMixture};
use crate::linalg::{cholesky_inverse, symmetrized};

/// Target `ρ_post ∝ exp(−Φ_R)` with analytic derivatives.
pub trait LogPosteriorDerivatives: Send + Sync {
    fn dim(&self) -> usize;
    fn phi_r(&self, theta: &DVector<f64>) -> f64;
    /// `∇ ln ρ_post = −∇Φ_R`.
    fn grad_log_post(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// `∇∇ ln ρ_post = −∇∇Φ_R`.
    fn hess_log_post(&self, theta: &DVector<f64>) -> DMatrix<f64>;
}

/// Gradient and Hessian of `ln ρ^GM` at `θ`.
pub fn mixture_score(mix: &GaussianMixture, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let precisions: Vec<DMatrix<f64>> = mix.components().iter().map(|g| cholesky_inverse(g.cholesky())).collect();
    mixture_score_with(mix, &precisions, theta)
}

fn mixture_score_with(
    mix: &GaussianMixture,
    precisions: &[DMatrix<f64>],
    theta: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mix.dim();
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: n,
            got: theta.len(),
        });
    }
    let mut scratch = vec![0.0; n];
    let mut terms = vec![0.0; mix.len()];
    let log_rho = mix.log_density_terms(theta.as_slice(), &mut scratch, &mut terms);
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for (k, g) in mix.components().iter().enumerate() {
        let r = (terms[k] - log_rho).exp();
        if r == 0.0 {
            continue;
        }
        let gk = &precisions[k] * (g.mean() - theta);
        hess += (&gk * gk.transpose() - &precisions[k]) * r;
        grad.axpy(r, &gk, 1.0);
    }
    hess -= &grad * grad.transpose();
    Ok((grad, symmetrized(&hess)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmviConfig {
    pub k_components: usize,
    pub dt_vi: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for GmviConfig {
    fn default() -> Self {
        Self {
            k_components: 10,
            dt_vi: 0.01,
            n_steps: 1000,
            seed: 0,
        }
    }
}

struct ComponentExpectations {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    h: f64,
}

/// One explicit-Euler step. Means, precisions and weights are all updated
/// from the pre-step mixture.
pub fn gmvi_step(mix: &GaussianMixture, derivs: &dyn LogPosteriorDerivatives, dt_vi: f64) -> Result<GaussianMixture> {
    if !(dt_vi > 0.0) {
        return Err(Error::InvalidArgument(format!("dt_vi must be positive, got {dt_vi}")));
    }
    let n = mix.dim();
    if derivs.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "target dimension",
            expected: n,
            got: derivs.dim(),
        });
    }
    let precisions: Vec<DMatrix<f64>> = mix.components().iter().map(|g| cholesky_inverse(g.cholesky())).collect();
    let expectations: Vec<ComponentExpectations> = mix
        .components()
        .par_iter()
        .map(|g| {
            let sp = sigma_points(g.mean(), g.cholesky());
            let qw = sp.quadrature_weights();
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            let mut h = 0.0;
            for (p, w) in sp.points.iter().zip(&qw) {
                if *w == 0.0 {
                    continue;
                }
                let (g_gm, h_gm) = mixture_score_with(mix, &precisions, p)?;
                grad.axpy(*w, &(g_gm - derivs.grad_log_post(p)), 1.0);
                hess += (h_gm - derivs.hess_log_post(p)) * *w;
                h += w * (mix.logpdf(p)? + derivs.phi_r(p));
            }
            Ok(ComponentExpectations { grad, hess, h })
        })
        .collect::<Result<_>>()?;

    let weights = mix.weights();
    let h_bar: f64 = weights.iter().zip(&expectations).map(|(w, e)| w * e.h).sum();
    let mut components = Vec::with_capacity(mix.len());
    let mut log_weights = Vec::with_capacity(mix.len());
    for (k, (g, e)) in mix.components().iter().zip(&expectations).enumerate() {
        let c = g.cov();
        let mean = g.mean() - c * &e.grad * dt_vi;
        // Euler in the precision: same flow as `Ċ = −C E[·] C`, but stays
        // definite when the target curvature is large relative to 1/dt.
        let precision = symmetrized(&(&precisions[k] + &e.hess * dt_vi));
        if precision.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepSize { component: k });
        }
        let chol = precision.cholesky().ok_or(Error::StepSize { component: k })?;
        let cov = symmetrized(&chol.inverse());
        components.push(Gaussian::new(mean, cov).map_err(|_| Error::StepSize { component: k })?);
        log_weights.push(mix.log_weights()[k] - dt_vi * (e.h - h_bar));
    }
    if !logsumexp(&log_weights).is_finite() {
        return Err(Error::DegenerateWeights);
    }
    GaussianMixture::new(components, log_weights)
}

/// `cfg.n_steps` GMVI steps from `initial`. Each step costs `(2N+1)·K`
/// derivative evaluations, reported as `forward_evals`.
pub fn run_gmvi(
    derivs: &dyn LogPosteriorDerivatives,
    initial: GaussianMixture,
    cfg: &GmviConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> std::result::Result<RunOutput, RunFailure> {
    let misfits = |mix: &GaussianMixture| mix.components().iter().map(|g| derivs.phi_r(g.mean())).collect();
    let mut records = Vec::with_capacity(cfg.n_steps + 1);
    let first = record_for(&initial, 0, misfits(&initial), 0, 0.0);
    sink(&first);
    records.push(first);
    let evals = (2 * initial.dim() + 1) * initial.len();
    let mut mix = initial;
    for n in 1..=cfg.n_steps {
        let start = Instant::now();
        let next = match gmvi_step(&mix, derivs, cfg.dt_vi) {
            Ok(m) => m,
            Err(e) => {
                return Err(RunFailure {
                    error: e.at_iteration(n),
                    last_good: mix,
                    records,
                })
            }
        };
        let record = record_for(&next, n, misfits(&next), evals, start.elapsed().as_secs_f64());
        sink(&record);
        records.push(record);
        mix = next;
    }
    Ok(RunOutput {
        records,
        final_mixture: mix,
    })
}
