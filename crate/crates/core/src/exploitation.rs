//! Exploitation half-step: sigma-point statistics of the augmented forward
//! map, a Kalman update per component and the single-point weight rule.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::inverse_problem::{AugmentedProblem, SpdMatrix};
use crate::linalg::{cholesky_with_jitter, symmetrized};

/// `2N+1` points: the mean, then `m + s·L_j` for `j = 1..N`, then
/// `m − s·L_j`, with `s = 1/√(2a)` and `a = max(1/8, 1/(2N))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub a_weight: f64,
}

pub fn sigma_weight(n: usize) -> f64 {
    f64::max(0.125, 0.5 / n as f64)
}

pub fn sigma_points(mean: &DVector<f64>, factor: &DMatrix<f64>) -> SigmaPointSet {
    let n = mean.len();
    let a = sigma_weight(n);
    let scale = 1.0 / (2.0 * a).sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for j in 0..n {
        points.push(mean + factor.column(j) * scale);
    }
    for j in 0..n {
        points.push(mean - factor.column(j) * scale);
    }
    SigmaPointSet { points, a_weight: a }
}

impl SigmaPointSet {
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Degree-three quadrature weights for Gaussian expectations: `a` on
    /// each outer point and `1 − 2Na` on the center.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.dim();
        let mut w = vec![self.a_weight; 2 * n + 1];
        w[0] = 1.0 - 2.0 * n as f64 * self.a_weight;
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnscentedMoments {
    pub x_hat: DVector<f64>,
    pub c_theta_x: DMatrix<f64>,
    pub c_xx: DMatrix<f64>,
}

/// `x̂ = ℱ(θ⁰)`, `C^{θx} = Σ_{j≥1} a(θʲ−θ⁰)(ℱʲ−x̂)ᵀ`,
/// `C^{xx} = Σ_{j≥1} a(ℱʲ−x̂)(ℱʲ−x̂)ᵀ + Σ_ν/Δt`.
pub fn unscented_moments(
    sp: &SigmaPointSet,
    f_values: &[DVector<f64>],
    sigma_nu: &SpdMatrix,
    dt: f64,
) -> Result<UnscentedMoments> {
    if f_values.len() != sp.points.len() {
        return Err(Error::DimensionMismatch {
            what: "forward values",
            expected: sp.points.len(),
            got: f_values.len(),
        });
    }
    let nx = f_values[0].len();
    if sigma_nu.dim() != nx {
        return Err(Error::DimensionMismatch {
            what: "augmented covariance",
            expected: nx,
            got: sigma_nu.dim(),
        });
    }
    let n = sp.dim();
    let m = &sp.points[0];
    let x_hat = f_values[0].clone();
    let mut dth = DMatrix::zeros(n, 2 * n);
    let mut dx = DMatrix::zeros(nx, 2 * n);
    for j in 1..sp.points.len() {
        dth.set_column(j - 1, &(&sp.points[j] - m));
        dx.set_column(j - 1, &(&f_values[j] - &x_hat));
    }
    let a = sp.a_weight;
    let c_theta_x = &dth * dx.transpose() * a;
    let c_xx = symmetrized(&(&dx * dx.transpose() * a + sigma_nu.matrix() / dt));
    Ok(UnscentedMoments { x_hat, c_theta_x, c_xx })
}

/// Gaussian conditioning of `(θ, x)` on the observed augmented data.
///
/// Fails with [`Error::NotPositiveDefinite`] if either `C^{xx}` or the
/// updated covariance cannot be factorized.
pub fn kalman_update(
    m_hat: &DVector<f64>,
    c_hat: &DMatrix<f64>,
    moments: &UnscentedMoments,
    x: &DVector<f64>,
) -> Result<Gaussian> {
    let l = cholesky_with_jitter(&moments.c_xx).ok_or(Error::NotPositiveDefinite {
        what: "innovation covariance",
    })?;
    // V = L⁻¹ C^{xθ}, z = L⁻¹(x − x̂)
    let mut v = moments.c_theta_x.transpose();
    l.solve_lower_triangular_mut(&mut v);
    let mut z = x - &moments.x_hat;
    l.solve_lower_triangular_mut(&mut z);
    let m_new = m_hat + v.tr_mul(&z);
    let c_new = symmetrized(&(c_hat - v.tr_mul(&v)));
    Gaussian::new(m_new, c_new).map_err(|_| Error::NotPositiveDefinite {
        what: "updated covariance",
    })
}

pub fn weight_update(log_w_hat: f64, phi_r_at_mean: f64, dt: f64) -> f64 {
    log_w_hat - dt * phi_r_at_mean
}

/// Evaluates `ℱ` at every point, concurrently when the model allows it.
/// Results come back in input order.
pub fn evaluate_batch(problem: &AugmentedProblem, points: &[&DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if problem.forward().parallel_safe() {
        points.par_iter().map(|p| problem.evaluate(p)).collect()
    } else {
        points.iter().map(|p| problem.evaluate(p)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExploitOutput {
    pub mixture: GaussianMixture,
    pub forward_evals: usize,
}

/// Kalman-updates every component of the explored mixture and reweights it
/// by `exp(−Δt Φ_R(θ⁰_k))`.
pub fn exploit_mixture(hatted: &GaussianMixture, problem: &AugmentedProblem, dt: f64) -> Result<ExploitOutput> {
    if hatted.dim() != problem.n_theta() {
        return Err(Error::DimensionMismatch {
            what: "mixture dimension",
            expected: problem.n_theta(),
            got: hatted.dim(),
        });
    }
    let sets: Vec<SigmaPointSet> = hatted
        .components()
        .iter()
        .map(|g| sigma_points(g.mean(), g.cholesky()))
        .collect();
    let all: Vec<&DVector<f64>> = sets.iter().flat_map(|s| s.points.iter()).collect();
    let values = evaluate_batch(problem, &all)?;
    let per = 2 * hatted.dim() + 1;

    let updates: Vec<(Gaussian, f64)> = sets
        .par_iter()
        .enumerate()
        .map(|(k, sp)| {
            let f = &values[k * per..(k + 1) * per];
            let moments = unscented_moments(sp, f, problem.sigma_nu(), dt)?;
            let g = hatted.component(k);
            let updated = kalman_update(g.mean(), g.cov(), &moments, problem.x())
                .map_err(|_| Error::ExploitationDegeneracy { component: k })?;
            let phi = problem.phi_r_from_output(&f[0]);
            Ok((updated, weight_update(hatted.log_weights()[k], phi, dt)))
        })
        .collect::<Result<_>>()?;
    let (components, log_weights): (Vec<_>, Vec<_>) = updates.into_iter().unzip();
    Ok(ExploitOutput {
        mixture: GaussianMixture::new(components, log_weights)?,
        forward_evals: all.len(),
    })
}
