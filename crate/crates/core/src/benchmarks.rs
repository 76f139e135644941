//! Standard test problems, constructible by name.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::driver::{init_mixture, GmkiConfig, InitPolicy};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::gmvi::LogPosteriorDerivatives;
use crate::inverse_problem::{AugmentedProblem, FnForward, InverseProblem, SpdMatrix};
use crate::oracles::ComponentState;
use crate::rng::{self, Phase};

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 8] = [
    "bimodal1d-a",
    "bimodal1d-b",
    "bimodal1d-c",
    "bimodal1d-d",
    "bimodal2d-a",
    "bimodal2d-b",
    "fourmodal2d",
    "circle",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initialization {
    /// Means from the prior, prior covariance, equal weights.
    Prior,
    /// Means from `𝒩(0, I)`, identity covariance, equal weights.
    StandardNormal,
}

#[derive(Clone)]
pub struct BenchmarkSpec {
    pub name: String,
    pub problem: InverseProblem,
    pub derivatives: Option<Arc<dyn LogPosteriorDerivatives>>,
    pub recommended_cfg: GmkiConfig,
    pub reference_bounds: Vec<(f64, f64)>,
    pub reference_resolution: Vec<usize>,
    pub initialization: Initialization,
}

impl std::fmt::Debug for BenchmarkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkSpec")
            .field("name", &self.name)
            .field("problem", &self.problem)
            .field("recommended_cfg", &self.recommended_cfg)
            .finish_non_exhaustive()
    }
}

impl BenchmarkSpec {
    pub fn augmented(&self) -> AugmentedProblem {
        self.problem.augment()
    }

    /// Initial mixture for `cfg` (component count and seed).
    pub fn initial_mixture(&self, cfg: &GmkiConfig) -> Result<GaussianMixture> {
        match self.initialization {
            Initialization::Prior => init_mixture(&self.problem, cfg),
            Initialization::StandardNormal => standard_normal_init(self.problem.n_theta(), cfg.k_components, cfg.seed),
        }
    }
}

/// `K` components with means from `𝒩(0, I)` and identity covariance.
pub fn standard_normal_init(dim: usize, k: usize, seed: u64) -> Result<GaussianMixture> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    let components = (0..k)
        .map(|i| {
            let mut rng = rng::stream(seed, 0, i, Phase::Init);
            let z = rng::standard_normal_matrix(&mut rng, dim, 1);
            Gaussian::new(z.column(0).into_owned(), DMatrix::identity(dim, dim))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::equally_weighted(components)
}

pub fn by_name(name: &str) -> Result<BenchmarkSpec> {
    match name {
        "bimodal1d-a" => Ok(bimodal_1d('a')),
        "bimodal1d-b" => Ok(bimodal_1d('b')),
        "bimodal1d-c" => Ok(bimodal_1d('c')),
        "bimodal1d-d" => Ok(bimodal_1d('d')),
        "bimodal2d-a" => Ok(bimodal_2d('a')),
        "bimodal2d-b" => Ok(bimodal_2d('b')),
        "fourmodal2d" => Ok(fourmodal_2d()),
        "circle" => Ok(circle_posterior(0.3)),
        other => Err(Error::InvalidArgument(format!(
            "unknown problem {other:?}; expected one of {}",
            NAMES.join(", ")
        ))),
    }
}

fn cfg(k: usize, policy: InitPolicy) -> GmkiConfig {
    GmkiConfig {
        k_components: k,
        init_policy: policy,
        ..GmkiConfig::default()
    }
}

/// `y = 1`, `𝒢(θ) = θ²`, prior `𝒩(3, 2²)`; the case selects the noise
/// standard deviation 0.2, 0.5, 1.0 or 1.5.
pub fn bimodal_1d(case: char) -> BenchmarkSpec {
    let sigma = match case.to_ascii_lowercase() {
        'a' => 0.2,
        'b' => 0.5,
        'c' => 1.0,
        'd' => 1.5,
        other => panic!("bimodal_1d case must be a-d, got {other}"),
    };
    let forward = FnForward::new(1, 1, |t: &DVector<f64>| DVector::from_element(1, t[0] * t[0]));
    let problem = InverseProblem::new(
        Arc::new(forward),
        DVector::from_element(1, 1.0),
        SpdMatrix::scaled_identity(1, sigma * sigma).expect("positive"),
        DVector::from_element(1, 3.0),
        SpdMatrix::scaled_identity(1, 4.0).expect("positive"),
    )
    .expect("consistent dimensions");
    BenchmarkSpec {
        name: format!("bimodal1d-{}", case.to_ascii_lowercase()),
        problem,
        derivatives: None,
        recommended_cfg: cfg(2, InitPolicy::PriorRandom),
        reference_bounds: vec![(-4.0, 6.0)],
        reference_resolution: vec![2048],
        initialization: Initialization::Prior,
    }
}

/// `y = 4.2297`, `𝒢(θ) = (θ₁ − θ₂)²`, unit noise; prior `𝒩(0, I)` (case A)
/// or `𝒩((0.5, 0), I)` (case B).
pub fn bimodal_2d(case: char) -> BenchmarkSpec {
    let r0 = match case.to_ascii_lowercase() {
        'a' => DVector::zeros(2),
        'b' => DVector::from_vec(vec![0.5, 0.0]),
        other => panic!("bimodal_2d case must be a or b, got {other}"),
    };
    let forward = FnForward::new(2, 1, |t: &DVector<f64>| DVector::from_element(1, (t[0] - t[1]).powi(2)));
    let problem = InverseProblem::new(
        Arc::new(forward),
        DVector::from_element(1, 4.2297),
        SpdMatrix::scaled_identity(1, 1.0).expect("positive"),
        r0,
        SpdMatrix::scaled_identity(2, 1.0).expect("positive"),
    )
    .expect("consistent dimensions");
    BenchmarkSpec {
        name: format!("bimodal2d-{}", case.to_ascii_lowercase()),
        problem,
        derivatives: None,
        recommended_cfg: cfg(3, InitPolicy::PriorRandom),
        reference_bounds: vec![(-4.0, 4.0); 2],
        reference_resolution: vec![512; 2],
        initialization: Initialization::Prior,
    }
}

/// `y = (4.2297, 4.2297)`, `𝒢(θ) = ((θ₁ − θ₂)², (θ₁ + θ₂)²)`, unit noise,
/// prior `𝒩((0.5, 0), I)`.
pub fn fourmodal_2d() -> BenchmarkSpec {
    let forward = FnForward::new(2, 2, |t: &DVector<f64>| {
        DVector::from_vec(vec![(t[0] - t[1]).powi(2), (t[0] + t[1]).powi(2)])
    });
    let problem = InverseProblem::new(
        Arc::new(forward),
        DVector::from_element(2, 4.2297),
        SpdMatrix::scaled_identity(2, 1.0).expect("positive"),
        DVector::from_vec(vec![0.5, 0.0]),
        SpdMatrix::scaled_identity(2, 1.0).expect("positive"),
    )
    .expect("consistent dimensions");
    BenchmarkSpec {
        name: "fourmodal2d".into(),
        problem,
        derivatives: None,
        recommended_cfg: cfg(6, InitPolicy::PriorRandom),
        reference_bounds: vec![(-4.0, 4.0); 2],
        reference_resolution: vec![512; 2],
        initialization: Initialization::Prior,
    }
}

/// Prior variance standing in for "no prior" on the circle target.
pub const VACUOUS_PRIOR_VARIANCE: f64 = 1e6;

/// `Φ_R(θ) = (1 − ‖θ‖²)² / (2σ²)`, mass spread along the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleTarget {
    pub sigma: f64,
}

impl LogPosteriorDerivatives for CircleTarget {
    fn dim(&self) -> usize {
        2
    }

    fn phi_r(&self, t: &DVector<f64>) -> f64 {
        (1.0 - t.norm_squared()).powi(2) / (2.0 * self.sigma * self.sigma)
    }

    fn grad_log_post(&self, t: &DVector<f64>) -> DVector<f64> {
        t * (2.0 * (1.0 - t.norm_squared()) / (self.sigma * self.sigma))
    }

    fn hess_log_post(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let s2 = self.sigma * self.sigma;
        (DMatrix::identity(2, 2) * (2.0 * (1.0 - t.norm_squared())) - t * t.transpose() * 4.0) / s2
    }
}

/// The circle target, as analytic derivatives for GMVI and as an inverse
/// problem (`𝒢(θ) = ‖θ‖²`, `y = 1`, `Σ_η = σ²`) with a vacuous
/// `𝒩(0, 10⁶ I)` prior for GMKI.
pub fn circle_posterior(sigma: f64) -> BenchmarkSpec {
    let forward = FnForward::new(2, 1, |t: &DVector<f64>| DVector::from_element(1, t.norm_squared()));
    let problem = InverseProblem::new(
        Arc::new(forward),
        DVector::from_element(1, 1.0),
        SpdMatrix::scaled_identity(1, sigma * sigma).expect("positive"),
        DVector::zeros(2),
        SpdMatrix::scaled_identity(2, VACUOUS_PRIOR_VARIANCE).expect("positive"),
    )
    .expect("consistent dimensions");
    BenchmarkSpec {
        name: "circle".into(),
        problem,
        derivatives: Some(Arc::new(CircleTarget { sigma })),
        recommended_cfg: cfg(10, InitPolicy::Explicit),
        reference_bounds: vec![(-2.0, 2.0); 2],
        reference_resolution: vec![512; 2],
        initialization: Initialization::StandardNormal,
    }
}

/// A 1-D target made of well-separated Gaussian modes, written as a
/// residual map so that each mode's neighbourhood is an exactly linear
/// least-squares problem.
///
/// `ρ(θ) ∝ Σ_k w_k 𝒩(θ; μ_k, 1)`. Near its nearest mode `μ`, the residual is
/// `(θ − μ, √(2(Φ(θ) − Φ_min) − (θ − μ)²))`, whose half squared norm equals
/// `Φ(θ) − Φ_min`; the second entry is constant up to the negligible overlap
/// of the modes.
pub struct SeparatedModes {
    pub modes: Vec<ComponentState>,
}

impl SeparatedModes {
    pub fn new(means: &[f64], weights: &[f64]) -> Result<Self> {
        if means.len() != weights.len() || means.is_empty() {
            return Err(Error::InvalidArgument("means and weights must pair up".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            modes: means
                .iter()
                .zip(weights)
                .map(|(&m, &w)| ComponentState {
                    mean: DVector::from_element(1, m),
                    cov: DMatrix::from_element(1, 1, 1.0),
                    weight: w / total,
                })
                .collect(),
        })
    }

    /// `Φ(θ) = −ln Σ_k w_k 𝒩(θ; μ_k, 1)`.
    pub fn phi(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .modes
            .iter()
            .map(|m| m.weight.ln() - 0.5 * (t - m.mean[0]).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln())
            .collect();
        -crate::gaussian::logsumexp(&terms)
    }

    pub fn problem(self: &Arc<Self>) -> AugmentedProblem {
        let me = Arc::clone(self);
        let phi_min = self
            .modes
            .iter()
            .map(|m| -m.weight.ln())
            .fold(f64::INFINITY, f64::min)
            + 0.5 * (2.0 * std::f64::consts::PI).ln();
        let forward = FnForward::new(1, 2, move |t: &DVector<f64>| {
            let nearest = me
                .modes
                .iter()
                .map(|m| m.mean[0])
                .min_by(|a, b| (t[0] - a).abs().total_cmp(&(t[0] - b).abs()))
                .expect("at least one mode");
            let u = t[0] - nearest;
            let rest = (2.0 * (me.phi(t[0]) - phi_min) - u * u).max(0.0).sqrt();
            DVector::from_vec(vec![u, rest])
        });
        AugmentedProblem::direct(Arc::new(forward), DVector::zeros(2), SpdMatrix::scaled_identity(2, 1.0).expect("positive"))
            .expect("consistent dimensions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn registry_builds_every_name() {
        for name in NAMES {
            let spec = by_name(name).unwrap();
            assert_eq!(spec.name, name);
            let n = spec.problem.n_theta();
            let k = spec.recommended_cfg.k_components;
            assert_eq!(spec.recommended_cfg.n_iterations, 30);
            assert!((2 * n + 1) * k > 0);
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn bimodal_1d_examples() {
        let a = bimodal_1d('a');
        assert_eq!(a.problem.forward().evaluate(&v(&[-1.0])).unwrap()[0], 1.0);
        assert!((a.problem.phi_r(&v(&[1.0])).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(bimodal_1d('d').problem.sigma_eta().matrix()[(0, 0)], 2.25);
    }

    #[test]
    fn bimodal_2d_examples() {
        let a = bimodal_2d('a');
        assert_eq!(a.problem.forward().evaluate(&v(&[3.0, 1.0])).unwrap()[0], 4.0);
        assert_eq!(bimodal_2d('b').problem.r0().as_slice(), &[0.5, 0.0]);
        assert_eq!(bimodal_2d('a').recommended_cfg.k_components * 5, 15);
    }

    #[test]
    fn fourmodal_forward() {
        let f = fourmodal_2d().problem.forward().evaluate(&v(&[2.0, 0.0])).unwrap();
        assert_eq!(f.as_slice(), &[4.0, 4.0]);
    }

    #[test]
    fn circle_examples() {
        let c = CircleTarget { sigma: 0.3 };
        let on = v(&[1.0, 0.0]);
        assert_eq!(c.phi_r(&on), 0.0);
        assert_eq!(c.grad_log_post(&on).norm(), 0.0);
        let h = -c.hess_log_post(&on);
        let expected = DMatrix::from_row_slice(2, 2, &[4.0 / 0.09, 0.0, 0.0, 0.0]);
        assert!((h - expected).amax() < 1e-12);
    }

    #[test]
    fn circle_representations_agree_up_to_prior_term() {
        let spec = circle_posterior(0.3);
        let c = CircleTarget { sigma: 0.3 };
        for t in [[0.3, -0.2], [1.1, 0.4], [-2.0, 1.5]] {
            let t = v(&t);
            let diff = spec.problem.phi_r(&t).unwrap() - c.phi_r(&t);
            let bound = t.norm_squared() / (2.0 * VACUOUS_PRIOR_VARIANCE);
            assert!(diff >= -1e-12 && diff <= bound + 1e-12);
        }
    }

    #[test]
    fn separated_residual_reproduces_misfit() {
        let target = Arc::new(SeparatedModes::new(&[-8.0, 8.0], &[0.3, 0.7]).unwrap());
        let p = target.problem();
        let phi_min = -0.7f64.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
        for t in [-9.0, -8.0, -6.5, 6.0, 8.0, 10.0] {
            let lhs = p.phi_r(&v(&[t])).unwrap();
            assert!((lhs - (target.phi(t) - phi_min)).abs() < 1e-9);
        }
    }
}
