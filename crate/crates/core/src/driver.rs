//! The GMKI outer loop: initialization, exploration then exploitation at
//! every iteration, and per-iteration diagnostics.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::exploitation::{evaluate_batch, exploit_mixture};
use crate::exploration::{explore_mixture, ExplorationParams};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::inverse_problem::{AugmentedProblem, InverseProblem};
use crate::rng::{self, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Means drawn from the prior, covariances equal to the prior
    /// covariance, equal weights.
    PriorRandom,
    /// The caller supplies the initial mixture.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmkiConfig {
    pub k_components: usize,
    pub dt: f64,
    pub n_iterations: usize,
    pub j_samples: usize,
    pub seed: u64,
    pub init_policy: InitPolicy,
    #[serde(default = "default_true")]
    pub standardize_draws: bool,
}

fn default_true() -> bool {
    true
}

impl Default for GmkiConfig {
    fn default() -> Self {
        Self {
            k_components: 1,
            dt: 0.5,
            n_iterations: 30,
            j_samples: 1000,
            seed: 0,
            init_policy: InitPolicy::PriorRandom,
            standardize_draws: true,
        }
    }
}

impl GmkiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_components == 0 || self.n_iterations == 0 || self.j_samples == 0 {
            return Err(Error::InvalidArgument(
                "k_components, n_iterations and j_samples must be at least 1".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, 1), got {}", self.dt)));
        }
        Ok(())
    }

    pub fn exploration(&self) -> ExplorationParams {
        ExplorationParams {
            dt: self.dt,
            j_samples: self.j_samples,
            seed: self.seed,
            standardize: self.standardize_draws,
        }
    }
}

/// Diagnostics for the mixture at the end of one iteration (iteration 0 is
/// the initial mixture).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `N × N` covariance per component.
    pub covariances: Vec<Vec<f64>>,
    pub cov_frobenius: Vec<f64>,
    /// `Φ_R(m_k)` per component.
    pub misfits: Vec<f64>,
    /// Forward evaluations made by the algorithm during this iteration.
    pub forward_evals: usize,
    /// Extra evaluations spent on `misfits`.
    pub diagnostic_evals: usize,
    #[serde(default)]
    pub wall_time_s: f64,
}

impl IterationRecord {
    pub fn mixture(&self) -> Result<GaussianMixture> {
        let components = self
            .means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| {
                let n = m.len();
                if c.len() != n * n {
                    return Err(Error::DimensionMismatch {
                        what: "recorded covariance",
                        expected: n * n,
                        got: c.len(),
                    });
                }
                Gaussian::new(DVector::from_column_slice(m), DMatrix::from_row_slice(n, n, c))
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components, self.log_weights.clone())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }
}

/// Builds a record for `mix`, evaluating `Φ_R` at every component mean.
pub fn make_record(
    mix: &GaussianMixture,
    problem: &AugmentedProblem,
    iteration: usize,
    forward_evals: usize,
    wall_time_s: f64,
) -> Result<IterationRecord> {
    let means: Vec<&DVector<f64>> = mix.components().iter().map(|g| g.mean()).collect();
    let values = evaluate_batch(problem, &means)?;
    let misfits = values.iter().map(|f| problem.phi_r_from_output(f)).collect();
    Ok(record_for(mix, iteration, misfits, forward_evals, wall_time_s))
}

/// Builds a record from misfits computed by the caller.
pub fn record_for(
    mix: &GaussianMixture,
    iteration: usize,
    misfits: Vec<f64>,
    forward_evals: usize,
    wall_time_s: f64,
) -> IterationRecord {
    let n = mix.dim();
    IterationRecord {
        iteration,
        log_weights: mix.log_weights().to_vec(),
        means: mix.components().iter().map(|g| g.mean().as_slice().to_vec()).collect(),
        covariances: mix
            .components()
            .iter()
            .map(|g| (0..n * n).map(|i| g.cov()[(i / n, i % n)]).collect())
            .collect(),
        cov_frobenius: mix.components().iter().map(|g| g.cov().norm()).collect(),
        diagnostic_evals: misfits.len(),
        misfits,
        forward_evals,
        wall_time_s,
    }
}

/// Prior-random initialization.
pub fn init_mixture(problem: &InverseProblem, cfg: &GmkiConfig) -> Result<GaussianMixture> {
    cfg.validate()?;
    let n = problem.n_theta();
    let l0 = problem.sigma_0().cholesky();
    let components = (0..cfg.k_components)
        .map(|k| {
            let mut rng = rng::stream(cfg.seed, 0, k, Phase::Init);
            let z = rng::standard_normal_matrix(&mut rng, n, 1);
            let mean = problem.r0() + l0 * z.column(0);
            Gaussian::new(mean, problem.sigma_0().matrix().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::equally_weighted(components)
}

/// One GMKI iteration. Returns the new mixture and the number of forward
/// evaluations it used.
pub fn step(
    mix: &GaussianMixture,
    problem: &AugmentedProblem,
    cfg: &GmkiConfig,
    iteration: usize,
) -> Result<(GaussianMixture, usize)> {
    let tag = |e: Error| e.at_iteration(iteration);
    let hatted = explore_mixture(mix, &cfg.exploration(), iteration).map_err(tag)?;
    let out = exploit_mixture(&hatted, problem, cfg.dt).map_err(tag)?;
    Ok((out.mixture, out.forward_evals))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub final_mixture: GaussianMixture,
}

/// A run that stopped early, with the last mixture that passed its checks.
#[derive(Debug, Clone, ThisError)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub last_good: GaussianMixture,
    pub records: Vec<IterationRecord>,
}

/// Runs `cfg.n_iterations` GMKI iterations from `initial`, handing each
/// record to `sink` as soon as it exists.
pub fn run_from(
    problem: &AugmentedProblem,
    initial: GaussianMixture,
    cfg: &GmkiConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> std::result::Result<RunOutput, RunFailure> {
    let mut records = Vec::with_capacity(cfg.n_iterations + 1);
    let fail = |error: Error, last_good: &GaussianMixture, records: &Vec<IterationRecord>| RunFailure {
        error,
        last_good: last_good.clone(),
        records: records.clone(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &initial, &records));
    }
    if initial.dim() != problem.n_theta() {
        let e = Error::DimensionMismatch {
            what: "initial mixture",
            expected: problem.n_theta(),
            got: initial.dim(),
        };
        return Err(fail(e, &initial, &records));
    }
    match make_record(&initial, problem, 0, 0, 0.0) {
        Ok(r) => {
            sink(&r);
            records.push(r);
        }
        Err(e) => return Err(fail(e.at_iteration(0), &initial, &records)),
    }
    let mut mix = initial;
    for n in 1..=cfg.n_iterations {
        let start = Instant::now();
        let (next, evals) = match step(&mix, problem, cfg, n) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &mix, &records)),
        };
        let elapsed = start.elapsed().as_secs_f64();
        let record = match make_record(&next, problem, n, evals, elapsed) {
            Ok(r) => r,
            Err(e) => return Err(fail(e.at_iteration(n), &mix, &records)),
        };
        sink(&record);
        records.push(record);
        mix = next;
    }
    Ok(RunOutput {
        records,
        final_mixture: mix,
    })
}

/// Prior-random initialization followed by [`run_from`].
pub fn run(problem: &InverseProblem, cfg: &GmkiConfig) -> std::result::Result<RunOutput, RunFailure> {
    let initial = init_mixture(problem, cfg).map_err(|error| RunFailure {
        error,
        last_good: GaussianMixture::single(Gaussian::new(problem.r0().clone(), problem.sigma_0().matrix().clone()).expect("prior is SPD")),
        records: Vec::new(),
    })?;
    run_from(&problem.augment(), initial, cfg, &mut |_| {})
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::inverse_problem::{FnForward, SpdMatrix};
    use crate::oracles::interpolant_iterate;

    fn linear_1d() -> InverseProblem {
        InverseProblem::new(
            Arc::new(FnForward::new(1, 1, |t: &DVector<f64>| t.clone())),
            DVector::from_element(1, 1.0),
            SpdMatrix::scaled_identity(1, 1.0).unwrap(),
            DVector::zeros(1),
            SpdMatrix::scaled_identity(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn init_examples() {
        let p = linear_1d();
        let cfg = GmkiConfig {
            k_components: 3,
            seed: 5,
            ..GmkiConfig::default()
        };
        let a = init_mixture(&p, &cfg).unwrap();
        let b = init_mixture(&p, &cfg).unwrap();
        assert_eq!(a.len(), 3);
        for k in 0..3 {
            assert_eq!(a.component(k).mean(), b.component(k).mean());
            assert_eq!(a.component(k).cov(), p.sigma_0().matrix());
            assert!((a.log_weights()[k] + 3f64.ln()).abs() < 1e-15);
        }
        let single = init_mixture(&p, &GmkiConfig::default()).unwrap();
        assert_eq!(single.log_weights(), &[0.0]);
    }

    #[test]
    fn one_step_linear_gaussian_is_exact() {
        let p = linear_1d();
        let (next, evals) = step(
            &GaussianMixture::single(g1(0.0, 1.0)),
            &p.augment(),
            &GmkiConfig::default(),
            1,
        )
        .unwrap();
        let g = next.component(0);
        assert!((g.mean()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.cov()[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(evals, 3);
    }

    #[test]
    fn small_step_moves_mean_towards_posterior() {
        let p = linear_1d();
        let cfg = GmkiConfig {
            dt: 0.01,
            ..GmkiConfig::default()
        };
        let (next, _) = step(&GaussianMixture::single(g1(0.0, 1.0)), &p.augment(), &cfg, 1).unwrap();
        let m = next.component(0).mean()[0];
        assert!(m > 0.0 && m < 0.5);
    }

    #[test]
    fn duplicate_components_stay_identical() {
        let p = linear_1d();
        let mix = GaussianMixture::equally_weighted(vec![g1(0.2, 1.5), g1(0.2, 1.5)]).unwrap();
        let cfg = GmkiConfig {
            k_components: 2,
            ..GmkiConfig::default()
        };
        let (next, _) = step(&mix, &p.augment(), &cfg, 1).unwrap();
        // the density ratio is constant for duplicates, so standardized draws
        // give both components the same moments despite distinct streams
        assert!((next.log_weights()[0] - next.log_weights()[1]).abs() < 1e-12);
        let d = (next.component(0).mean() - next.component(1).mean()).norm();
        assert!(d < 1e-12);
    }

    #[test]
    fn run_tracks_interpolant() {
        let p = linear_1d();
        let cfg = GmkiConfig::default();
        let prior = g1(0.0, 1.0);
        let out = run_from(&p.augment(), GaussianMixture::single(prior.clone()), &cfg, &mut |_| {}).unwrap();
        assert_eq!(out.records.len(), 31);
        let post = g1(0.5, 0.5);
        for r in &out.records {
            let exact = interpolant_iterate(&prior, &post, cfg.dt, r.iteration).unwrap();
            assert!((r.means[0][0] - exact.mean()[0]).abs() < 1e-8);
            assert!((r.covariances[0][0] - exact.cov()[(0, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn failure_keeps_last_good_state() {
        let p = linear_1d();
        let cfg = GmkiConfig {
            j_samples: 1,
            standardize_draws: false,
            ..GmkiConfig::default()
        };
        let err = run(&p, &cfg).unwrap_err();
        assert_eq!(err.records.len(), 1);
        assert_eq!(err.last_good.len(), 1);
        assert!(matches!(err.error.root(), Error::InvalidArgument(_)));
    }

    #[test]
    fn records_roundtrip_to_mixture() {
        let p = linear_1d();
        let out = run(&p, &GmkiConfig::default()).unwrap();
        let last = out.records.last().unwrap().mixture().unwrap();
        assert_eq!(last.component(0).mean(), out.final_mixture.component(0).mean());
        assert_eq!(last.component(0).cov(), out.final_mixture.component(0).cov());
    }
}
