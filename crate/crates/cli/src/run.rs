//! `gmki run`: one GMKI or GMVI run with all of its artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gmki_core::benchmarks::{self, BenchmarkSpec};
use gmki_core::driver::{init_mixture, run_from};
use gmki_core::gmvi::{run_gmvi, LogPosteriorDerivatives};
use gmki_core::oracles::{mixture_to_grid, Axis};
use gmki_core::{GaussianMixture, GmkiConfig, InverseProblem, IterationRecord, RunFailure, RunOutput};
use gmki_navier_stokes::{ns_problem, synthetic_truth, Field, NsForward, NsSetup, SyntheticTruth};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, AxisFile, MixtureFile};
use crate::config::{self, AlgorithmConfig, Method, Resolved, RunConfigFile, NAVIER_STOKES};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub method: Method,
    pub problem: String,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Navier-Stokes details needed to regenerate the data and the forward map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsManifest {
    pub setup: NsSetup,
    pub truth_seed: u64,
    pub noise_std: f64,
    pub observation_locations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub problem: String,
    pub version: String,
    pub seed: u64,
    /// Flat config that reproduces this run with `--config`.
    pub config: RunConfigFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gmki: Option<GmkiConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gmvi: Option<gmki_core::gmvi::GmviConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub navier_stokes: Option<NsManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_axes: Option<Vec<AxisFile>>,
    pub iterations_completed: usize,
    pub forward_evals: usize,
    pub diagnostic_evals: usize,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// GMKI settings for the Navier-Stokes inversion when no config is given.
pub fn ns_recommended() -> GmkiConfig {
    GmkiConfig {
        k_components: 3,
        n_iterations: 50,
        ..GmkiConfig::default()
    }
}

enum Target {
    Benchmark(BenchmarkSpec),
    Ns {
        forward: Arc<NsForward>,
        truth: SyntheticTruth,
        problem: InverseProblem,
        manifest: NsManifest,
    },
}

impl Target {
    fn problem(&self) -> &InverseProblem {
        match self {
            Target::Benchmark(b) => &b.problem,
            Target::Ns { problem, .. } => problem,
        }
    }

    fn initial_mixture(&self, k: usize, seed: u64) -> Result<GaussianMixture, CliError> {
        let cfg = GmkiConfig {
            k_components: k,
            seed,
            ..GmkiConfig::default()
        };
        Ok(match self {
            Target::Benchmark(b) => b.initial_mixture(&cfg)?,
            Target::Ns { problem, .. } => init_mixture(problem, &cfg)?,
        })
    }

    fn derivatives(&self, name: &str) -> Result<Arc<dyn LogPosteriorDerivatives>, CliError> {
        match self {
            Target::Benchmark(BenchmarkSpec {
                derivatives: Some(d), ..
            }) => Ok(d.clone()),
            _ => Err(CliError::Config(format!("gmvi needs analytic derivatives, which {name} does not provide"))),
        }
    }

    fn density_axes(&self) -> Result<Option<Vec<Axis>>, CliError> {
        match self {
            Target::Benchmark(b) if b.problem.n_theta() <= 2 => Ok(Some(
                b.reference_bounds
                    .iter()
                    .zip(&b.reference_resolution)
                    .map(|(&(lo, hi), &n)| Axis::new(lo, hi, n))
                    .collect::<gmki_core::Result<_>>()?,
            )),
            _ => Ok(None),
        }
    }
}

fn build_target(name: &str, resolved: &Resolved) -> Result<Target, CliError> {
    if name != NAVIER_STOKES {
        return Ok(Target::Benchmark(benchmarks::by_name(name)?));
    }
    let (setup, truth_seed) = resolved.ns.clone().expect("resolved with a setup");
    let forward = Arc::new(NsForward::new(&setup)?);
    let truth = synthetic_truth(&forward, truth_seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let problem = ns_problem(forward.clone(), truth.y.clone())?;
    let manifest = NsManifest {
        setup,
        truth_seed,
        noise_std: forward.observation().noise_std,
        observation_locations: forward.observation().locations(),
    };
    Ok(Target::Ns {
        forward,
        truth,
        problem,
        manifest,
    })
}

fn recommended(name: &str) -> Result<GmkiConfig, CliError> {
    if name == NAVIER_STOKES {
        Ok(ns_recommended())
    } else {
        Ok(benchmarks::by_name(name)?.recommended_cfg)
    }
}

/// Streams records to `records.jsonl` and `timings.csv` as they arrive.
struct RecordSink {
    records: std::io::BufWriter<std::fs::File>,
    timings: std::io::BufWriter<std::fs::File>,
    dir: PathBuf,
    failed: Option<CliError>,
}

impl RecordSink {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let mut timings = artifacts::create(&dir.join(artifacts::TIMINGS))?;
        writeln!(timings, "iteration,wall_time_s").map_err(|e| CliError::io(&dir.join(artifacts::TIMINGS), e))?;
        Ok(Self {
            records: artifacts::create(&dir.join(artifacts::RECORDS))?,
            timings,
            dir: dir.to_path_buf(),
            failed: None,
        })
    }

    fn push(&mut self, r: &IterationRecord) {
        if self.failed.is_some() {
            return;
        }
        let res = writeln!(self.records, "{}", artifacts::record_line(r))
            .and_then(|_| writeln!(self.timings, "{},{:.16e}", r.iteration, r.wall_time_s));
        if let Err(e) = res {
            self.failed = Some(CliError::io(&self.dir.join(artifacts::RECORDS), e));
        }
    }

    fn finish(mut self) -> Result<(), CliError> {
        if let Some(e) = self.failed.take() {
            return Err(e);
        }
        self.records.flush().map_err(|e| CliError::io(&self.dir.join(artifacts::RECORDS), e))?;
        self.timings.flush().map_err(|e| CliError::io(&self.dir.join(artifacts::TIMINGS), e))
    }
}

/// Summary printed by the binary after a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub iterations: usize,
    pub forward_evals: usize,
    pub final_weights: Vec<f64>,
}

pub fn cmd_run(req: &RunRequest) -> Result<RunSummary, CliError> {
    let file = req.config.as_deref().map(RunConfigFile::load).transpose()?;
    let resolved = config::resolve(req.method, &req.problem, file.as_ref(), &recommended(&req.problem)?, req.seed)?;
    let target = build_target(&req.problem, &resolved)?;
    let derivs = match req.method {
        Method::Gmvi => Some(target.derivatives(&req.problem)?),
        Method::Gmki => None,
    };
    let axes = target.density_axes()?;
    let initial = target.initial_mixture(resolved.algorithm.k_components(), resolved.algorithm.seed())?;

    std::fs::create_dir_all(&req.out).map_err(|e| CliError::io(&req.out, e))?;
    artifacts::write_text(&req.out.join(artifacts::CONFIG), &resolved.to_file().to_toml())?;
    if let Target::Ns { truth, .. } = &target {
        artifacts::write_json(&req.out.join("truth.json"), truth)?;
    }

    let start = Instant::now();
    let mut sink = RecordSink::new(&req.out)?;
    let outcome: Result<RunOutput, RunFailure> = match &resolved.algorithm {
        AlgorithmConfig::Gmki(cfg) => {
            let aug = target.problem().augment();
            run_from(&aug, initial, cfg, &mut |r| sink.push(r))
        }
        AlgorithmConfig::Gmvi(cfg) => run_gmvi(derivs.as_deref().expect("checked above"), initial, cfg, &mut |r| sink.push(r)),
    };
    let wall_clock_s = start.elapsed().as_secs_f64();
    sink.finish()?;

    let (records, final_mixture, error) = match outcome {
        Ok(out) => (out.records, out.final_mixture, None),
        Err(f) => (f.records, f.last_good, Some(f.error)),
    };
    artifacts::write_json(&req.out.join(artifacts::FINAL_MIXTURE), &MixtureFile::from_mixture(&final_mixture))?;
    if let Some(axes) = &axes {
        let grid = mixture_to_grid(&final_mixture, axes).map_err(|e| CliError::Numerical(e.to_string()))?;
        artifacts::write_density(&req.out.join(artifacts::DENSITY), &grid)?;
    }
    if let Target::Ns { forward, truth, .. } = &target {
        write_fields(&req.out.join("fields.csv"), forward, truth, &final_mixture)?;
    }

    let forward_evals = records.iter().map(|r| r.forward_evals).sum();
    let manifest = RunManifest {
        method: req.method,
        problem: req.problem.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.algorithm.seed(),
        config: resolved.to_file(),
        gmki: match resolved.algorithm {
            AlgorithmConfig::Gmki(c) => Some(c),
            _ => None,
        },
        gmvi: match resolved.algorithm {
            AlgorithmConfig::Gmvi(c) => Some(c),
            _ => None,
        },
        navier_stokes: match &target {
            Target::Ns { manifest, .. } => Some(manifest.clone()),
            _ => None,
        },
        density_axes: axes.map(|a| a.into_iter().map(AxisFile::from).collect()),
        iterations_completed: records.last().map_or(0, |r| r.iteration),
        forward_evals,
        diagnostic_evals: records.iter().map(|r| r.diagnostic_evals).sum(),
        workers: rayon::current_num_threads(),
        wall_clock_s,
        status: if error.is_some() { "failed" } else { "ok" }.into(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    artifacts::write_json(&req.out.join(artifacts::MANIFEST), &manifest)?;
    if let Some(e) = error {
        return Err(CliError::Numerical(e.to_string()));
    }
    Ok(RunSummary {
        iterations: manifest.iterations_completed,
        forward_evals,
        final_weights: final_mixture.weights(),
    })
}

/// Truth, its mirror image and every component-mean field on the solver
/// grid: `x1,x2,truth,mirror,mean0,…`.
fn write_fields(path: &Path, forward: &NsForward, truth: &SyntheticTruth, mix: &GaussianMixture) -> Result<(), CliError> {
    let mirror = truth.omega0.mirrored();
    let means = mix
        .components()
        .iter()
        .map(|g| forward.initial_field(g.mean().as_slice()))
        .collect::<Result<Vec<Field>, _>>()?;
    let mut header = String::from("x1,x2,truth,mirror");
    for k in 0..means.len() {
        header.push_str(&format!(",mean{k}"));
    }
    let n = truth.omega0.n();
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let rows = (0..n * n).map(|idx| {
        let (i1, i2) = (idx / n, idx % n);
        let mut row = vec![i1 as f64 * h, i2 as f64 * h, truth.omega0.at(i1, i2), mirror.at(i1, i2)];
        row.extend(means.iter().map(|f| f.at(i1, i2)));
        row
    });
    artifacts::write_csv_rows(path, &header, rows)
}
