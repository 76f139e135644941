//! Flat run configuration files and their resolution against a problem.

use std::path::Path;

use clap::ValueEnum;
use gmki_core::gmvi::GmviConfig;
use gmki_core::GmkiConfig;
use gmki_navier_stokes::{NsConfig, NsSetup};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gmki,
    Gmvi,
}

/// Name under which the Navier-Stokes inversion is registered.
pub const NAVIER_STOKES: &str = "navier-stokes";

/// Every key a run config may contain. Keys that do not apply to the chosen
/// method or problem are rejected during resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardize_draws: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_vi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_modes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_seed: Option<u64>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), one_line(&e.to_string()))))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmConfig {
    Gmki(GmkiConfig),
    Gmvi(GmviConfig),
}

impl AlgorithmConfig {
    pub fn method(&self) -> Method {
        match self {
            AlgorithmConfig::Gmki(_) => Method::Gmki,
            AlgorithmConfig::Gmvi(_) => Method::Gmvi,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            AlgorithmConfig::Gmki(c) => c.seed,
            AlgorithmConfig::Gmvi(c) => c.seed,
        }
    }

    pub fn k_components(&self) -> usize {
        match self {
            AlgorithmConfig::Gmki(c) => c.k_components,
            AlgorithmConfig::Gmvi(c) => c.k_components,
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub algorithm: AlgorithmConfig,
    pub ns: Option<(NsSetup, u64)>,
}

impl Resolved {
    /// The flat file that reproduces this resolution with no fallbacks.
    pub fn to_file(&self) -> RunConfigFile {
        let mut f = RunConfigFile::default();
        match &self.algorithm {
            AlgorithmConfig::Gmki(c) => {
                f.k_components = Some(c.k_components);
                f.seed = Some(c.seed);
                f.dt = Some(c.dt);
                f.n_iterations = Some(c.n_iterations);
                f.j_samples = Some(c.j_samples);
                f.standardize_draws = Some(c.standardize_draws);
            }
            AlgorithmConfig::Gmvi(c) => {
                f.k_components = Some(c.k_components);
                f.seed = Some(c.seed);
                f.dt_vi = Some(c.dt_vi);
                f.n_steps = Some(c.n_steps);
            }
        }
        if let Some((setup, truth_seed)) = &self.ns {
            f.grid_n = Some(setup.grid_n);
            f.kl_modes = Some(setup.kl_modes);
            f.pde_dt = Some(setup.solver.dt);
            f.truth_seed = Some(*truth_seed);
        }
        f
    }
}

/// Solver step for an `n × n` grid when none is given: `2.5·10⁻³` at
/// `n = 64`, scaled with the mesh width to keep the Courant number fixed.
pub fn default_pde_dt(grid_n: usize) -> f64 {
    2.5e-3 * 64.0 / grid_n as f64
}

pub fn ns_setup(grid_n: usize, kl_modes: usize, pde_dt: Option<f64>) -> NsSetup {
    NsSetup {
        grid_n,
        kl_modes,
        solver: NsConfig {
            dt: pde_dt.unwrap_or_else(|| default_pde_dt(grid_n)),
            ..NsConfig::default()
        },
    }
}

/// Resolves `file` for `method` on a problem. `recommended` is the
/// problem's GMKI configuration, used whole when no file is given.
/// A file must name the component count and the run length explicitly;
/// only `dt` (0.5), `j_samples` (1000), `standardize_draws` and the seed
/// may be omitted.
pub fn resolve(
    method: Method,
    problem: &str,
    file: Option<&RunConfigFile>,
    recommended: &GmkiConfig,
    seed_flag: Option<u64>,
) -> Result<Resolved, CliError> {
    let is_ns = problem == NAVIER_STOKES;
    let empty = RunConfigFile::default();
    let f = file.unwrap_or(&empty);
    let reject = |present: bool, key: &str, why: &str| {
        if present {
            Err(CliError::Config(format!("config key {key} does not apply to {why}")))
        } else {
            Ok(())
        }
    };
    if !is_ns {
        reject(f.grid_n.is_some(), "grid_n", problem)?;
        reject(f.kl_modes.is_some(), "kl_modes", problem)?;
        reject(f.pde_dt.is_some(), "pde_dt", problem)?;
        reject(f.truth_seed.is_some(), "truth_seed", problem)?;
    }
    let require = |v: Option<usize>, key: &str| {
        v.ok_or_else(|| CliError::Config(format!("config file must set {key}")))
    };
    let algorithm = match method {
        Method::Gmki => {
            reject(f.dt_vi.is_some(), "dt_vi", "gmki")?;
            reject(f.n_steps.is_some(), "n_steps", "gmki")?;
            let mut cfg = *recommended;
            if file.is_some() {
                let base = GmkiConfig::default();
                cfg.k_components = require(f.k_components, "k_components")?;
                cfg.n_iterations = require(f.n_iterations, "n_iterations")?;
                cfg.dt = f.dt.unwrap_or(base.dt);
                cfg.j_samples = f.j_samples.unwrap_or(base.j_samples);
                cfg.standardize_draws = f.standardize_draws.unwrap_or(base.standardize_draws);
                cfg.seed = f.seed.unwrap_or(recommended.seed);
            }
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            AlgorithmConfig::Gmki(cfg)
        }
        Method::Gmvi => {
            for (present, key) in [
                (f.dt.is_some(), "dt"),
                (f.n_iterations.is_some(), "n_iterations"),
                (f.j_samples.is_some(), "j_samples"),
                (f.standardize_draws.is_some(), "standardize_draws"),
            ] {
                reject(present, key, "gmvi")?;
            }
            let mut cfg = GmviConfig::default();
            if file.is_some() {
                cfg.k_components = require(f.k_components, "k_components")?;
                cfg.n_steps = require(f.n_steps, "n_steps")?;
                cfg.dt_vi = f.dt_vi.ok_or_else(|| CliError::Config("config file must set dt_vi".into()))?;
                cfg.seed = f.seed.unwrap_or(0);
            }
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            if cfg.k_components == 0 || cfg.n_steps == 0 || !(cfg.dt_vi > 0.0) {
                return Err(CliError::Config(
                    "gmvi needs k_components and n_steps at least 1 and a positive dt_vi".into(),
                ));
            }
            AlgorithmConfig::Gmvi(cfg)
        }
    };
    let ns = is_ns.then(|| {
        let desk = NsSetup::desk();
        let setup = ns_setup(
            f.grid_n.unwrap_or(desk.grid_n),
            f.kl_modes.unwrap_or(desk.kl_modes),
            f.pde_dt,
        );
        (setup, f.truth_seed.unwrap_or(0))
    });
    Ok(Resolved { algorithm, ns })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfigFile, toml::de::Error> {
        toml::from_str(s)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("k_components = 2\nbogus = 1\n").is_err());
        assert!(parse("k_components = \"two\"\n").is_err());
    }

    #[test]
    fn missing_file_uses_the_recommendation() {
        let rec = GmkiConfig {
            k_components: 3,
            ..GmkiConfig::default()
        };
        let r = resolve(Method::Gmki, "bimodal2d-a", None, &rec, Some(9)).unwrap();
        assert_eq!(r.algorithm, AlgorithmConfig::Gmki(GmkiConfig { seed: 9, ..rec }));
        assert!(r.ns.is_none());
    }

    #[test]
    fn file_must_be_explicit() {
        let rec = GmkiConfig::default();
        let f = parse("k_components = 2\n").unwrap();
        assert!(resolve(Method::Gmki, "bimodal1d-a", Some(&f), &rec, None).is_err());
        let f = parse("k_components = 2\nn_iterations = 5\nj_samples = 50\n").unwrap();
        let r = resolve(Method::Gmki, "bimodal1d-a", Some(&f), &rec, None).unwrap();
        match r.algorithm {
            AlgorithmConfig::Gmki(c) => {
                assert_eq!((c.k_components, c.n_iterations, c.j_samples, c.dt), (2, 5, 50, 0.5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn keys_must_fit_method_and_problem() {
        let rec = GmkiConfig::default();
        let f = parse("k_components = 2\nn_iterations = 5\ndt_vi = 0.1\n").unwrap();
        assert!(resolve(Method::Gmki, "circle", Some(&f), &rec, None).is_err());
        let f = parse("k_components = 2\nn_iterations = 5\ngrid_n = 64\n").unwrap();
        assert!(resolve(Method::Gmki, "circle", Some(&f), &rec, None).is_err());
        let f = parse("k_components = 2\nn_steps = 5\ndt = 0.1\ndt_vi = 0.1\n").unwrap();
        assert!(resolve(Method::Gmvi, "circle", Some(&f), &rec, None).is_err());
    }

    #[test]
    fn resolved_file_round_trips() {
        let rec = GmkiConfig {
            k_components: 3,
            n_iterations: 50,
            ..GmkiConfig::default()
        };
        let f = parse("k_components = 3\nn_iterations = 4\ngrid_n = 64\nkl_modes = 128\n").unwrap();
        let r = resolve(Method::Gmki, NAVIER_STOKES, Some(&f), &rec, Some(2)).unwrap();
        let (setup, truth_seed) = r.ns.clone().unwrap();
        assert_eq!((setup.grid_n, setup.kl_modes, setup.solver.dt, truth_seed), (64, 128, 2.5e-3, 0));
        let again = parse(&r.to_file().to_toml()).unwrap();
        assert_eq!(resolve(Method::Gmki, NAVIER_STOKES, Some(&again), &rec, None).unwrap(), r);
    }

    #[test]
    fn pde_step_scales_with_mesh() {
        assert_eq!(default_pde_dt(32), NsSetup::desk().solver.dt);
        assert_eq!(default_pde_dt(64), NsSetup::default().solver.dt);
    }
}
