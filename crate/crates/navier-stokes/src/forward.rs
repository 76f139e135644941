//! `𝒢: θ ↦ observations`, the Bayesian problem around it, and seeded
//! synthetic data.

use std::sync::Arc;

use gmki_core::inverse_problem::{ForwardModel, InverseProblem, SpdMatrix};
use gmki_core::rng::{self, Phase};
use gmki_core::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NsError, Result};
use crate::grid::{Field, SpectralGrid};
use crate::kl::{KlBasis, COEFFICIENT_VARIANCE};
use crate::observation::ObservationOperator;
use crate::solver::{ns_solve, NsConfig};

/// Resolution and truncation of a Navier-Stokes experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsSetup {
    pub grid_n: usize,
    pub kl_modes: usize,
    #[serde(default)]
    pub solver: NsConfig,
}

impl Default for NsSetup {
    fn default() -> Self {
        Self {
            grid_n: 64,
            kl_modes: 128,
            solver: NsConfig::default(),
        }
    }
}

impl NsSetup {
    /// Small profile: 32² grid, 32 KL terms, δt = 5·10⁻³.
    pub fn desk() -> Self {
        Self {
            grid_n: 32,
            kl_modes: 32,
            solver: NsConfig {
                dt: 5e-3,
                ..NsConfig::default()
            },
        }
    }
}

/// The composed map `θ → ω₀ → (ω(T₁), ω(T₂)) → observations`.
#[derive(Debug, Clone)]
pub struct NsForward {
    basis: KlBasis,
    cfg: NsConfig,
    op: ObservationOperator,
    grid: SpectralGrid,
}

impl NsForward {
    pub fn new(setup: &NsSetup) -> Result<Self> {
        let grid = SpectralGrid::new(setup.grid_n)?;
        let basis = KlBasis::new(setup.kl_modes)?;
        if basis.max_wavenumber() as f64 > setup.grid_n as f64 / 3.0 {
            return Err(NsError::Config(format!(
                "a {}² grid dealiases KL wavenumbers up to {}",
                setup.grid_n,
                basis.max_wavenumber()
            )));
        }
        Ok(Self {
            basis,
            cfg: setup.solver.clone(),
            op: ObservationOperator::default(),
            grid,
        })
    }

    pub fn basis(&self) -> &KlBasis {
        &self.basis
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn config(&self) -> &NsConfig {
        &self.cfg
    }

    pub fn observation(&self) -> &ObservationOperator {
        &self.op
    }

    pub fn initial_field(&self, theta: &[f64]) -> Result<Field> {
        if theta.len() != self.basis.len() {
            return Err(NsError::Shape(format!("expected {} coefficients, got {}", self.basis.len(), theta.len())));
        }
        self.basis.expand(theta, self.grid.n())
    }

    /// Observations of the flow started from an arbitrary grid field.
    pub fn observe_field(&self, omega0: &Field) -> Result<Vec<f64>> {
        let fields = ns_solve(omega0, &self.cfg, &self.grid)?;
        self.op.observe(&fields)
    }
}

impl ForwardModel for NsForward {
    fn input_dim(&self) -> usize {
        self.basis.len()
    }

    fn output_dim(&self) -> usize {
        self.op.len() * self.cfg.times.len()
    }

    fn evaluate(&self, theta: &DVector<f64>) -> gmki_core::Result<DVector<f64>> {
        let w0 = self.initial_field(theta.as_slice())?;
        Ok(DVector::from_vec(self.observe_field(&w0)?))
    }
}

/// Posterior problem with prior `𝒩(0, 2π² I)` on the KL coefficients and
/// noise `𝒩(0, σ² I)` with `σ` from the observation operator.
pub fn ns_problem(forward: Arc<NsForward>, y: Vec<f64>) -> gmki_core::Result<InverseProblem> {
    let n_theta = forward.input_dim();
    let noise_var = forward.observation().noise_std.powi(2);
    let n_y = forward.output_dim();
    InverseProblem::new(
        forward,
        DVector::from_vec(y),
        SpdMatrix::scaled_identity(n_y, noise_var)?,
        DVector::zeros(n_theta),
        SpdMatrix::scaled_identity(n_theta, COEFFICIENT_VARIANCE)?,
    )
}

/// Seeded ground truth: prior draw `θ_ref`, its field, clean and noisy data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub theta_ref: Vec<f64>,
    #[serde(skip)]
    pub omega0: Field,
    pub clean: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn synthetic_truth(forward: &NsForward, seed: u64) -> Result<SyntheticTruth> {
    let n_theta = forward.basis().len();
    let mut rng = rng::stream(seed, 0, 0, Phase::Synthetic);
    let z = rng::standard_normal_matrix(&mut rng, n_theta, 1);
    let theta_ref: Vec<f64> = z.iter().map(|v| v * COEFFICIENT_VARIANCE.sqrt()).collect();
    let omega0 = forward.initial_field(&theta_ref)?;
    let clean = forward.observe_field(&omega0)?;
    let mut rng = rng::stream(seed, 0, 1, Phase::Synthetic);
    let noise = rng::standard_normal_matrix(&mut rng, clean.len(), 1);
    let sd = forward.observation().noise_std;
    let y = clean.iter().zip(noise.iter()).map(|(c, e)| c + sd * e).collect();
    Ok(SyntheticTruth {
        seed,
        theta_ref,
        omega0,
        clean,
        y,
    })
}
