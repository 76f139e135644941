//! Gaussian Mixture Kalman Inversion (GMKI).
//!
//! A derivative-free scheme for approximating multimodal Bayesian posteriors
//! of the form `ρ(θ) ∝ exp(-Φ_R(θ))`, where `Φ_R` is a regularized
//! least-squares misfit built from a black-box forward model. Each iteration
//! splits the Fisher-Rao gradient flow into two half-steps:
//!
//! * [`exploration`]: `ρ ↦ ρ^{1-Δt}`, approximated component-wise by Monte
//!   Carlo moment matching;
//! * [`exploitation`]: `ρ ↦ ρ·exp(-Δt Φ_R)`, approximated component-wise by a
//!   Kalman update driven by a modified unscented transform.
//!
//! [`driver`] composes the two, [`gmvi`] provides the gradient-based
//! variational comparator, [`oracles`] supplies grid references and closed-form
//! solutions, and [`benchmarks`] builds the standard test problems.

pub mod benchmarks;
pub mod driver;
mod error;
pub mod exploitation;
pub mod exploration;
pub mod gaussian;
pub mod gmvi;
pub mod inverse_problem;
pub(crate) mod linalg;
pub mod oracles;
pub mod rng;

pub use driver::{GmkiConfig, InitPolicy, IterationRecord, RunFailure, RunOutput};
pub use error::{Error, Result};
pub use gaussian::{Gaussian, GaussianMixture};
pub use inverse_problem::{AugmentedProblem, ForwardModel, InverseProblem, SpdMatrix};

pub use nalgebra::{DMatrix, DVector};
