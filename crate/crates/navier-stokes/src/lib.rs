//! Pseudo-spectral 2-D Navier-Stokes forward model on the periodic box
//! `[0, 2π)²`, with a Karhunen-Loeve parameterized initial vorticity and
//! antisymmetric pointwise observations. The flow setup is symmetric about
//! `x₁ = π`, so `ω₀` and its mirror `−ω₀(2π − x₁, x₂)` give the same data.

mod error;
pub mod forward;
pub mod grid;
pub mod kl;
pub mod observation;
pub mod solver;

pub use error::{NsError, Result};
pub use forward::{ns_problem, synthetic_truth, NsForward, NsSetup, SyntheticTruth};
pub use grid::{Field, SpectralGrid};
pub use kl::{KlBasis, KlMode, Trig};
pub use observation::ObservationOperator;
pub use solver::{ns_solve, NsConfig};
