use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("all mixture log-weights are -inf or NaN")]
    DegenerateWeights,

    #[error("exploration step produced a degenerate covariance for component {component}")]
    ExplorationDegeneracy { component: usize },

    #[error("Kalman update produced an indefinite covariance for component {component}")]
    ExploitationDegeneracy { component: usize },

    #[error("GMVI covariance of component {component} lost definiteness; use a smaller dt_vi")]
    StepSize { component: usize },

    #[error("forward model evaluation failed: {0}")]
    Forward(String),

    #[error("unsupported dimension {0} (grid oracles support 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Strips any iteration tag and returns the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }
}
