use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("CFL bound violated at t = {time}: Courant number {courant:.3} > 0.5")]
    Cfl { time: f64, courant: f64 },
    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },
}

pub type Result<T> = std::result::Result<T, NsError>;

impl From<NsError> for gmki_core::Error {
    fn from(e: NsError) -> Self {
        gmki_core::Error::Forward(e.to_string())
    }
}
