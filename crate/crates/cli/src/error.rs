use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures reported by a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Setup errors from the libraries count as configuration errors.
impl From<gmki_core::Error> for CliError {
    fn from(e: gmki_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<gmki_navier_stokes::NsError> for CliError {
    fn from(e: gmki_navier_stokes::NsError) -> Self {
        CliError::Config(e.to_string())
    }
}
