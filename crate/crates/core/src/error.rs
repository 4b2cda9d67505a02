use thiserror::Error;

/// Errors produced by the simulation, loss, and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{qubits} qubits exceeds the dense capacity of {max} qubits")]
    Capacity { qubits: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix function is singular at eigenvalue {eigenvalue:e}")]
    Singularity { eigenvalue: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Singularity { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
