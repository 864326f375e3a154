use std::path::PathBuf;

use thiserror::Error;

/// Numerical domain failures of the point-mass model.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("bank angle {0} rad is outside (-pi/2, pi/2)")]
    BankOutOfDomain(f64),
    #[error("airspeed must be positive, got {0} m/s")]
    NonPositiveAirspeed(f64),
    #[error("time step must be positive, got {0} s")]
    InvalidTimeStep(f64),
    #[error("fuel-burn coefficient must be non-negative, got {0}")]
    NegativeFuelCoefficient(f64),
    #[error("position ({0}, {1}) is at the runway origin")]
    AtOrigin(f64, f64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no valid solution for aircraft {aircraft} at iteration {iteration}")]
    Infeasible { aircraft: usize, iteration: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
