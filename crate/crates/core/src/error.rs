use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or grid invariant does not hold; the message names it.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query out of range: {0}")]
    OutOfRange(String),

    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite value at t={t}, y={y}")]
    NonFinite { t: f64, y: f64 },

    #[error("no supersolution parameters found in the search box")]
    NoDeltaFound,

    #[error("oracle size guard exceeded: {0} > 1e7 cell updates")]
    OracleTooLarge(u64),

    #[error("trinomial probabilities infeasible at z={z}, y={y}")]
    OracleInfeasible { z: f64, y: f64 },

    #[error("sandwich bound violated at period {period}, t={t}, y={y}: {detail}")]
    SandwichViolation {
        period: usize,
        t: f64,
        y: f64,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Config(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::OutOfRange(_) => "out_of_range",
            Error::CflViolation { .. } => "cfl_violation",
            Error::NonFinite { .. } => "non_finite",
            Error::NoDeltaFound => "no_delta_found",
            Error::OracleTooLarge(_) => "oracle_too_large",
            Error::OracleInfeasible { .. } => "oracle_infeasible",
            Error::SandwichViolation { .. } => "sandwich_violation",
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
        }
    }

    /// True when the failure indicates a broken numerical invariant rather
    /// than bad user input.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. } | Error::NonFinite { .. } | Error::SandwichViolation { .. }
        )
    }
}
