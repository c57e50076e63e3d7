use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {what} (expected {expected}, got {got})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("design matrix is rank deficient (rank {rank} of {columns} columns); {hint}")]
    RankDeficient {
        rank: usize,
        columns: usize,
        hint: &'static str,
    },

    #[error(
        "coordinate descent did not converge after {iterations} sweeps (objective {objective})"
    )]
    NonConvergence { iterations: usize, objective: f64 },

    #[error("cannot resolve a positive bandwidth: sample sd and IQR are both zero")]
    Bandwidth,

    #[error("tail fit failed ({side} tail): {reason} [threshold={threshold}, exceedances={exceedances}, n={n}]")]
    TailFit {
        side: &'static str,
        reason: &'static str,
        threshold: f64,
        exceedances: usize,
        n: usize,
    },

    #[error("outcome density at q_tau (tau={tau}) is {value:e}, below 1e-12")]
    IllConditionedDensity { tau: f64, value: f64 },

    #[error("external predictor cannot evaluate counterfactual rows")]
    CounterfactualUnsupported,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's JSON error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Bandwidth => "bandwidth",
            Error::TailFit { .. } => "tail_fit",
            Error::IllConditionedDensity { .. } => "ill_conditioned_density",
            Error::CounterfactualUnsupported => "counterfactual_unsupported",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
