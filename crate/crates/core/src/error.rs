use std::path::PathBuf;

use thiserror::Error;

use crate::opinf::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{routine} did not converge after {iterations} iterations")]
    NonConvergence { routine: &'static str, iterations: usize },

    #[error("matrix not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("constraint Jacobian rank-deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("constraint residual {residual:e} exceeds tolerance {tolerance:e} at step {step}")]
    ConstraintDrift {
        step: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("requested reduced order {requested} exceeds numerical rank {rank}")]
    RankTooSmall { requested: usize, rank: usize },

    #[error("operator inference did not reach stationarity within {} iterations: {}", .0.iterations, .0.termination)]
    InferenceFailed(Box<SolveReport>),

    #[error("output normalization undefined: full-order output is identically zero")]
    ZeroReference,

    #[error("missing {what}: {path}")]
    MissingArtifact { what: String, path: PathBuf },

    #[error("malformed {kind} file {path}: {message}")]
    Parse {
        kind: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonConvergence { .. } => "non_convergence",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Dimension { .. } => "dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::Invariant(_) => "invariant",
            Error::ConstraintDrift { .. } => "constraint_drift",
            Error::RankTooSmall { .. } => "rank_too_small",
            Error::InferenceFailed(_) => "inference_failed",
            Error::ZeroReference => "zero_reference",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
