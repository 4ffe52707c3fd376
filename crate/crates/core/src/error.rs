use std::path::PathBuf;

use thiserror::Error;

use crate::evaluate::EvalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: usize },

    #[error("weights sum to zero")]
    ZeroSum,

    #[error("ratio entries sum to {sum}, outside the renormalization tolerance")]
    RatioDrift { sum: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain `{0}` has no points")]
    EmptyDomain(String),

    #[error("domain `{domain}` contains duplicate point id `{point_id}`")]
    DuplicatePointId { domain: String, point_id: String },

    #[error("domain `{domain}` has a non-finite influence for `{point_id}`")]
    NonFiniteInfluence { domain: String, point_id: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("domain `{domain}` cannot supply {requested} points ({available} available, short by {})", requested - available)]
    CountExceedsDomain {
        domain: String,
        requested: usize,
        available: usize,
    },

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("hessian is singular")]
    SingularHessian,

    #[error("evaluation of sample {sample_index} failed: {source}")]
    EvaluatorFailure {
        sample_index: usize,
        #[source]
        source: EvalError,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("all {0} configured iterations have been run")]
    IterationsExhausted(usize),

    #[error("true optimum is unknown for this evaluator")]
    UnknownOptimum,

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("invalid run log: {0}")]
    InvalidLog(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
