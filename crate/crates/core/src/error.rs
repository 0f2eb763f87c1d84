use thiserror::Error;

use crate::multiindex::MultiIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires a nonempty index set")]
    EmptySet,

    #[error("multi-index {0} is not in the margin of the index set")]
    NotInMargin(MultiIndex),

    #[error("adding {0} would break downward closedness (not in the reduced margin)")]
    NotAdmissible(MultiIndex),

    #[error("parameter point {0:?} lies outside [-1, 1]^M")]
    OutOfDomain(Vec<f64>),

    #[error("uniform ellipticity violated at x = {x}: a_0(x) - sum |a_m(x)| = {value}")]
    Ellipticity { x: f64, value: f64 },

    #[error("finite element system is singular (pivot {pivot} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error(
        "tensor reference quadrature is infeasible for M = {dim} (limit is 4); \
         use a sampling-based error estimate instead"
    )]
    ReferenceInfeasible { dim: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot compare traces of different problems ({0} vs {1})")]
    ProblemMismatch(String, String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("malformed trace {path}: {reason}")]
    Trace { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
