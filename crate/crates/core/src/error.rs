use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{RobustSolution, SolverStatus};
use crate::solver_kelly::KellySolution;

pub type Result<T> = std::result::Result<T, Error>;

/// Best iterate carried by a solver failure.
#[derive(Debug, Clone)]
pub enum BestIterate {
    Kelly(Box<KellySolution>),
    Robust(Box<RobustSolution>),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Solver,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, expected 1")]
    SumMismatch { sum: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid returns: {0}")]
    InvalidReturns(String),

    #[error("invalid Wasserstein ball: {0}")]
    InvalidBall(String),

    #[error("unsupported Wasserstein order p = {0}")]
    UnsupportedOrder(f64),

    #[error("solver stopped with status {status:?}")]
    SolverFailure {
        status: SolverStatus,
        best: BestIterate,
    },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("optimal multiplier {lambda} sits on the search bracket edge")]
    BracketTooNarrow { lambda: f64 },

    #[error("{path}:{line}: parse error: {message}")]
    ParseError {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: column `{column}`: non-positive price {value}")]
    NonPositivePrice {
        path: PathBuf,
        line: u64,
        column: String,
        value: f64,
    },

    #[error("{path}:{line}: dates are not strictly increasing")]
    NonMonotoneDates { path: PathBuf, line: u64 },

    #[error("{path}:{line}: column `{column}`: missing value")]
    MissingValue {
        path: PathBuf,
        line: u64,
        column: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("portfolio ruined in period {period}")]
    Ruin { period: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SolverFailure { .. } | Error::NumericFailure(_) | Error::BracketTooNarrow { .. } => {
                ErrorClass::Solver
            }
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}
