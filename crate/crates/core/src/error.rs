//! Error types, one enum per subsystem.

use std::path::PathBuf;

use thiserror::Error;

use crate::constraints::Constraint;
use crate::oracle::QueryRecord;

/// Data model and UCR ingestion errors.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty dataset")]
    Empty,
    #[error("series must have length >= 2, got {len}")]
    TooShort { len: usize },
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },
    #[error("series {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{labels} labels for {series} series")]
    LabelCount { series: usize, labels: usize },
    #[error("line {line}: ragged row with {found} values, expected {expected}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {token:?} as a number")]
    BadNumber { line: usize, column: usize, token: String },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Distance kernel and matrix file errors.
#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("series lengths differ: {left} vs {right}")]
    UnequalLengths { left: usize, right: usize },
    #[error("warping window fraction must lie in [0, 1], got {0}")]
    BadWindow(f64),
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("distance matrix needs at least 2 instances, got {0}")]
    TooFewInstances(usize),
    #[error("invalid distance matrix file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape-based distance and k-Shape errors.
#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("series lengths differ: {left} vs {right}")]
    UnequalLengths { left: usize, right: usize },
    #[error("degenerate series (zero norm)")]
    Degenerate,
    #[error("k = {k} is invalid for {n} series")]
    BadK { k: usize, n: usize },
}

/// Spectral refiner errors.
#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("k = {k} is invalid for a subset of {n} rows")]
    BadK { k: usize, n: usize },
    #[error("affinity matrix is not symmetric or has entries outside (0, 1]")]
    BadAffinity,
    #[error("eigen-decomposition did not converge")]
    NoConvergence,
}

/// Constraint store errors.
#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("instance index {index} out of range for {n} instances")]
    OutOfRange { index: usize, n: usize },
    #[error("a constraint needs two distinct instances, got ({0}, {0})")]
    SelfPair(usize),
    #[error("relation between {i} and {j} is already known; it must not be recorded again")]
    AlreadyKnown { i: usize, j: usize },
    #[error("constraint ({i}, {j}) contradicts the chain {chain:?}")]
    Inconsistent { i: usize, j: usize, chain: Vec<Constraint> },
    #[error("query budget exhausted")]
    BudgetExhausted,
}

/// Oracle errors. `Abort` is the only one the engine treats as a normal stop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("query aborted")]
    Abort,
    #[error("missing label for instance {0}")]
    MissingLabel(usize),
    #[error("replay diverged at query {seq}: log has ({log_i}, {log_j}), engine asked ({i}, {j})")]
    ReplayDiverged {
        seq: usize,
        log_i: usize,
        log_j: usize,
        i: usize,
        j: usize,
    },
}

/// Errors surfaced by an engine run.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    BadConfig(String),
    #[error("training mask selects no instances")]
    EmptyTrainMask,
    #[error("training mask has {mask} entries for {n} instances")]
    MaskLength { mask: usize, n: usize },
    #[error("oracle answers are inconsistent: {source}")]
    Inconsistent {
        #[source]
        source: ConstraintError,
        log: Vec<QueryRecord>,
    },
    #[error("oracle failed: {0}")]
    Oracle(OracleError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("session file: {0}")]
    Session(String),
}

/// Evaluation protocol errors.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("partitions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ARI needs at least 2 instances, got {0}")]
    TooFewInstances(usize),
    #[error("dataset has no labels")]
    Unlabelled,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
