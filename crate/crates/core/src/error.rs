use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the embedding, testing and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, {cols} columns")]
    NonSquare { rows: usize, cols: usize },

    #[error("negative dissimilarity {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("diagonal entry ({index}, {index}) must be an available 0, found {value}")]
    NonZeroDiagonal { index: usize, value: f64 },

    #[error("entries ({row}, {col}) = {a} and ({col}, {row}) = {b} differ beyond tolerance")]
    AsymmetryBeyondTolerance { row: usize, col: usize, a: f64, b: f64 },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix has no positive available entry, Frobenius norm is 0")]
    AllZero,

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("vector length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("tradeoff weight w = {0} must lie strictly inside (0, 1)")]
    WOutOfRange(f64),

    #[error(
        "invalid weight {value} at ({row}, {col}): weights must be finite, nonnegative, symmetric with zero diagonal"
    )]
    InvalidWeight { row: usize, col: usize, value: f64 },

    #[error("positive weight on missing dissimilarity ({row}, {col})")]
    PositiveWeightOnMissing { row: usize, col: usize },

    #[error("the positive-weight graph is disconnected")]
    DisconnectedWeights,

    #[error("free point {0} has no positive weight to any fixed point")]
    DisconnectedFreePoint(usize),

    #[error("solver produced non-finite values at iteration {iteration}")]
    NoProgress { iteration: usize },

    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),

    #[error("need at least {needed} values, found {found}")]
    TooFewValues { needed: usize, found: usize },

    #[error("empty test statistic sample")]
    EmptySample,

    #[error("alpha = {0} out of range")]
    AlphaOutOfRange(f64),

    #[error("invalid measurement-noise parameter r = {0}; must be finite and > 0")]
    InvalidR(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("{path}: line {line}: {message}")]
    ParseError { path: PathBuf, line: usize, message: String },

    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    RaggedRows { path: PathBuf, line: usize, expected: usize, found: usize },

    #[error("w = {w}, replicate {replicate}: {source}")]
    Replicate {
        w: f64,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoProgress { .. }
            | Error::DisconnectedWeights
            | Error::DisconnectedFreePoint(_)
            | Error::DegenerateInput(_) => true,
            Error::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
