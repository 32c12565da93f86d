use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("rank ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),

    #[error("requested rank {k} exceeds min(rows, cols) = {max}")]
    RankTooLarge { k: usize, max: usize },

    #[error("low-rank store has no factors for {0:?}")]
    MissingFactors(crate::lowrank::MatrixId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty input")]
    EmptyInput,

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("labels contain a single class; AUC is undefined")]
    DegenerateLabels,

    #[error("cannot place {m} distinct edges in a {n_u}x{n_v} biadjacency")]
    TooManyEdges { m: usize, n_u: usize, n_v: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: line {line}: invalid sign `{token}` (expected 1 or -1)")]
    InvalidSign {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{path}: line {line}: duplicate pair ({u}, {v})")]
    DuplicatePair {
        path: PathBuf,
        line: usize,
        u: String,
        v: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("non-finite value encountered: {0}")]
    NumericFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input data rather than by arguments or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DuplicateEdge { .. }
                | Error::Parse { .. }
                | Error::InvalidSign { .. }
                | Error::DuplicatePair { .. }
                | Error::Format(_)
                | Error::Io(_)
                | Error::EmptySplit(_)
                | Error::DegenerateLabels
        )
    }
}
