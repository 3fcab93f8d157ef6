use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: activity value must be a positive finite number of nM, got {value}")]
    NonPositiveActivity {
        path: PathBuf,
        line: usize,
        value: f64,
    },

    #[error("unknown compound(s): {}", .0.join(", "))]
    UnknownCompounds(Vec<String>),

    #[error("unknown target: {0}")]
    UnknownTarget(String),

    #[error("unknown label source: {0}")]
    UnknownSource(String),

    #[error("term absent from corpus (corpus count is 0)")]
    TermAbsent,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid term counts: {0}")]
    InvalidCounts(String),

    #[error("no relevant compounds for target {target} ({activity_type} < {threshold} nM)")]
    NoRelevantCompounds {
        target: String,
        activity_type: String,
        threshold: f64,
    },

    #[error("activity value must be finite and non-negative, got {0}")]
    InvalidActivityValue(f64),

    #[error("no interactions for the selected activity type")]
    NoInteractions,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank {rank} exceeds min(rows, cols) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("similarity matrix is not symmetric at ({row}, {col})")]
    AsymmetricSimilarity { row: usize, col: usize },

    #[error("invalid similarity matrix: {0}")]
    InvalidSimilarity(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("{entries} stored entries cannot be split into {folds} folds")]
    TooFewEntries { entries: usize, folds: usize },

    #[error("held-out set is empty")]
    EmptyHeldOut,

    #[error("no compound has at least {min_train} training targets and {min_test} test targets")]
    NoEligibleCompounds { min_train: usize, min_test: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model file {path}: {message}")]
    InvalidModel { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied settings rather than data or I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::RankTooLarge { .. } | Error::UnknownSource(_)
        )
    }
}
