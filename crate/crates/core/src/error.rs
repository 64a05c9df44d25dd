use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("degenerate dimension: d = {0}, need at least 2")]
    DegenerateDimension(usize),

    #[error("out-of-vocabulary paragraph {0}: no token is in the model vocabulary")]
    OutOfVocabulary(String),

    #[error("duplicate paragraph reference {0}")]
    DuplicateParagraph(String),

    #[error("ragged dimensions at line {line}: found {found} values, expected {expected}")]
    RaggedDimensions {
        line: usize,
        found: usize,
        expected: usize,
    },

    #[error("non-finite value at line {line}")]
    NonFinite { line: usize },

    #[error("undefined angle: zero vector")]
    UndefinedAngle,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("disconnected trivial graph: no positive off-diagonal weight")]
    TrivialGraph,

    #[error("negative edge weight {weight} between nodes {i} and {j}; apply thresholds first")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("eigensolver did not converge within {0} iterations")]
    EigenNoConvergence(usize),

    #[error("duplicate filing: firm {firm} on {date}")]
    DuplicateFiling { firm: String, date: String },

    #[error("degenerate sort: {0}")]
    DegenerateSort(String),

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("singular design matrix (condition number {0:.3e})")]
    SingularDesign(f64),

    #[error("insufficient span: T = {t} must exceed N + K = {nk}")]
    InsufficientSpan { t: usize, nk: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("event date {0} is not a trading day; resolve t=0 explicitly")]
    NotTradingDay(String),

    #[error("unknown tactic {name:?} in entry {entry}")]
    UnknownTactic { entry: String, name: String },

    #[error("overlapping SIC ranges: {0}")]
    OverlappingRanges(String),

    #[error("no parseable lines in input")]
    NoParseableLines,

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
