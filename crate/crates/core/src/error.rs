use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient history: query index {t} with horizon {horizon} leaves no training pattern")]
    InsufficientHistory { t: usize, horizon: usize },

    #[error("k exceeds available patterns: k = {k}, available = {available}")]
    KExceedsPatterns { k: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("percentage metric undefined for nonpositive load {value}")]
    PercentageUndefined { value: f64 },

    #[error("probability {0} is not on the quantile grid")]
    NotOnGrid(f64),

    #[error("quantile crossing: lower bound {lower} exceeds upper bound {upper}")]
    Crossing { lower: f64, upper: f64 },

    #[error("degenerate loss differential: zero variance with mean {mean}")]
    DegenerateDifferential { mean: f64 },

    #[error("LP solver did not converge after {iterations} iterations (relative gap {gap:e}, alpha {alpha})")]
    SolverFailed {
        iterations: usize,
        gap: f64,
        alpha: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("test hour {hour}: {message}")]
    TestHour { hour: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
