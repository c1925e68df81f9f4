use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unsupported format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("projected point is at infinity (w = {0:e})")]
    PointAtInfinity(f64),

    #[error("singular matrix (|det| = {0:e})")]
    SingularMatrix(f64),

    #[error("homography file {path}: expected 9 numeric tokens, found {found}")]
    TokenCount { path: PathBuf, found: usize },

    #[error("homography file {path}: non-numeric token {token:?}")]
    NonNumericToken { path: PathBuf, token: String },

    #[error("sequence {dir} is missing: {}", .missing.join(", "))]
    IncompleteSequence { dir: PathBuf, missing: Vec<String> },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("pair {pair} failed at {stage}: {source}")]
    PairFailed {
        pair: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.into());
        }
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
