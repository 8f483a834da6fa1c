use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
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
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}, column `{column}`: cannot parse {value:?} as a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}, column `{column}`: value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        path: PathBuf,
        row: usize,
        column: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{0}: no frames")]
    ZeroFrames(PathBuf),
    #[error("frame rates differ between subjects: {h:.4} Hz vs {t:.4} Hz")]
    FrameRateMismatch { h: f64, t: f64 },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate session: {0}")]
    Degenerate(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("illegal trust amount {0}; expected one of 0, 0.2, 0.4, 0.6, 0.8, 1")]
    IllegalTrustAmount(f64),
    #[error("information loss undefined for channel {0}: every original signal has zero norm")]
    UndefinedLoss(String),
    #[error("both trust classes are required, found only class {0}")]
    SingleClass(u8),
    #[error("non-finite feature value in row `{session}`, feature `{feature}`")]
    NonFinite { session: String, feature: String },
    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("MEA series missing for session `{0}`")]
    MissingMea(String),
    #[error("channel {channel}: {source}")]
    Channel {
        channel: String,
        #[source]
        source: Box<Error>,
    },
    #[error("repeat {repeat}: {source}")]
    Repeat {
        repeat: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
