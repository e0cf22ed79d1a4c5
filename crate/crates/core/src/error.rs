use std::path::PathBuf;

use thiserror::Error;

/// Reasons a CGT byte stream can be rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseIssue {
    BadMagic([u8; 4]),
    Truncated { expected: u64, found: u64 },
    TrailingBytes { extra: u64 },
    MonthOutOfRange(u8),
    UnknownKind(u8),
    ReservedNonZero,
    NonFinite,
    MaskDomain(f32),
    SingleFieldKind { kind: u8, n_time: u32 },
    EmptyDimension,
}

impl std::fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseIssue::BadMagic(m) => write!(f, "bad magic {:?}", String::from_utf8_lossy(m)),
            ParseIssue::Truncated { expected, found } => {
                write!(f, "truncated payload: expected {expected} bytes, found {found}")
            }
            ParseIssue::TrailingBytes { extra } => write!(f, "{extra} trailing bytes after payload"),
            ParseIssue::MonthOutOfRange(m) => write!(f, "start month {m} outside 1..=12"),
            ParseIssue::UnknownKind(k) => write!(f, "unknown kind {k}"),
            ParseIssue::ReservedNonZero => write!(f, "reserved header bytes are not zero"),
            ParseIssue::NonFinite => write!(f, "non-finite value in payload"),
            ParseIssue::MaskDomain(v) => write!(f, "mask value {v} is not 0 or 1"),
            ParseIssue::SingleFieldKind { kind, n_time } => {
                write!(f, "kind {kind} requires n_time = 1, found {n_time}")
            }
            ParseIssue::EmptyDimension => write!(f, "zero-sized dimension"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("degenerate mask '{0}': no cell selected")]
    DegenerateMask(String),

    #[error("insufficient coverage: {0}")]
    Coverage(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("calendar misalignment: {0}")]
    Alignment(String),

    #[error("parse error at byte {offset}: {issue}")]
    Parse { offset: u64, issue: ParseIssue },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layer state: {0}")]
    State(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("corrupt checkpoint tensor '{name}': {reason}")]
    Corruption { name: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the contents of input data rather than
    /// by configuration or the environment.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::OutOfRange(_)
                | Error::InvalidValue(_)
                | Error::DegenerateMask(_)
                | Error::Coverage(_)
                | Error::InsufficientHistory(_)
                | Error::DegenerateStatistics(_)
                | Error::Alignment(_)
                | Error::Parse { .. }
                | Error::Corruption { .. }
                | Error::Input(_)
                | Error::Json { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
