use thiserror::Error;

/// Errors raised by the context modeling engine.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format {
        line: Option<usize>,
        message: String,
    },

    #[error("{kind} not found: {key}")]
    NotFound { kind: &'static str, key: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("path arity mismatch: expected {expected}, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("state index {index} out of range for dimension {dimension}")]
    StateOutOfRange { index: u32, dimension: usize },

    #[error("non-contiguous dimension growth: expected new index {expected}, got {actual}")]
    NonContiguousGrowth { expected: usize, actual: usize },

    #[error("invalid relation: {0}")]
    InvalidRelation(String),

    #[error("closeness {0} out of range 0..=100")]
    ClosenessRange(i64),

    #[error("channel {0} is closed")]
    ChannelClosed(String),

    #[error("privacy policy violation: {0}")]
    PolicyViolation(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("dangling index: {0}")]
    Dangling(String),

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn format(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn not_found(kind: &'static str, key: impl ToString) -> Self {
        Error::NotFound {
            kind,
            key: key.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
