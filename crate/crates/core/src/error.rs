use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: missing metadata: {msg}", path.display())]
    MissingMetadata { path: PathBuf, msg: String },

    #[error("bad dictionary file: {0}")]
    Format(String),

    #[error("unsupported dictionary file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("dictionary file truncated or corrupt at byte offset {offset}: {msg}")]
    Corrupt { offset: usize, msg: String },

    #[error("zero-variance segment")]
    ZeroVariance,

    #[error("atom of length {atom_len} does not fit in a signal of length {signal_len}")]
    AtomTooLong { atom_len: usize, signal_len: usize },

    #[error("unknown atom id {0}")]
    UnknownAtom(u32),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dictionaries have different atom counts ({0} vs {1})")]
    AtomCountMismatch(usize, usize),

    #[error("out-of-order segment: timestamp {found} is not after {last}")]
    OutOfOrder { last: i64, found: i64 },

    #[error("block {index}: {source}")]
    Block {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("zero reconstruction and zero residual: empty model")]
    EmptyModel,

    #[error("ROC undefined: {0}")]
    RocUndefined(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error comes from reading or validating input data, as
    /// opposed to a numerical failure inside the algorithms.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::MissingMetadata { .. }
            | Error::Format(_)
            | Error::Version { .. }
            | Error::Corrupt { .. }
            | Error::OutOfOrder { .. }
            | Error::Insufficient(_)
            | Error::AtomCountMismatch(..)
            | Error::RocUndefined(_) => true,
            Error::Block { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
