use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported PNG color type {color_type} in {path}")]
    UnsupportedColorType { path: PathBuf, color_type: String },

    #[error("bad magic {found:?}, expected \"DQTF\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported tensor file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unknown tensor dtype id {0}")]
    UnknownDtype(u8),

    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("tensor file has {0} trailing bytes after the payload")]
    TrailingBytes(usize),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample out of range: {0}")]
    OutOfRange(String),

    #[error("masks do not partition the frame: {0}")]
    NonPartition(String),

    #[error("vector norm {0:e} below the cosine-similarity floor")]
    DegenerateNorm(f64),

    #[error("tier {tier} has a single item; InfoNCE positives are undefined")]
    SingletonTier { tier: i32 },

    #[error("loss became non-finite at {0}")]
    NonFinite(String),

    #[error("triplet is already swapped")]
    DoubleSwap,

    #[error("json error in {context}: {message}")]
    Json { context: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, err: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            message: err.to_string(),
        }
    }
}
