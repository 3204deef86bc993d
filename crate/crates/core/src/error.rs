use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes {0:?}, expected \"CSTK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported CST version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported CST dtype {0}")]
    UnsupportedDtype(u8),
    #[error("non-zero reserved byte {0} in CST header")]
    ReservedByte(u8),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error("raster dimensions {height}x{width} overflow")]
    DimensionOverflow { height: u64, width: u64 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("scribble point ({x}, {y}) outside {width}x{height} raster")]
    ScribbleOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("duplicate scribble point ({x}, {y}, label {label})")]
    DuplicateScribble { x: u32, y: u32, label: u8 },
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("negative or non-finite distance value at flat index {index}")]
    InvalidDistance { index: usize },
    #[error("distance map must be normalized first")]
    NotNormalized,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigen decomposition failed: {0}")]
    Eigen(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(String),

    #[error("image {id}: {source}")]
    Image {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Whether the error came from the file system rather than from file contents.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Image { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
