use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VprError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VprError {
    /// Malformed input: wrong lengths, mismatched dimensions, non-finite values.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("index ({x}, {y}) out of bounds for {width}x{height} grid")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    /// A precondition on the arguments of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad simulator configuration; `unknown` lists unrecognised keys.
    #[error("invalid configuration: {message}")]
    Config {
        message: String,
        unknown: Vec<String>,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("bad magic in {}: expected {expected:?}, found {found:?}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported format version {found} in {}", path.display())]
    UnsupportedVersion { path: PathBuf, found: u32 },

    #[error("invalid metadata in {}: {message}", path.display())]
    Metadata { path: PathBuf, message: String },

    #[error("dimension mismatch in {}: {message}", path.display())]
    DimensionMismatch { path: PathBuf, message: String },

    #[error("truncated record for frame {frame} in {}", path.display())]
    Truncated { path: PathBuf, frame: usize },

    #[error("non-finite {field} in frame {frame}, channel {channel:?} of {}", path.display())]
    NonFinite {
        path: PathBuf,
        frame: usize,
        channel: Option<usize>,
        field: &'static str,
    },

    #[error("invalid pose table {}: {message}", path.display())]
    Poses { path: PathBuf, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl VprError {
    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        VprError::Structure(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        VprError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VprError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for the errors raised while validating a traverse directory.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            VprError::MissingFile(_)
                | VprError::BadMagic { .. }
                | VprError::UnsupportedVersion { .. }
                | VprError::Metadata { .. }
                | VprError::DimensionMismatch { .. }
                | VprError::Truncated { .. }
                | VprError::NonFinite { .. }
                | VprError::Poses { .. }
                | VprError::Structure(_)
        )
    }
}
