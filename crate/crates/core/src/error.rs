use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("kernel of side {side} does not fit a {width}x{height} image")]
    KernelTooLarge {
        side: usize,
        width: usize,
        height: usize,
    },

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("region {region}: {source}")]
    Region {
        region: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

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

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::KernelTooLarge { .. } => "kernel_too_large",
            Error::DegenerateRegion(_) => "degenerate_region",
            Error::Region { .. } => "region_failure",
            Error::Io { .. } => "io",
            Error::Codec { .. } => "codec",
            Error::Format { .. } => "format",
        }
    }
}
