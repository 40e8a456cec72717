use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "kernel of size {size} is too large for a {width}x{height} image \
         (at most {max} taps per side)"
    )]
    KernelTooLarge {
        size: usize,
        width: usize,
        height: usize,
        max: usize,
    },

    #[error(
        "image dimensions differ ({0}x{1}x{2} vs {3}x{4}x{5}); \
         run match_dimensions first"
    )]
    DimensionMismatch(usize, usize, usize, usize, usize, usize),

    #[error("channel counts differ ({0} vs {1})")]
    ChannelMismatch(usize, usize),

    #[error("malformed image: {0}")]
    Malformed(String),

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("images with an alpha channel are not supported")]
    AlphaChannel,

    #[error("sample value {value} at channel {channel}, index {index} is outside [0, 1]")]
    OutOfRange {
        value: f64,
        channel: usize,
        index: usize,
    },

    #[error("benchmark suite has no records")]
    EmptySuite,

    #[error("invalid benchmark suite: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
