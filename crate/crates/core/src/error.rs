use std::path::PathBuf;

use crate::direction::DirectionError;
use crate::quat::QuatError;

#[derive(Debug, thiserror::Error)]
pub enum QopsError {
    #[error(transparent)]
    Quat(#[from] QuatError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("image has no pixels")]
    EmptyImage,
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("{0}: images with an alpha channel are not supported")]
    AlphaUnsupported(PathBuf),
    #[error("{0}: only 8-bit grayscale and 24-bit RGB images are supported")]
    UnsupportedDepth(PathBuf),
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("all encoding values are zero")]
    ZeroEncoding,
    #[error("stain vectors could not be estimated: {0}")]
    DegenerateStains(String),
    #[error("bad channel selection: {0}")]
    BadChannelSelection(String),
    #[error("image of {width}x{height} is below the 64x64 minimum")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = QopsError> = std::result::Result<T, E>;
