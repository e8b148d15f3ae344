//! Quaternion algebra and the 2D orthogonal planes split, applied to color
//! images: re-colorization, de-colorization, contrast enhancement, re-staining
//! and stain separation of histology slides.
//!
//! Pixels are pure quaternions `r·i + g·j + b·k` with channels scaled to
//! `[0, 1]`. A split direction pair `(f, g)` decomposes each pixel into the
//! part fixed by `q ↦ f⊛q⊛g` and the part it negates; every workflow encodes
//! one of those halves back into an 8-bit raster.
//!
//! ```
//! use qops::{Direction, Quaternion, split_pair};
//!
//! let mu7 = Direction::mu(7).unwrap();
//! let gray = Quaternion::pure(0.5, 0.5, 0.5);
//! let (plus, minus) = split_pair(gray, mu7, mu7);
//! assert!(plus.norm() < 1e-15);
//! assert_eq!(plus + minus, gray);
//! ```

pub mod direction;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod qimage;
pub mod quat;
pub mod split;
pub mod stain;
pub mod workflows;

#[cfg(feature = "cli")]
pub mod config;

pub use direction::{Direction, DirectionError, DirectionSpec, SampleRegion};
pub use error::{QopsError, Result};
pub use qimage::{ChannelBounds, ChannelImage, Normalize, NormalizationRange, QuaternionImage};
pub use quat::{PolarForm, QuatError, Quaternion};
pub use split::{apply_map, split, split_pair, Sign, SplitSpec};
