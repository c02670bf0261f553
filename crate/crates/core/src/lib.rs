//! Motion-parameter codec and image-warping core for keypoint-based
//! animation video coding.
//!
//! A P-frame is described by a handful of keypoints plus a compact
//! description of the local 2x2 transform around each keypoint. Four
//! transform modes are supported:
//!
//! * [`TransformMode::NoJacobian`]: keypoints only.
//! * [`TransformMode::RotScale`]: one global rotation angle; the scale is
//!   regressed from the keypoints at the decoder and costs no bits.
//! * [`TransformMode::RotScaleShear`]: global rotation plus a unit-determinant
//!   shear per keypoint.
//! * [`TransformMode::FullJacobian`]: an arbitrary 2x2 matrix per keypoint.
//!
//! The crate covers the transform algebra ([`transforms`]), dense warp-grid
//! construction and bilinear resampling ([`warpfield`]), the quantized
//! bitstream and rate accounting ([`bitstream`]), gradient normalization on a
//! small analytic network ([`gradnorm`]) and reference metrics ([`metrics`]).

pub mod bitstream;
pub mod error;
pub mod gradnorm;
pub mod image;
pub mod metrics;
pub mod trace;
pub mod transforms;
pub mod warpfield;

pub use error::{Error, Result};
pub use image::Image;
pub use transforms::{KeypointFrame, Mat2, MotionParams, Point, Shear, TransformMode};
pub use warpfield::{WarpField, WeightMap};
