//! Sharpening-level selection under a bitrate/quality tradeoff.
//!
//! The pipeline sharpens source video with an unsharp mask at several levels,
//! encodes each level across a CRF ladder, and scores every level by its
//! Bjøntegaard-Delta bitrate against the unsharpened anchor. The level with the
//! largest saving becomes the video's pseudo-label. A small CNN that fuses
//! MobileNetV3-style features with block-DCT high-frequency residuals is then
//! trained to predict that label from the uncompressed frames alone.

pub mod codec;
pub mod error;
pub mod freq;
pub mod labeler;
pub mod media;
pub mod net;
pub mod rdcurve;
pub mod sharpen;

pub use error::{Error, Result};
