//! A closed-form stand-in for "sharpen, encode with HEVC, score with VMAF".
//!
//! ```text
//! bitrate = 1000 * c * 2^((27 - crf) / 6) * (1 + 0.25 * level)          kbps
//! quality = clamp(85 - 2.2 * (crf - 21) + g * level - h * level^2, 0, 100)
//! g = 12 * c,  h = 2 * c + 1
//! ```
//!
//! `c` in (0, 1] is the source video's complexity. Quality is a downward
//! parabola in the sharpening level with its peak at `g / 2h`, while bitrate
//! keeps climbing, so the BD-Rate optimum sits below the quality optimum. Over
//! the default sweep (levels 0..=3, CRF 21..=33) quality never reaches the
//! clamp, so RD points stay distinct.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Video;

pub const MIN_COMPLEXITY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntheticEncoder {
    /// Replaces the complexity-derived `(g, h)` quality coefficients.
    pub gain_override: Option<(f64, f64)>,
}

impl SyntheticEncoder {
    pub fn coefficients(&self, complexity: f64) -> (f64, f64) {
        self.gain_override.unwrap_or((12.0 * complexity, 2.0 * complexity + 1.0))
    }

    /// `(bitrate_kbps, quality)` for one operating point.
    pub fn model(&self, level: f64, crf: u32, complexity: f64) -> Result<(f64, f64)> {
        if !(0.0..=4.0).contains(&level) {
            return Err(Error::contract(format!("level {level} outside [0, 4]")));
        }
        if crf > 51 {
            return Err(Error::contract(format!("crf {crf} outside [0, 51]")));
        }
        if !(complexity > 0.0 && complexity <= 1.0) {
            return Err(Error::contract(format!("complexity {complexity} outside (0, 1]")));
        }
        let crf = crf as f64;
        let bitrate = 1000.0 * complexity * 2f64.powf((27.0 - crf) / 6.0) * (1.0 + 0.25 * level);
        let (g, h) = self.coefficients(complexity);
        let quality = (85.0 - 2.2 * (crf - 21.0) + g * level - h * level * level).clamp(0.0, 100.0);
        Ok((bitrate, quality))
    }
}

/// Complexity of a source video: twice the population standard deviation of
/// its luma samples, clamped to `[MIN_COMPLEXITY, 1]`.
pub fn complexity(v: &Video) -> f64 {
    let (mut n, mut sum, mut sum_sq) = (0.0f64, 0.0f64, 0.0f64);
    for f in v.frames() {
        for &y in &f.luma() {
            let y = y as f64;
            n += 1.0;
            sum += y;
            sum_sq += y * y;
        }
    }
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (2.0 * var.sqrt()).clamp(MIN_COMPLEXITY, 1.0)
}
