//! Encoder and quality-metric adapters.
//!
//! An [`EncoderAdapter`] turns one (video, CRF) operating point into an
//! [`EncodeResult`]: a measured bitrate and a quality score. The external
//! adapter shells out to user-supplied encode/decode command templates; the
//! synthetic adapter evaluates a closed-form model so that labeling can be
//! tested without an encoder farm.

pub mod metrics;
mod process;
pub mod synthetic;
pub mod vmaf;

use std::fs;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{load_video, store_video, Video, VideoFormat};
pub use metrics::{psnr, ssim};
pub use synthetic::SyntheticEncoder;
pub use vmaf::{vmaf_adapter, VmafTool};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const MAX_CRF: u32 = 51;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub bitrate_kbps: f64,
    pub quality: f64,
    pub metric_name: String,
    pub crf: u32,
    pub sharpening_level: f64,
}

/// What the decoded video is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityReference {
    /// The unsharpened source.
    Source,
    /// The sharpened video that was handed to the encoder.
    #[default]
    Sharpened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    Psnr,
    Ssim,
    Vmaf(VmafTool),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Vmaf(_) => "vmaf",
        }
    }

    pub fn measure(&self, reference: &Video, distorted: &Video) -> Result<f64> {
        match self {
            Metric::Psnr => psnr(reference, distorted),
            Metric::Ssim => ssim(reference, distorted),
            Metric::Vmaf(tool) => vmaf_adapter(reference, distorted, tool),
        }
    }
}

/// Encoder driven through shell command templates.
///
/// `encode` must contain `{input}`, `{output}` and `{crf}`; `decode` must contain
/// `{input}` and `{output}`. Inputs handed to `encode` and outputs expected from
/// `decode` use the raw video format (see [`crate::media::VideoFormat::Raw`]).
/// An x265 setup might wrap ffmpeg in a small script taking those three arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEncoder {
    pub encode: String,
    pub decode: String,
    pub metric: Metric,
    pub timeout: Duration,
    pub quality_reference: QualityReference,
}

impl ExternalEncoder {
    pub fn new(encode: impl Into<String>, decode: impl Into<String>, metric: Metric) -> Result<Self> {
        let e = ExternalEncoder {
            encode: encode.into(),
            decode: decode.into(),
            metric,
            timeout: DEFAULT_TIMEOUT,
            quality_reference: QualityReference::default(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for key in ["{input}", "{output}", "{crf}"] {
            if !self.encode.contains(key) {
                return Err(Error::Config(format!("encode template {:?} lacks {key}", self.encode)));
            }
        }
        for key in ["{input}", "{output}"] {
            if !self.decode.contains(key) {
                return Err(Error::Config(format!("decode template {:?} lacks {key}", self.decode)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderAdapter {
    Synthetic(SyntheticEncoder),
    External(ExternalEncoder),
}

impl EncoderAdapter {
    pub fn metric_name(&self) -> &'static str {
        match self {
            EncoderAdapter::Synthetic(_) => "synthetic",
            EncoderAdapter::External(e) => e.metric.name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderAdapter::Synthetic(_) => Ok(()),
            EncoderAdapter::External(e) => e.validate(),
        }
    }
}

/// One operating point of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct EncodeJob<'a> {
    /// The unsharpened source (complexity for the synthetic model, or quality reference).
    pub source: &'a Video,
    /// What the encoder receives: the source sharpened at `level`.
    pub input: &'a Video,
    pub crf: u32,
    pub level: f64,
}

pub fn encode_measure(job: &EncodeJob<'_>, adapter: &EncoderAdapter) -> Result<EncodeResult> {
    if job.crf > MAX_CRF {
        return Err(Error::contract(format!("crf {} outside [0, {MAX_CRF}]", job.crf)));
    }
    if job.input.is_empty() || job.source.is_empty() {
        return Err(Error::contract("cannot encode an empty video"));
    }
    let (bitrate_kbps, quality) = match adapter {
        EncoderAdapter::Synthetic(model) => {
            model.model(job.level, job.crf, synthetic::complexity(job.source))?
        }
        EncoderAdapter::External(enc) => encode_external(job, enc)?,
    };
    if !(bitrate_kbps > 0.0 && bitrate_kbps.is_finite()) || !quality.is_finite() {
        return Err(Error::Adapter {
            message: format!("implausible measurement: {bitrate_kbps} kbps, quality {quality}"),
            output: String::new(),
        });
    }
    Ok(EncodeResult {
        bitrate_kbps,
        quality,
        metric_name: adapter.metric_name().to_string(),
        crf: job.crf,
        sharpening_level: job.level,
    })
}

fn encode_external(job: &EncodeJob<'_>, enc: &ExternalEncoder) -> Result<(f64, f64)> {
    enc.validate()?;
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input = dir.path().join("input.raw");
    let encoded = dir.path().join("encoded.bin");
    let decoded = dir.path().join("decoded.raw");
    store_video(job.input, &input, VideoFormat::Raw)?;

    let crf = job.crf.to_string();
    let path_str = |p: &std::path::Path| p.to_string_lossy().into_owned();
    let (input_s, encoded_s, decoded_s) = (path_str(&input), path_str(&encoded), path_str(&decoded));
    process::run(
        process::shell_command(&enc.encode, &[("input", &input_s), ("output", &encoded_s), ("crf", &crf)]),
        enc.timeout,
    )?;
    let bytes = fs::metadata(&encoded).map_err(|e| Error::io(&encoded, e))?.len();
    let bitrate_kbps = bytes as f64 * 8.0 / job.input.duration_secs() / 1000.0;

    process::run(
        process::shell_command(&enc.decode, &[("input", &encoded_s), ("output", &decoded_s)]),
        enc.timeout,
    )?;
    let decoded_video = load_video(&decoded, VideoFormat::Raw)?;
    let reference = match enc.quality_reference {
        QualityReference::Source => job.source,
        QualityReference::Sharpened => job.input,
    };
    let quality = enc.metric.measure(reference, &decoded_video)?;
    Ok((bitrate_kbps, quality))
}
