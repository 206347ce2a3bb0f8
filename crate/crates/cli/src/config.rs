//! Flat `section.key = value` configuration files.
//!
//! Sections are `sweep`, `encoder`, `net` and `train`, plus a top-level
//! `seed`. Blank lines and `#` comments are ignored; string values may be
//! double-quoted. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use freqsp::codec::synthetic::SyntheticEncoder;
use freqsp::codec::vmaf::VmafTool;
use freqsp::codec::{EncoderAdapter, ExternalEncoder, Metric, QualityReference, DEFAULT_TIMEOUT};
use freqsp::labeler::SweepConfig;
use freqsp::net::{FreqSpConfig, TrainConfig};
use freqsp::sharpen::UsmTarget;

/// Bad invocation: flags, config files or their values. Exits with code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

pub const DEFAULT_TRAIN_FRAMES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub seed: u64,
    pub sweep: SweepConfig,
    pub net: FreqSpConfig,
    pub train: TrainConfig,
    /// Frames sampled per video for training.
    pub train_frames: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            seed: 0,
            sweep: SweepConfig::default(),
            net: FreqSpConfig::default(),
            train: TrainConfig::default(),
            train_frames: DEFAULT_TRAIN_FRAMES,
        }
    }
}

/// Encoder keys are collected first, since the adapter kind decides which apply.
#[derive(Default)]
struct EncoderKeys {
    kind: Option<String>,
    gain: Option<(f64, f64)>,
    encode: Option<String>,
    decode: Option<String>,
    metric: Option<String>,
    vmaf_binary: Option<PathBuf>,
    vmaf_model: Option<String>,
    timeout_secs: Option<f64>,
    quality_reference: Option<QualityReference>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| usage(format!("{key} = {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, UsageError>
where
    T::Err: fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

impl GlobalConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), unquote(value.trim()).to_string()).is_some() {
                return Err(usage(format!("config line {}: {key} set twice", n + 1)));
            }
        }
        let mut cfg = GlobalConfig::default();
        let mut enc = EncoderKeys::default();
        for (key, value) in &entries {
            cfg.apply(&mut enc, key, value)?;
        }
        cfg.sweep.encoder = enc.build()?;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    fn apply(&mut self, enc: &mut EncoderKeys, key: &str, v: &str) -> Result<(), UsageError> {
        let (s, n, t) = (&mut self.sweep, &mut self.net, &mut self.train);
        match key {
            "seed" => self.seed = parse(key, v)?,
            "sweep.levels" => s.levels = parse_list(key, v)?,
            "sweep.crfs" => s.crfs = parse_list(key, v)?,
            "sweep.jobs" => s.jobs = parse(key, v)?,
            "sweep.frames_per_video" => s.frames_per_video = parse(key, v)?,
            "sweep.psnr_fallback" => s.psnr_fallback = parse(key, v)?,
            "sweep.usm_kernel" => s.usm.kernel = parse(key, v)?,
            "sweep.usm_target" => {
                s.usm.target = match v {
                    "luma-only" => UsmTarget::LumaOnly,
                    "all-channels" => UsmTarget::AllChannels,
                    _ => return Err(usage(format!("{key} must be luma-only or all-channels, got {v:?}"))),
                }
            }
            "encoder.kind" => enc.kind = Some(v.to_string()),
            "encoder.gain" => match parse_list::<f64>(key, v)?[..] {
                [g, h] => enc.gain = Some((g, h)),
                _ => return Err(usage(format!("{key} takes two numbers g, h"))),
            },
            "encoder.encode" => enc.encode = Some(v.to_string()),
            "encoder.decode" => enc.decode = Some(v.to_string()),
            "encoder.metric" => enc.metric = Some(v.to_string()),
            "encoder.vmaf_binary" => enc.vmaf_binary = Some(PathBuf::from(v)),
            "encoder.vmaf_model" => enc.vmaf_model = Some(v.to_string()),
            "encoder.timeout_secs" => enc.timeout_secs = Some(parse(key, v)?),
            "encoder.quality_reference" => {
                enc.quality_reference = Some(match v {
                    "source" => QualityReference::Source,
                    "sharpened" => QualityReference::Sharpened,
                    _ => return Err(usage(format!("{key} must be source or sharpened, got {v:?}"))),
                })
            }
            "net.depth" => n.depth = parse(key, v)?,
            "net.se_free_prefix" => n.se_free_prefix = parse(key, v)?,
            "net.width_mult" => n.width_mult = parse(key, v)?,
            "net.hf_enabled" => n.hf_enabled = parse(key, v)?,
            "net.input_size" => n.input_size = parse(key, v)?,
            "net.nlr_reduction" => n.nlr_reduction = parse(key, v)?,
            "net.strides" => n.strides = parse_list(key, v)?,
            "net.patch_block" => n.patch_block = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.weight_decay" => t.weight_decay = parse(key, v)?,
            "train.batch" => t.batch = parse(key, v)?,
            "train.lambda_mono" => t.lambda_mono = parse(key, v)?,
            "train.steps" => t.steps = parse(key, v)?,
            "train.deterministic" => t.deterministic = parse(key, v)?,
            "train.frames_per_video" => self.train_frames = parse(key, v)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

impl EncoderKeys {
    fn build(self) -> Result<EncoderAdapter, UsageError> {
        let external_only = [
            ("encoder.encode", self.encode.is_some()),
            ("encoder.decode", self.decode.is_some()),
            ("encoder.metric", self.metric.is_some()),
            ("encoder.vmaf_binary", self.vmaf_binary.is_some()),
            ("encoder.vmaf_model", self.vmaf_model.is_some()),
            ("encoder.timeout_secs", self.timeout_secs.is_some()),
            ("encoder.quality_reference", self.quality_reference.is_some()),
        ];
        match self.kind.as_deref().unwrap_or("synthetic") {
            "synthetic" => {
                if let Some((key, _)) = external_only.iter().find(|(_, set)| *set) {
                    return Err(usage(format!("{key} applies only to encoder.kind = external")));
                }
                Ok(EncoderAdapter::Synthetic(SyntheticEncoder { gain_override: self.gain }))
            }
            "external" => {
                if self.gain.is_some() {
                    return Err(usage("encoder.gain applies only to encoder.kind = synthetic"));
                }
                let timeout = match self.timeout_secs {
                    Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
                    Some(s) => return Err(usage(format!("encoder.timeout_secs must be positive, got {s}"))),
                    None => DEFAULT_TIMEOUT,
                };
                let metric = match self.metric.as_deref().unwrap_or("vmaf") {
                    "psnr" => Metric::Psnr,
                    "ssim" => Metric::Ssim,
                    "vmaf" => {
                        let mut tool = VmafTool::new(self.vmaf_binary.unwrap_or_else(|| PathBuf::from("vmaf")));
                        tool.model = self.vmaf_model;
                        tool.timeout = timeout;
                        Metric::Vmaf(tool)
                    }
                    other => return Err(usage(format!("encoder.metric must be psnr, ssim or vmaf, got {other:?}"))),
                };
                let (Some(encode), Some(decode)) = (self.encode, self.decode) else {
                    return Err(usage("encoder.kind = external needs encoder.encode and encoder.decode"));
                };
                let mut e = ExternalEncoder::new(encode, decode, metric).map_err(|e| usage(e.to_string()))?;
                e.timeout = timeout;
                e.quality_reference = self.quality_reference.unwrap_or_default();
                Ok(EncoderAdapter::External(e))
            }
            other => Err(usage(format!("encoder.kind must be synthetic or external, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(GlobalConfig::parse("# nothing\n\n").unwrap(), GlobalConfig::default());
    }

    #[test]
    fn keys_land_in_their_sections() {
        let cfg = GlobalConfig::parse(
            "seed = 7\nsweep.levels = 0, 1, 2\nsweep.crfs = 20,25,30,35\nsweep.jobs = 2\n\
             net.depth = 2 # inline comment\nnet.strides = 2,1\ntrain.steps = 5\nencoder.gain = 3, 1.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.sweep.levels, vec![0.0, 1.0, 2.0]);
        assert_eq!(cfg.sweep.crfs, vec![20, 25, 30, 35]);
        assert_eq!(cfg.sweep.jobs, 2);
        assert_eq!(cfg.net.strides, vec![2, 1]);
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.sweep.encoder, EncoderAdapter::Synthetic(SyntheticEncoder { gain_override: Some((3.0, 1.5)) }));
    }

    #[test]
    fn external_encoder_section() {
        let cfg = GlobalConfig::parse(
            "encoder.kind = external\nencoder.encode = \"enc {input} {output} {crf}\"\n\
             encoder.decode = dec {input} {output}\nencoder.metric = psnr\nencoder.timeout_secs = 5\n",
        )
        .unwrap();
        let EncoderAdapter::External(e) = cfg.sweep.encoder else { panic!("expected external") };
        assert_eq!(e.encode, "enc {input} {output} {crf}");
        assert_eq!(e.metric, Metric::Psnr);
        assert_eq!(e.timeout, Duration::from_secs(5));
    }

    #[test]
    fn rejects_typos_and_misplaced_keys() {
        for bad in [
            "sweep.level = 0,1",
            "seed 3",
            "seed = 1\nseed = 2",
            "train.lr = fast",
            "encoder.metric = psnr",
            "encoder.kind = external\nencoder.encode = x {input} {output}\nencoder.decode = d {input} {output}",
            "encoder.kind = external\nencoder.gain = 1,1",
            "sweep.usm_target = chroma",
        ] {
            assert!(GlobalConfig::parse(bad).is_err(), "{bad:?}");
        }
    }
}
