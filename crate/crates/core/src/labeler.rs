//! Pseudo-labels from a sharpening-level × CRF sweep.
//!
//! Every video is sharpened at each configured level and encoded at each CRF.
//! Each level's RD curve is compared against the unsharpened (level 0) curve
//! with BD-Rate, and the video is labeled with the level of lowest BD-Rate.
//! The anchor itself counts as BD-Rate 0, so a video that no level improves
//! is labeled 0.0. Ties within [`TIE_TOLERANCE`] go to the lower level.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_measure, EncodeJob, EncodeResult, EncoderAdapter, Metric, SyntheticEncoder, MAX_CRF};
use crate::error::{Error, Result};
use crate::media::{load_video, Video, VideoFormat};
use crate::rdcurve::{bd_rate, BdRateResult, RdCurve, RdPoint, MIN_POINTS};
use crate::sharpen::{usm_video, UsmParams, MAX_AMOUNT};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_LEVELS: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const DEFAULT_CRFS: [u32; 5] = [21, 24, 27, 30, 33];
pub const DEFAULT_FRAMES_PER_VIDEO: usize = 32;
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub levels: Vec<f64>,
    pub crfs: Vec<u32>,
    /// Encoder and, for external encoders, the quality metric.
    pub encoder: EncoderAdapter,
    /// Kernel and target used for every level; the amount is taken from `levels`.
    pub usm: UsmParams,
    /// Bound on concurrent encodes (and on videos in flight).
    pub jobs: usize,
    pub frames_per_video: usize,
    /// Score with PSNR when the configured VMAF tool cannot be launched.
    pub psnr_fallback: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            levels: DEFAULT_LEVELS.to_vec(),
            crfs: DEFAULT_CRFS.to_vec(),
            encoder: EncoderAdapter::Synthetic(SyntheticEncoder::default()),
            usm: UsmParams::default(),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            frames_per_video: DEFAULT_FRAMES_PER_VIDEO,
            psnr_fallback: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.levels.contains(&0.0) {
            return Err(Error::Config("sweep levels must include the 0.0 anchor".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!("sweep levels {:?} must be ascending and unique", self.levels)));
        }
        if let Some(l) = self.levels.iter().find(|l| !(0.0..=MAX_AMOUNT).contains(*l)) {
            return Err(Error::Config(format!("sweep level {l} outside [0, {MAX_AMOUNT}]")));
        }
        if self.crfs.len() < MIN_POINTS {
            return Err(Error::Config(format!("need at least {MIN_POINTS} CRFs for a cubic fit, got {}", self.crfs.len())));
        }
        let unique: HashSet<_> = self.crfs.iter().collect();
        if unique.len() != self.crfs.len() || self.crfs.iter().any(|&c| c > MAX_CRF) {
            return Err(Error::Config(format!("CRFs {:?} must be unique and within [0, {MAX_CRF}]", self.crfs)));
        }
        if self.jobs == 0 || self.frames_per_video == 0 {
            return Err(Error::Config("jobs and frames_per_video must be positive".into()));
        }
        UsmParams { amount: 0.0, ..self.usm }.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.encoder.validate()
    }

    /// Swaps an unlaunchable VMAF tool for PSNR when fallback is enabled.
    fn resolved(&self) -> SweepConfig {
        let mut cfg = self.clone();
        if let EncoderAdapter::External(enc) = &mut cfg.encoder {
            if let Metric::Vmaf(tool) = &enc.metric {
                if self.psnr_fallback && !tool.is_available() {
                    warn!("VMAF tool {} unavailable; scoring with PSNR", tool.binary.display());
                    enc.metric = Metric::Psnr;
                }
            }
        }
        cfg
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bd_rate: Option<BdRateResult>,
    /// Why BD-Rate could not be computed; such levels cannot be chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub schema: u32,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// The chosen sharpening level; absent when the sweep failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
    #[serde(default)]
    pub metric: String,
    /// One entry per non-anchor level.
    #[serde(default)]
    pub levels: Vec<LevelResult>,
    /// Every measured operating point (partial when `error` is set).
    #[serde(default)]
    pub points: Vec<EncodeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LabelRecord {
    fn failed(id: &str, path: Option<String>, metric: &str, points: Vec<EncodeResult>, error: String) -> Self {
        LabelRecord {
            schema: SCHEMA_VERSION,
            id: id.to_string(),
            path,
            label: None,
            metric: metric.to_string(),
            levels: Vec::new(),
            points,
            error: Some(error),
        }
    }
}

/// Argmin over `(level, bd_rate)` candidates, with the anchor's implicit
/// `(0.0, 0.0)` included. Ties within [`TIE_TOLERANCE`] go to the lower level.
pub fn choose_label(candidates: &[(f64, f64)]) -> f64 {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (0.0, 0.0);
    for (level, value) in sorted {
        if level > 0.0 && value < best.1 - TIE_TOLERANCE {
            best = (level, value);
        }
    }
    best.0
}

/// Labels one video with its own worker pool of `cfg.jobs` threads.
///
/// Encode failures produce an `Ok` record carrying the error and the points
/// measured so far; an unavailable adapter or an invalid config is an `Err`.
pub fn label_video(id: &str, v: &Video, cfg: &SweepConfig) -> Result<LabelRecord> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    cfg.pool()?.install(|| sweep(id, None, v, &cfg))
}

fn sweep(id: &str, path: Option<String>, v: &Video, cfg: &SweepConfig) -> Result<LabelRecord> {
    let metric = cfg.encoder.metric_name();
    let source = v.sample_uniform(cfg.frames_per_video);
    let inputs = cfg
        .levels
        .par_iter()
        .map(|&amount| usm_video(&source, &UsmParams { amount, ..cfg.usm }))
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<(usize, u32)> =
        (0..cfg.levels.len()).flat_map(|i| cfg.crfs.iter().map(move |&crf| (i, crf))).collect();
    let outcomes: Vec<Result<EncodeResult>> = grid
        .par_iter()
        .map(|&(i, crf)| {
            let job = EncodeJob { source: &source, input: &inputs[i], crf, level: cfg.levels[i] };
            encode_measure(&job, &cfg.encoder)
        })
        .collect();

    let mut points = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(p) => points.push(p),
            Err(e @ Error::AdapterUnavailable(_)) => return Err(e),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Ok(LabelRecord::failed(id, path, metric, points, format!("encode failed: {e}")));
    }

    let curve = |level: f64| {
        let pts = points
            .iter()
            .filter(|p| p.sharpening_level == level)
            .map(|p| RdPoint::new(p.bitrate_kbps, p.quality))
            .collect();
        RdCurve::new(pts, level)
    };
    let anchor = match curve(0.0) {
        Ok(c) => c,
        Err(e) => return Ok(LabelRecord::failed(id, path, metric, points, format!("anchor curve: {e}"))),
    };
    let levels: Vec<LevelResult> = cfg
        .levels
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&level| match curve(level).and_then(|test| bd_rate(&anchor, &test)) {
            Ok(r) => LevelResult { level, bd_rate: Some(r), error: None },
            Err(e) => {
                warn!("{id}: level {level} excluded: {e}");
                LevelResult { level, bd_rate: None, error: Some(e.to_string()) }
            }
        })
        .collect();
    let candidates: Vec<(f64, f64)> =
        levels.iter().filter_map(|l| l.bd_rate.as_ref().map(|r| (l.level, r.value))).collect();
    let label = choose_label(&candidates);
    info!("{id}: label {label}");
    Ok(LabelRecord {
        schema: SCHEMA_VERSION,
        id: id.to_string(),
        path,
        label: Some(label),
        metric: metric.to_string(),
        levels,
        points,
        error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Reads a JSONL manifest of `{"id": ..., "path": ...}` lines; blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::format("manifest", format!("line {}: {e}", n + 1)))?;
        if !seen.insert(entry.id.clone()) {
            return Err(Error::format("manifest", format!("line {}: duplicate id {:?}", n + 1, entry.id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads every record of a label manifest.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format("label manifest", format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub total: usize,
    /// Already present in the output and not re-run.
    pub skipped: usize,
    pub labeled: usize,
    pub failed: usize,
}

/// Labels every manifest entry not yet present in `out`, appending one JSONL
/// record per video in manifest order. Relative video paths resolve against
/// the manifest's directory. Per-video failures are written as error records;
/// only an unavailable adapter aborts the corpus. Records already in `out`,
/// including error records, are skipped; delete a line to retry it.
pub fn label_corpus(manifest_in: &Path, out: &Path, cfg: &SweepConfig) -> Result<CorpusSummary> {
    cfg.validate()?;
    let entries = read_manifest(manifest_in)?;
    let done: HashSet<String> = if out.exists() {
        read_labels(out)?.into_iter().map(|r| r.id).collect()
    } else {
        HashSet::new()
    };
    let pending: Vec<&ManifestEntry> = entries.iter().filter(|e| !done.contains(&e.id)).collect();
    let mut summary = CorpusSummary { total: entries.len(), skipped: entries.len() - pending.len(), ..Default::default() };

    let mut file = OpenOptions::new().create(true).append(true).open(out).map_err(|e| Error::io(out, e))?;
    if pending.is_empty() {
        return Ok(summary);
    }
    let cfg = cfg.resolved();
    let base = manifest_in.parent().unwrap_or(Path::new("."));
    let pool = cfg.pool()?;
    for chunk in pending.chunks(cfg.jobs) {
        let records: Vec<Result<LabelRecord>> =
            pool.install(|| chunk.par_iter().map(|e| label_entry(e, base, &cfg)).collect());
        for record in records {
            let record = record?;
            if record.error.is_some() {
                summary.failed += 1;
            } else {
                summary.labeled += 1;
            }
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.lock().map_err(|e| Error::io(out, e))?;
            let written = file.write_all(line.as_bytes()).and_then(|_| file.flush());
            file.unlock().map_err(|e| Error::io(out, e))?;
            written.map_err(|e| Error::io(out, e))?;
        }
    }
    Ok(summary)
}

fn label_entry(entry: &ManifestEntry, base: &Path, cfg: &SweepConfig) -> Result<LabelRecord> {
    let path = if entry.path.is_absolute() { entry.path.clone() } else { base.join(&entry.path) };
    let shown = Some(entry.path.to_string_lossy().into_owned());
    let metric = cfg.encoder.metric_name();
    let video = match load_video(&path, VideoFormat::detect(&path)) {
        Ok(v) => v,
        Err(e) => return Ok(LabelRecord::failed(&entry.id, shown, metric, Vec::new(), e.to_string())),
    };
    match sweep(&entry.id, shown.clone(), &video, cfg) {
        Err(e @ Error::AdapterUnavailable(_)) => Err(e),
        Err(e) => Ok(LabelRecord::failed(&entry.id, shown, metric, Vec::new(), e.to_string())),
        ok => ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ExternalEncoder;
    use crate::media::{store_video, ColorSpace, Frame};

    /// Gray checkerboard whose synthetic complexity is `c`.
    fn checkerboard(c: f64, frames: usize) -> Video {
        let a = (c / 2.0) as f32;
        let f = Frame::from_fn(16, 16, ColorSpace::Rgb, |x, y| [if (x + y) % 2 == 0 { 0.5 + a } else { 0.5 - a }; 3]);
        Video::new(vec![f; frames], 30.0).unwrap()
    }

    /// Closed-form BD-Rate of the synthetic model: both curves are straight
    /// lines in (quality, log10 rate) with slope log10(2) / (6 * 2.2), offset
    /// by log10(1 + 0.25 level) in rate and by g*level - h*level^2 in quality.
    fn oracle_label(g: f64, h: f64, levels: &[f64]) -> f64 {
        let slope = 2f64.log10() / (6.0 * 2.2);
        let mut best = (0.0, 0.0);
        for &l in levels.iter().filter(|&&l| l > 0.0) {
            let delta = g * l - h * l * l;
            let bd = (1.0 + 0.25 * l) * 10f64.powf(-slope * delta) - 1.0;
            if bd < best.1 - TIE_TOLERANCE {
                best = (l, bd);
            }
        }
        best.0
    }

    fn cfg() -> SweepConfig {
        SweepConfig { jobs: 2, frames_per_video: 4, ..Default::default() }
    }

    #[test]
    fn matches_closed_form_at_half_complexity() {
        let r = label_video("c05", &checkerboard(0.5, 6), &cfg()).unwrap();
        assert_eq!(r.label, Some(oracle_label(6.0, 2.0, &DEFAULT_LEVELS)));
        assert_eq!(r.points.len(), 35);
        assert_eq!(r.levels.len(), 6);
        assert_eq!(r.schema, 1);
        let slope = 2f64.log10() / 13.2;
        for lr in &r.levels {
            let l = lr.level;
            let want = (1.0 + 0.25 * l) * 10f64.powf(-slope * (6.0 * l - 2.0 * l * l)) - 1.0;
            assert!((lr.bd_rate.as_ref().unwrap().value - want).abs() < 1e-9);
        }
    }

    #[test]
    fn quality_that_only_falls_labels_zero() {
        let mut c = cfg();
        c.encoder = EncoderAdapter::Synthetic(SyntheticEncoder { gain_override: Some((0.0, 5.0)) });
        let r = label_video("flat", &checkerboard(0.5, 2), &c).unwrap();
        assert_eq!(r.label, Some(0.0));
        let values: Vec<f64> = r.levels.iter().filter_map(|l| l.bd_rate.as_ref().map(|b| b.value)).collect();
        assert!(!values.is_empty() && values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn levels_without_bd_rate_are_excluded() {
        // quality clamps to 0 at the upper levels: duplicate RD points, no curve
        let mut c = cfg();
        c.encoder = EncoderAdapter::Synthetic(SyntheticEncoder { gain_override: Some((0.0, 100.0)) });
        let r = label_video("clamped", &checkerboard(0.5, 2), &c).unwrap();
        assert_eq!(r.label, Some(0.0));
        assert!(r.levels.iter().any(|l| l.error.is_some() && l.bd_rate.is_none()));
    }

    #[test]
    fn ties_go_to_the_lower_level() {
        assert_eq!(choose_label(&[(1.0, -0.1), (0.5, -0.1 + 1e-13)]), 0.5);
        assert_eq!(choose_label(&[(0.5, -0.1), (1.0, -0.2)]), 1.0);
        assert_eq!(choose_label(&[(0.5, 0.0), (1.0, 5e-13)]), 0.0);
        assert_eq!(choose_label(&[]), 0.0);
    }

    #[test]
    fn label_is_monotone_in_quality_gain() {
        let video = checkerboard(0.5, 2);
        let mut last = 0.0;
        for g in [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0] {
            let mut c = cfg();
            c.encoder = EncoderAdapter::Synthetic(SyntheticEncoder { gain_override: Some((g, 2.0)) });
            let label = label_video("g", &video, &c).unwrap().label.unwrap();
            assert_eq!(label, oracle_label(g, 2.0, &DEFAULT_LEVELS));
            assert!(label >= last, "g={g}: {label} < {last}");
            last = label;
        }
        assert!(last >= 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SweepConfig { levels: vec![0.5, 1.0], ..cfg() },
            SweepConfig { levels: vec![0.0, 1.0, 0.5], ..cfg() },
            SweepConfig { levels: vec![0.0, 0.0, 1.0], ..cfg() },
            SweepConfig { crfs: vec![21, 27, 33], ..cfg() },
            SweepConfig { crfs: vec![21, 21, 27, 33], ..cfg() },
            SweepConfig { jobs: 0, ..cfg() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{:?}", (c.levels, c.crfs));
        }
        cfg().validate().unwrap();
    }

    #[test]
    fn encode_failure_keeps_partial_points() {
        let enc = ExternalEncoder::new("test {crf} -ne 30 && cp {input} {output}", "cp {input} {output}", Metric::Psnr)
            .unwrap();
        let c = SweepConfig {
            levels: vec![0.0, 1.0],
            crfs: vec![21, 24, 27, 30],
            encoder: EncoderAdapter::External(enc),
            ..cfg()
        };
        let r = label_video("broken", &checkerboard(0.5, 2), &c).unwrap();
        assert_eq!(r.label, None);
        assert!(r.error.unwrap().contains("encode failed"));
        assert_eq!(r.points.len(), 6);
    }

    #[test]
    fn unavailable_encoder_is_an_error() {
        let enc = ExternalEncoder::new("no-such-x265 {input} {output} {crf}", "cp {input} {output}", Metric::Psnr).unwrap();
        let c = SweepConfig { encoder: EncoderAdapter::External(enc), ..cfg() };
        assert!(matches!(label_video("x", &checkerboard(0.5, 2), &c), Err(Error::AdapterUnavailable(_))));
    }

    #[test]
    fn missing_vmaf_falls_back_to_psnr() {
        let mut enc = ExternalEncoder::new(
            "cp {input} {output} # {crf}",
            "cp {input} {output}",
            Metric::Vmaf(crate::codec::VmafTool::new("/no/such/vmaf")),
        )
        .unwrap();
        enc.quality_reference = crate::codec::QualityReference::Source;
        let c = SweepConfig { encoder: EncoderAdapter::External(enc), ..cfg() };
        assert_eq!(c.resolved().encoder.metric_name(), "psnr");
        let strict = SweepConfig { psnr_fallback: false, ..c };
        assert_eq!(strict.resolved().encoder.metric_name(), "vmaf");
    }

    fn write_corpus(dir: &Path, complexities: &[f64]) -> PathBuf {
        let mut manifest = String::new();
        for (i, &c) in complexities.iter().enumerate() {
            let name = format!("v{i}.raw");
            store_video(&checkerboard(c, 3), &dir.join(&name), VideoFormat::Raw).unwrap();
            manifest.push_str(&format!("{{\"id\":\"v{i}\",\"path\":\"{name}\"}}\n"));
        }
        let path = dir.join("manifest.jsonl");
        fs::write(&path, manifest).unwrap();
        path
    }

    #[test]
    fn corpus_labels_match_oracle_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let cs = [0.2, 0.5, 0.9];
        let manifest = write_corpus(dir.path(), &cs);
        let out = dir.path().join("labels.jsonl");
        let s = label_corpus(&manifest, &out, &cfg()).unwrap();
        assert_eq!(s, CorpusSummary { total: 3, skipped: 0, labeled: 3, failed: 0 });
        let records = read_labels(&out).unwrap();
        for (r, &c) in records.iter().zip(&cs) {
            // stored as 8-bit: complexity is the quantized checkerboard's
            let q = |v: f64| (v * 255.0).round() / 255.0;
            let cq = q(0.5 + c / 2.0) - q(0.5 - c / 2.0);
            assert_eq!(r.label, Some(oracle_label(12.0 * cq, 2.0 * cq + 1.0, &DEFAULT_LEVELS)), "c={c}");
        }
        let before = fs::read(&out).unwrap();
        let s = label_corpus(&manifest, &out, &cfg()).unwrap();
        assert_eq!((s.skipped, s.labeled, s.failed), (3, 0, 0));
        assert_eq!(fs::read(&out).unwrap(), before);
    }

    #[test]
    fn corpus_output_is_independent_of_job_count() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), &[0.3, 0.7, 0.1, 0.95]);
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        label_corpus(&manifest, &a, &SweepConfig { jobs: 1, ..cfg() }).unwrap();
        label_corpus(&manifest, &b, &SweepConfig { jobs: 3, ..cfg() }).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    #[test]
    fn bad_entries_are_recorded_inline() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), &[0.5]);
        let mut text = fs::read_to_string(&manifest).unwrap();
        text.insert_str(0, "{\"id\":\"gone\",\"path\":\"missing.raw\"}\n");
        fs::write(&manifest, text).unwrap();
        let out = dir.path().join("labels.jsonl");
        let s = label_corpus(&manifest, &out, &cfg()).unwrap();
        assert_eq!((s.labeled, s.failed), (1, 1));
        let records = read_labels(&out).unwrap();
        assert_eq!(records[0].id, "gone");
        assert!(records[0].error.is_some() && records[0].label.is_none());
        assert!(records[1].label.is_some());
    }

    #[test]
    fn empty_manifest_gives_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.jsonl");
        fs::write(&manifest, "").unwrap();
        let out = dir.path().join("o.jsonl");
        assert_eq!(label_corpus(&manifest, &out, &cfg()).unwrap().total, 0);
        assert_eq!(fs::read(&out).unwrap(), b"");
    }

    #[test]
    fn records_round_trip_through_json() {
        let r = label_video("rt", &checkerboard(0.6, 2), &cfg()).unwrap();
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with("{\"schema\":1,"));
        assert_eq!(serde_json::from_str::<LabelRecord>(&line).unwrap(), r);
    }
}
