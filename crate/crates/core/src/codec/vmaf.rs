//! VMAF through the libvmaf command-line tool.
//!
//! Both videos are written as headerless 8-bit planar 4:4:4 YCbCr and the tool
//! is asked for JSON output; the score is `pooled_metrics.vmaf.mean`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::process;
use crate::error::{Error, Result};
use crate::media::{write_raw, ColorSpace, Video};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmafTool {
    pub binary: PathBuf,
    /// Passed as `--model` when set, e.g. `version=vmaf_v0.6.1`.
    pub model: Option<String>,
    pub timeout: Duration,
}

impl VmafTool {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        VmafTool { binary: binary.into(), model: None, timeout: super::DEFAULT_TIMEOUT }
    }

    /// Whether the binary can be launched at all (`--version`).
    pub fn is_available(&self) -> bool {
        let mut cmd = Command::new(&self.binary);
        cmd.arg("--version");
        !matches!(process::run(cmd, PROBE_TIMEOUT), Err(Error::AdapterUnavailable(_)))
    }
}

const PROBE_TIMEOUT: Duration = Duration::from_secs(10);

fn write_yuv444(v: &Video, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_raw(v, &mut w, ColorSpace::YCbCr, false).map_err(|e| Error::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

/// Extracts the pooled mean VMAF from libvmaf's JSON log.
pub fn parse_vmaf_json(text: &str) -> Result<f64> {
    let bad = |detail: &str| Error::Adapter { message: format!("unparsable VMAF output: {detail}"), output: text.to_string() };
    let json: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
    let score = json
        .pointer("/pooled_metrics/vmaf/mean")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| bad("missing pooled_metrics.vmaf.mean"))?;
    if !score.is_finite() {
        return Err(bad("non-finite score"));
    }
    Ok(score)
}

/// Scores `distorted` against `reference` with the external VMAF tool.
pub fn vmaf_adapter(reference: &Video, distorted: &Video, tool: &VmafTool) -> Result<f64> {
    if reference.len() != distorted.len()
        || reference.width() != distorted.width()
        || reference.height() != distorted.height()
    {
        return Err(Error::DimensionMismatch("VMAF inputs differ in shape".into()));
    }
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let (ref_path, dist_path, out_path) =
        (dir.path().join("reference.yuv"), dir.path().join("distorted.yuv"), dir.path().join("vmaf.json"));
    write_yuv444(reference, &ref_path)?;
    write_yuv444(distorted, &dist_path)?;

    let mut cmd = Command::new(&tool.binary);
    cmd.arg("--reference")
        .arg(&ref_path)
        .arg("--distorted")
        .arg(&dist_path)
        .arg("--width")
        .arg(reference.width().to_string())
        .arg("--height")
        .arg(reference.height().to_string())
        .args(["--pixel_format", "444", "--bitdepth", "8", "--json", "--output"])
        .arg(&out_path);
    if let Some(model) = &tool.model {
        cmd.arg("--model").arg(model);
    }
    let captured = process::run(cmd, tool.timeout)?;
    let text = fs::read_to_string(&out_path).map_err(|_| Error::Adapter {
        message: "VMAF tool wrote no JSON log".into(),
        output: captured.combined(),
    })?;
    parse_vmaf_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_distinguishes_missing_binaries() {
        assert!(!VmafTool::new("/no/such/vmaf").is_available());
        assert!(VmafTool::new("true").is_available());
    }

    #[test]
    fn parses_libvmaf_log() {
        let text = r#"{"version":"3.0.0","frames":[],"pooled_metrics":{"vmaf":{"min":90.1,"max":99.0,"mean":95.25,"harmonic_mean":95.2}}}"#;
        assert_eq!(parse_vmaf_json(text).unwrap(), 95.25);
    }

    #[test]
    fn malformed_logs_carry_the_raw_text() {
        for text in ["not json", r#"{"pooled_metrics":{}}"#] {
            match parse_vmaf_json(text) {
                Err(Error::Adapter { output, .. }) => assert_eq!(output, text),
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}
