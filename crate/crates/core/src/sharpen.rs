//! Unsharp masking: `out = I + amount * (I - lowpass(I))`, clamped to `[0, 1]`.
//!
//! The low-pass is a separable k×k box mean with replicated borders. By default
//! only luma is sharpened; on RGB input that is done without a colorspace round
//! trip, since raising Y with Cb/Cr held fixed raises R, G and B by the same amount.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{ColorSpace, Frame, Video, CHANNELS};

pub const MAX_AMOUNT: f64 = 4.0;
pub const MIN_KERNEL: usize = 3;
pub const MAX_KERNEL: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UsmTarget {
    LumaOnly,
    AllChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsmParams {
    pub amount: f64,
    pub kernel: usize,
    pub target: UsmTarget,
}

impl Default for UsmParams {
    fn default() -> Self {
        UsmParams { amount: 0.0, kernel: 5, target: UsmTarget::LumaOnly }
    }
}

impl UsmParams {
    pub fn with_amount(amount: f64) -> Self {
        UsmParams { amount, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amount.is_finite() && (0.0..=MAX_AMOUNT).contains(&self.amount)) {
            return Err(Error::contract(format!(
                "sharpening amount must lie in [0, {MAX_AMOUNT}], got {}",
                self.amount
            )));
        }
        check_kernel(self.kernel)?;
        if self.kernel > MAX_KERNEL {
            return Err(Error::contract(format!("kernel size {} exceeds {MAX_KERNEL}", self.kernel)));
        }
        Ok(())
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k % 2 == 0 || k < MIN_KERNEL {
        return Err(Error::contract(format!("kernel size must be odd and >= {MIN_KERNEL}, got {k}")));
    }
    Ok(())
}

/// Separable box mean over a `width`×`height` plane with edge replication.
pub fn box_blur_plane(src: &[f64], width: usize, height: usize, k: usize) -> Vec<f64> {
    assert_eq!(src.len(), width * height);
    let r = (k / 2) as isize;
    let norm = 1.0 / k as f64;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += row[clampi(x as isize + d, width)];
            }
            tmp[y * width + x] = acc * norm;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += tmp[clampi(y as isize + d, height) * width + x];
            }
            out[y * width + x] = acc * norm;
        }
    }
    out
}

/// The scaled detail layer `amount * (I - lowpass(I))`, before any clamping.
pub fn detail_plane(src: &[f64], width: usize, height: usize, k: usize, amount: f64) -> Vec<f64> {
    let lp = box_blur_plane(src, width, height, k);
    src.iter().zip(&lp).map(|(&i, &l)| amount * (i - l)).collect()
}

/// Unsharp mask of a single plane without clamping.
pub fn usm_plane_unclamped(src: &[f64], width: usize, height: usize, k: usize, amount: f64) -> Vec<f64> {
    let detail = detail_plane(src, width, height, k, amount);
    src.iter().zip(&detail).map(|(&i, &d)| i + d).collect()
}

/// Box low-pass of every channel of `f`.
pub fn lowpass(f: &Frame, k: usize) -> Result<Frame> {
    check_kernel(k)?;
    let (w, h) = (f.width(), f.height());
    let mut data = Vec::with_capacity(f.data().len());
    for c in 0..CHANNELS {
        let plane: Vec<f64> = f.plane(c).iter().map(|&v| v as f64).collect();
        data.extend(box_blur_plane(&plane, w, h, k).into_iter().map(|v| v as f32));
    }
    Ok(f.with_data(data))
}

fn to_f64(p: &[f32]) -> Vec<f64> {
    p.iter().map(|&v| v as f64).collect()
}

fn add_clamped(dst: &mut [f32], detail: &[f64]) {
    for (v, &d) in dst.iter_mut().zip(detail) {
        *v = (*v as f64 + d).clamp(0.0, 1.0) as f32;
    }
}

pub fn usm(f: &Frame, p: &UsmParams) -> Result<Frame> {
    p.validate()?;
    if p.amount == 0.0 {
        return Ok(f.clone());
    }
    let (w, h) = (f.width(), f.height());
    let mut out = f.clone();
    match (p.target, f.colorspace()) {
        (UsmTarget::AllChannels, _) => {
            for c in 0..CHANNELS {
                let detail = detail_plane(&to_f64(f.plane(c)), w, h, p.kernel, p.amount);
                add_clamped(out.plane_mut(c), &detail);
            }
        }
        (UsmTarget::LumaOnly, ColorSpace::YCbCr) => {
            let detail = detail_plane(&to_f64(f.plane(0)), w, h, p.kernel, p.amount);
            add_clamped(out.plane_mut(0), &detail);
        }
        (UsmTarget::LumaOnly, ColorSpace::Rgb) => {
            let detail = detail_plane(&to_f64(&f.luma()), w, h, p.kernel, p.amount);
            for c in 0..CHANNELS {
                add_clamped(out.plane_mut(c), &detail);
            }
        }
    }
    Ok(out)
}

pub fn usm_video(v: &Video, p: &UsmParams) -> Result<Video> {
    p.validate()?;
    let frames = v
        .frames()
        .par_iter()
        .map(|f| usm(f, p))
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames, v.frame_rate())
}
