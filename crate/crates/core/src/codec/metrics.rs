//! Native full-reference luma metrics.

use crate::error::{Error, Result};
use crate::media::Video;

/// PSNR reported for (near-)identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 8;
const SSIM_STRIDE: usize = 4;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_pair(a: &Video, b: &Video) -> Result<()> {
    if a.len() != b.len() || a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.len(),
            b.width(),
            b.height(),
            b.len()
        )));
    }
    Ok(())
}

fn frame_psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// Mean over frames of luma PSNR (peak 1.0), in dB.
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    check_pair(a, b)?;
    let total: f64 = a
        .frames()
        .iter()
        .zip(b.frames())
        .map(|(fa, fb)| frame_psnr(&fa.luma(), &fb.luma()))
        .sum();
    Ok(total / a.len() as f64)
}

fn frame_ssim(a: &[f32], b: &[f32], width: usize, height: usize) -> f64 {
    let (ww, wh) = (SSIM_WINDOW.min(width), SSIM_WINDOW.min(height));
    let starts = |len: usize, win: usize| {
        let mut s: Vec<usize> = (0..=len - win).step_by(SSIM_STRIDE).collect();
        if *s.last().unwrap() != len - win {
            s.push(len - win);
        }
        s
    };
    let (xs, ys) = (starts(width, ww), starts(height, wh));
    let n = (ww * wh) as f64;
    let mut total = 0.0;
    for &y0 in &ys {
        for &x0 in &xs {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wh {
                for x in x0..x0 + ww {
                    let (p, q) = (a[y * width + x] as f64, b[y * width + x] as f64);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    total / (xs.len() * ys.len()) as f64
}

/// Mean luma SSIM over 8×8 windows (stride 4), averaged over frames.
pub fn ssim(a: &Video, b: &Video) -> Result<f64> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    let total: f64 = a
        .frames()
        .iter()
        .zip(b.frames())
        .map(|(fa, fb)| frame_ssim(&fa.luma(), &fb.luma(), w, h))
        .sum();
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{ColorSpace, Frame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat(v: f32, n: usize) -> Video {
        Video::new(vec![Frame::filled(16, 16, ColorSpace::Rgb, [v; 3]); n], 30.0).unwrap()
    }

    fn noisy(seed: u64) -> Video {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..2)
            .map(|_| Frame::from_fn(20, 12, ColorSpace::Rgb, |_, _| [rng.gen(), rng.gen(), rng.gen()]))
            .collect();
        Video::new(frames, 30.0).unwrap()
    }

    #[test]
    fn identical_inputs_hit_the_ceiling() {
        let v = noisy(1);
        assert_eq!(psnr(&v, &v).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_vs_mid_gray() {
        let got = psnr(&flat(0.0, 2), &flat(0.5, 2)).unwrap();
        assert!((got - 10.0 * 4f64.log10()).abs() < 1e-6, "{got}");
        assert!((got - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn metrics_are_symmetric() {
        let (a, b) = (noisy(2), noisy(3));
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
        assert!(ssim(&a, &b).unwrap() < 0.5);
    }

    #[test]
    fn mismatched_videos_fail() {
        assert!(matches!(psnr(&flat(0.0, 2), &flat(0.0, 3)), Err(Error::DimensionMismatch(_))));
        assert!(ssim(&flat(0.0, 1), &noisy(1)).is_err());
    }
}
