//! 8×8 block DCT-II / IDCT (orthonormal) and high-frequency residual extraction.
//!
//! A [`FreqMap`] holds 64 coefficient planes per source channel, each plane
//! `H/8 × W/8`, with the 64 planes of a channel in zigzag (low to high
//! frequency) order. Channel groups are ordered Y, Cb, Cr.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::media::{ColorSpace, Frame, CHANNELS};

pub const BLOCK: usize = 8;
pub const COEFFS: usize = BLOCK * BLOCK;

/// `ZIGZAG[k]` is the row-major index (`row * 8 + col`) of the k-th coefficient in zigzag order.
pub const ZIGZAG: [usize; COEFFS] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

// basis[u][x] = alpha(u) * cos((2x + 1) u pi / 16)
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0 / BLOCK as f64).sqrt() } else { (2.0 / BLOCK as f64).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * x + 1) as f64 * u as f64 * PI / (2 * BLOCK) as f64).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of one row-major 8×8 block.
pub fn dct8x8(block: &[f64; COEFFS]) -> [f64; COEFFS] {
    let c = basis();
    let mut tmp = [0.0; COEFFS];
    // rows: tmp[y][u] = sum_x c[u][x] * b[y][x]
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|x| c[u][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0; COEFFS];
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            out[v * BLOCK + u] = (0..BLOCK).map(|y| c[v][y] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coef: &[f64; COEFFS]) -> [f64; COEFFS] {
    let c = basis();
    let mut tmp = [0.0; COEFFS];
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|v| c[v][y] * coef[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0; COEFFS];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|u| c[u][x] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqMap {
    blocks_x: usize,
    blocks_y: usize,
    /// `[channel * 64 + zigzag_index][by][bx]`, flattened.
    planes: Vec<f64>,
}

impl FreqMap {
    pub fn zeros(blocks_x: usize, blocks_y: usize) -> Self {
        FreqMap { blocks_x, blocks_y, planes: vec![0.0; CHANNELS * COEFFS * blocks_x * blocks_y] }
    }

    pub fn blocks_x(&self) -> usize {
        self.blocks_x
    }

    pub fn blocks_y(&self) -> usize {
        self.blocks_y
    }

    pub fn num_planes(&self) -> usize {
        CHANNELS * COEFFS
    }

    fn plane_len(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    /// Plane `index` (`channel * 64 + zigzag position`), `H/8 × W/8`, row-major.
    pub fn plane(&self, index: usize) -> &[f64] {
        let n = self.plane_len();
        &self.planes[index * n..(index + 1) * n]
    }

    pub fn plane_mut(&mut self, index: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.planes[index * n..(index + 1) * n]
    }

    /// Zeroes the first `count` zigzag planes of every channel group.
    pub fn drop_low_planes(&mut self, count: usize) {
        for c in 0..CHANNELS {
            for k in 0..count.min(COEFFS) {
                self.plane_mut(c * COEFFS + k).fill(0.0);
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.planes
    }
}

fn read_block(plane: &[f32], width: usize, bx: usize, by: usize) -> [f64; COEFFS] {
    let mut b = [0.0; COEFFS];
    for y in 0..BLOCK {
        let row = (by * BLOCK + y) * width + bx * BLOCK;
        for x in 0..BLOCK {
            b[y * BLOCK + x] = plane[row + x] as f64;
        }
    }
    b
}

/// Per-block DCT of every channel of a YCbCr frame whose sides are multiples of 8.
pub fn block_dct(f: &Frame) -> Result<FreqMap> {
    if f.colorspace() != ColorSpace::YCbCr {
        return Err(Error::contract("block_dct expects a YCbCr frame"));
    }
    let (w, h) = (f.width(), f.height());
    if w % BLOCK != 0 || h % BLOCK != 0 {
        return Err(Error::contract(format!("frame {w}x{h} is not a multiple of {BLOCK} (pad first)")));
    }
    let (bw, bh) = (w / BLOCK, h / BLOCK);
    let mut map = FreqMap::zeros(bw, bh);
    let n = bw * bh;
    for c in 0..CHANNELS {
        let plane = f.plane(c);
        let coefs: Vec<[f64; COEFFS]> = (0..n)
            .into_par_iter()
            .map(|i| dct8x8(&read_block(plane, w, i % bw, i / bw)))
            .collect();
        for (i, coef) in coefs.iter().enumerate() {
            for (k, &src) in ZIGZAG.iter().enumerate() {
                map.planes[(c * COEFFS + k) * n + i] = coef[src];
            }
        }
    }
    Ok(map)
}

/// Inverse of [`block_dct`]. The result is unclamped and may leave `[0, 1]`.
pub fn block_idct(m: &FreqMap) -> Frame {
    let (bw, bh) = (m.blocks_x, m.blocks_y);
    let (w, h) = (bw * BLOCK, bh * BLOCK);
    let n = bw * bh;
    let mut data = vec![0.0f32; w * h * CHANNELS];
    for c in 0..CHANNELS {
        let blocks: Vec<[f64; COEFFS]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut coef = [0.0; COEFFS];
                for (k, &dst) in ZIGZAG.iter().enumerate() {
                    coef[dst] = m.planes[(c * COEFFS + k) * n + i];
                }
                idct8x8(&coef)
            })
            .collect();
        let plane = &mut data[c * w * h..(c + 1) * w * h];
        for (i, block) in blocks.iter().enumerate() {
            let (bx, by) = (i % bw, i / bw);
            for y in 0..BLOCK {
                let row = (by * BLOCK + y) * w + bx * BLOCK;
                for x in 0..BLOCK {
                    plane[row + x] = block[y * BLOCK + x] as f32;
                }
            }
        }
    }
    Frame::new(w, h, ColorSpace::YCbCr, data).expect("idct output is finite for finite input")
}

fn pad_to_block(f: &Frame) -> Frame {
    let (w, h) = (f.width(), f.height());
    let pw = w.div_ceil(BLOCK) * BLOCK;
    let ph = h.div_ceil(BLOCK) * BLOCK;
    if (pw, ph) == (w, h) {
        return f.clone();
    }
    Frame::from_fn(pw, ph, f.colorspace(), |x, y| f.pixel(x.min(w - 1), y.min(h - 1)))
}

fn crop(f: &Frame, w: usize, h: usize) -> Frame {
    if (f.width(), f.height()) == (w, h) {
        return f.clone();
    }
    Frame::from_fn(w, h, f.colorspace(), |x, y| f.pixel(x, y))
}

/// High-frequency residual of `f`: the frame with the lowest `dropped` zigzag
/// coefficients of every 8×8 block removed, as a signed YCbCr-ordered frame.
pub fn extract_hf_with(f: &Frame, dropped: usize) -> Frame {
    let (w, h) = (f.width(), f.height());
    let padded = pad_to_block(&f.to_ycbcr());
    let mut map = block_dct(&padded).expect("padded YCbCr frame satisfies block_dct");
    map.drop_low_planes(dropped);
    crop(&block_idct(&map), w, h)
}

/// [`extract_hf_with`] dropping only the DC plane.
pub fn extract_hf(f: &Frame) -> Frame {
    extract_hf_with(f, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct textbook DCT-II, O(N^4) over the block.
    fn naive_dct(b: &[f64; COEFFS]) -> [f64; COEFFS] {
        let n = BLOCK as f64;
        let a = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut out = [0.0; COEFFS];
        for v in 0..BLOCK {
            for u in 0..BLOCK {
                let mut s = 0.0;
                for y in 0..BLOCK {
                    for x in 0..BLOCK {
                        s += b[y * BLOCK + x]
                            * ((2 * x + 1) as f64 * u as f64 * PI / (2.0 * n)).cos()
                            * ((2 * y + 1) as f64 * v as f64 * PI / (2.0 * n)).cos();
                    }
                }
                out[v * BLOCK + u] = a(u) * a(v) * s;
            }
        }
        out
    }

    fn random_block(rng: &mut impl Rng) -> [f64; COEFFS] {
        let mut b = [0.0; COEFFS];
        b.iter_mut().for_each(|v| *v = rng.gen());
        b
    }

    fn random_ycc(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, ColorSpace::YCbCr, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn separable_dct_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let b = random_block(&mut rng);
            let fast = dct8x8(&b);
            let slow = naive_dct(&b);
            for (a, e) in fast.iter().zip(&slow) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_block_preserves_energy() {
        let mut b = [0.0; COEFFS];
        b[19] = 0.75;
        let coef = naive_dct(&b);
        let energy: f64 = coef.iter().map(|c| c * c).sum();
        assert!((energy - 0.5625).abs() < 1e-12);
        let fast: f64 = dct8x8(&b).iter().map(|c| c * c).sum();
        assert!((fast - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn zigzag_is_a_permutation_from_dc_to_corner() {
        let mut seen = [false; COEFFS];
        for &i in &ZIGZAG {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert_eq!(ZIGZAG[0], 0);
        assert_eq!(ZIGZAG[63], 63);
        // anti-diagonal index never decreases along the scan
        let diag = |i: usize| i / 8 + i % 8;
        assert!(ZIGZAG.windows(2).all(|p| diag(p[1]) >= diag(p[0])));
    }

    #[test]
    fn constant_block_is_pure_dc() {
        let f = Frame::filled(16, 8, ColorSpace::YCbCr, [0.25, 0.5, 1.0]);
        let m = block_dct(&f).unwrap();
        for (c, value) in [0.25, 0.5, 1.0].into_iter().enumerate() {
            assert!(m.plane(c * 64).iter().all(|&v| (v - 8.0 * value).abs() < 1e-12));
            for k in 1..64 {
                assert!(m.plane(c * 64 + k).iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn rejects_rgb_and_unaligned_frames() {
        assert!(block_dct(&Frame::filled(8, 8, ColorSpace::Rgb, [0.0; 3])).is_err());
        assert!(block_dct(&Frame::filled(12, 8, ColorSpace::YCbCr, [0.0; 3])).is_err());
    }

    #[test]
    fn idct_of_zero_and_dc_maps() {
        let zero = block_idct(&FreqMap::zeros(2, 1));
        assert_eq!((zero.width(), zero.height()), (16, 8));
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let mut dc = FreqMap::zeros(1, 2);
        for c in 0..CHANNELS {
            dc.plane_mut(c * 64).fill(8.0 * 0.3);
        }
        let f = block_idct(&dc);
        assert!(f.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn round_trip_on_random_frame() {
        let f = random_ycc(24, 16, 7);
        let back = block_idct(&block_dct(&f).unwrap());
        for (a, b) in f.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn block_means_removed(f: &Frame) -> Vec<f64> {
        let (w, h) = (f.width(), f.height());
        let mut out = vec![0.0; w * h * CHANNELS];
        for c in 0..CHANNELS {
            let p = f.plane(c);
            for by in 0..h / 8 {
                for bx in 0..w / 8 {
                    let mut sum = 0.0;
                    for y in 0..8 {
                        for x in 0..8 {
                            sum += p[(by * 8 + y) * w + bx * 8 + x] as f64;
                        }
                    }
                    let mean = sum / 64.0;
                    for y in 0..8 {
                        for x in 0..8 {
                            let i = (by * 8 + y) * w + bx * 8 + x;
                            out[c * w * h + i] = p[i] as f64 - mean;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn hf_of_blockwise_constant_frame_is_zero() {
        let f = Frame::from_fn(32, 16, ColorSpace::YCbCr, |x, y| {
            let v = ((x / 8 + 3 * (y / 8)) % 5) as f32 / 5.0;
            [v, 1.0 - v, 0.5]
        });
        assert!(extract_hf(&f).data().iter().all(|v| v.abs() < 1e-6));
        let c = Frame::filled(13, 9, ColorSpace::Rgb, [0.1, 0.7, 0.3]);
        assert!(extract_hf(&c).data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn hf_is_blockwise_mean_removal() {
        let f = random_ycc(32, 24, 11);
        let hf = extract_hf(&f);
        let oracle = block_means_removed(&f);
        for (a, b) in hf.data().iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hf_handles_unaligned_rgb_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Frame::from_fn(13, 10, ColorSpace::Rgb, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let hf = extract_hf(&f);
        assert_eq!((hf.width(), hf.height()), (13, 10));
        assert_eq!(hf.colorspace(), ColorSpace::YCbCr);
        assert!(hf.data().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn dropping_more_planes_removes_more_energy() {
        let f = random_ycc(16, 16, 5);
        let energy = |k| extract_hf_with(&f, k).data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        let e: Vec<f64> = [0, 1, 3, 10, 64].into_iter().map(energy).collect();
        assert!(e.windows(2).all(|p| p[1] <= p[0] + 1e-9), "{e:?}");
        assert!(e[4] < 1e-9);
    }

    proptest! {
        #[test]
        fn parseval_per_block(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_block(&mut rng);
            let space: f64 = b.iter().map(|v| v * v).sum();
            let freq: f64 = dct8x8(&b).iter().map(|v| v * v).sum();
            prop_assert!(((space - freq) / space).abs() < 1e-5);
        }

        #[test]
        fn hf_is_idempotent(seed in any::<u64>()) {
            let f = random_ycc(16, 16, seed);
            let once = extract_hf(&f);
            let twice = extract_hf(&once);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
