//! Patch restitching: one block from each cell of a grid over the frame,
//! reassembled in grid order into a `grid·block` square.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestitchMode {
    /// Random offset inside each cell (training).
    Random { seed: u64 },
    /// The cell's top-left corner (testing).
    TopLeft,
}

/// The frame is split into `grid × grid` equal cells of `⌊W/grid⌋ × ⌊H/grid⌋`
/// pixels. One `block × block` sample is cut from each cell and placed at
/// `(gx·block, gy·block)` of the output. Pixels are copied, never resampled.
pub fn patch_restitch(frame: &Frame, block: usize, grid: usize, mode: RestitchMode) -> Result<Frame> {
    if block == 0 || grid == 0 {
        return Err(Error::contract("block and grid must be positive"));
    }
    let (w, h) = (frame.width(), frame.height());
    let (cw, ch) = (w / grid, h / grid);
    if cw < block || ch < block {
        return Err(Error::contract(format!("{w}x{h} frame cannot hold a {grid}x{grid} grid of {block}x{block} blocks")));
    }
    let mut rng = match mode {
        RestitchMode::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        RestitchMode::TopLeft => None,
    };
    let side = grid * block;
    let mut out = vec![0.0f32; 3 * side * side];
    for gy in 0..grid {
        for gx in 0..grid {
            let (ox, oy) = match rng.as_mut() {
                Some(r) => (r.gen_range(0..=cw - block), r.gen_range(0..=ch - block)),
                None => (0, 0),
            };
            let (sx, sy) = (gx * cw + ox, gy * ch + oy);
            for c in 0..3 {
                let src = frame.plane(c);
                let dst = &mut out[c * side * side..][..side * side];
                for y in 0..block {
                    let s = (sy + y) * w + sx;
                    let d = (gy * block + y) * side + gx * block;
                    dst[d..d + block].copy_from_slice(&src[s..s + block]);
                }
            }
        }
    }
    Frame::new(side, side, frame.colorspace(), out)
}
