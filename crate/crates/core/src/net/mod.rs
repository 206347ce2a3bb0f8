//! A small CNN regressor for the sharpening level, with hand-written
//! forward and backward passes in f64.

pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
pub mod ops;
pub mod restitch;
pub mod tensor;
pub mod train;

pub use io::{load_checkpoint, load_tensor, save_checkpoint, save_tensor};
pub use loss::{evaluate, l1_loss, mono_loss, overall_loss};
pub use model::{FreqSp, FreqSpConfig, Grads, HfBranch, InvLbSeBlock, ModelInput, Params};
pub use restitch::{patch_restitch, RestitchMode};
pub use tensor::Tensor;
pub use train::{train, AdamW, Sample, TrainConfig, TrainReport};

use crate::error::Result;
use crate::media::{Frame, Video};

/// Video-level prediction: the mean of the per-frame predictions.
pub fn predict_frames(model: &FreqSp, frames: &[Frame]) -> Result<f64> {
    let preds = model.forward(&model.prepare(frames)?)?;
    Ok(preds.iter().sum::<f64>() / preds.len() as f64)
}

/// Samples `count` frames uniformly and restitches each to the model's input
/// size. In random mode frame `i` uses seed `seed + i`.
pub fn video_inputs(config: &FreqSpConfig, video: &Video, count: usize, mode: RestitchMode) -> Result<Vec<Frame>> {
    video
        .sample_uniform(count)
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mode = match mode {
                RestitchMode::Random { seed } => RestitchMode::Random { seed: seed.wrapping_add(i as u64) },
                top_left => top_left,
            };
            patch_restitch(f, config.patch_block, config.patch_grid(), mode)
        })
        .collect()
}

/// Mean prediction over `count` uniformly sampled, top-left restitched frames.
pub fn predict_video(model: &FreqSp, video: &Video, count: usize) -> Result<f64> {
    predict_frames(model, &video_inputs(model.config(), video, count, RestitchMode::TopLeft)?)
}
