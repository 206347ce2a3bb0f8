//! AdamW training loop.
//!
//! Each step runs the forward pass of every sample in the batch (in parallel),
//! evaluates the loss over the whole batch, then back-propagates each sample
//! and sums the per-sample gradients in batch order. The summation order is
//! fixed, so a seeded run is reproducible bit for bit with any thread count.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{evaluate, overall_loss};
use super::model::{FreqSp, Grads, ModelInput, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub lambda_mono: f64,
    pub seed: u64,
    /// Optimizer steps.
    pub steps: usize,
    /// Run everything on one thread.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-3, weight_decay: 0.05, batch: 8, lambda_mono: 0.3, seed: 0, steps: 1000, deterministic: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mono >= 0.0) {
            return Err(Error::Config(format!("lambda_mono {} must be non-negative", self.lambda_mono)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || self.batch == 0 {
            return Err(Error::Config("need lr > 0, weight_decay >= 0 and batch > 0".into()));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamW { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros(), v: zeros() }
    }

    /// Updates every parameter that carries a gradient.
    pub fn step(&mut self, params: &mut Params) {
        self.t += 1;
        let (c1, c2) = (1.0 - self.beta1.powi(self.t), 1.0 - self.beta2.powi(self.t));
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                *w -= self.lr * self.weight_decay * *w;
                *w -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// One training example: a single prepared frame and its label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: ModelInput,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// `None` when the epoch's labels were all equal.
    pub plcc: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub steps: usize,
    pub epochs: Vec<EpochMetrics>,
}

/// Summed-loss gradients of one batch, plus its predictions and loss.
fn batch_gradients(model: &FreqSp, batch: &[&Sample], lambda_mono: f64) -> Result<(Grads, Vec<f64>, f64)> {
    let traced: Vec<_> = batch.par_iter().map(|s| model.forward_traced(&s.input)).collect::<Result<_>>()?;
    let preds: Vec<f64> = traced.iter().map(|(p, _)| p[0]).collect();
    let labels: Vec<f64> = batch.iter().map(|s| s.label).collect();
    let (loss, dpred) = overall_loss(&preds, &labels, lambda_mono)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss {loss} on predictions {preds:?}")));
    }
    let per_sample: Vec<Grads> = traced
        .par_iter()
        .zip(&dpred)
        .map(|((_, trace), &d)| model.backward(trace, &[d]))
        .collect::<Result<_>>()?;
    let mut total = Grads::zeros(model.params());
    for g in &per_sample {
        total.add(g);
    }
    Ok((total, preds, loss))
}

pub fn train(model: &mut FreqSp, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    if cfg.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        pool.install(|| train_loop(model, samples, cfg))
    } else {
        train_loop(model, samples, cfg)
    }
}

fn train_loop(model: &mut FreqSp, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(model.params(), cfg.lr, cfg.weight_decay);
    let batch = cfg.batch.min(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = samples.len();
    let mut epoch = (Vec::new(), Vec::new(), 0.0, 0usize);
    let mut report = TrainReport { steps: 0, epochs: Vec::new() };

    for step in 0..cfg.steps {
        if cursor + batch > order.len() {
            if !epoch.0.is_empty() {
                report.epochs.push(close_epoch(report.epochs.len(), &epoch));
            }
            epoch = (Vec::new(), Vec::new(), 0.0, 0);
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let chosen: Vec<&Sample> = order[cursor..cursor + batch].iter().map(|&i| &samples[i]).collect();
        cursor += batch;
        let (grads, preds, loss) = batch_gradients(model, &chosen, cfg.lambda_mono)
            .map_err(|e| match e {
                Error::Diverged(m) => Error::Diverged(format!("step {step}: {m}")),
                other => other,
            })?;
        for ((_, p), g) in model.params_mut().iter_mut().zip(grads.into_buffers()) {
            p.set_grad(g)?;
        }
        opt.step(model.params_mut());
        epoch.0.extend(preds);
        epoch.1.extend(chosen.iter().map(|s| s.label));
        epoch.2 += loss;
        epoch.3 += 1;
        report.steps += 1;
    }
    if !epoch.0.is_empty() {
        report.epochs.push(close_epoch(report.epochs.len(), &epoch));
    }
    for (_, p) in model.params_mut().iter_mut() {
        p.clear_grad();
    }
    Ok(report)
}

fn close_epoch(index: usize, (preds, labels, loss, batches): &(Vec<f64>, Vec<f64>, f64, usize)) -> EpochMetrics {
    let rmse = (preds.iter().zip(labels).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / preds.len() as f64).sqrt();
    let plcc = evaluate(preds, labels).ok().map(|(p, _)| p);
    let m = EpochMetrics { epoch: index, loss: loss / *batches as f64, plcc, rmse };
    info!("epoch {}: loss {:.5} plcc {:?} rmse {:.5}", m.epoch, m.loss, m.plcc, m.rmse);
    m
}
