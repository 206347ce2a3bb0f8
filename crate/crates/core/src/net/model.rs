//! Parameter store, layers, the inverted-residual block, the HF branch and
//! the full regressor.
//!
//! Components hold indices into a shared [`Params`] store. Every forward has a
//! traced variant that keeps the activations its backward needs; backward
//! accumulates parameter gradients into a [`Grads`] aligned with the store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::freq::extract_hf;
use crate::media::{ColorSpace, Frame};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push((name, t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.count());
        let mut rest = flat;
        for (_, t) in &mut self.entries {
            let (head, tail) = rest.split_at(t.len());
            t.data_mut().copy_from_slice(head);
            rest = tail;
        }
    }
}

/// Gradient buffers aligned with a [`Params`] store.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    bufs: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros(params: &Params) -> Self {
        Grads { bufs: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect() }
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.bufs[i]
    }

    fn accumulate(&mut self, i: usize, g: &Tensor) {
        for (a, b) in self.bufs[i].iter_mut().zip(g.data()) {
            *a += b;
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.bufs.iter().flatten().copied().collect()
    }

    pub fn into_buffers(self) -> Vec<Vec<f64>> {
        self.bufs
    }
}

fn kaiming(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal.sample(rng)).collect()).expect("shape matches")
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv { weight: usize, bias: usize, spec: ConvSpec },
    LeakyRelu,
    HardSigmoid,
    AvgPool(usize),
    GlobalAvgPool,
}

impl Layer {
    #[allow(clippy::too_many_arguments)]
    fn conv(p: &mut Params, name: &str, cin: usize, cout: usize, k: usize, spec: ConvSpec, rng: &mut ChaCha8Rng) -> Layer {
        let fan_in = cin / spec.groups * k * k;
        let weight = p.push(format!("{name}.weight"), kaiming(&[cout, cin / spec.groups, k, k], fan_in, rng));
        let bias = p.push(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Layer::Conv { weight, bias, spec }
    }

    fn forward(&self, p: &Params, x: &Tensor) -> Result<Tensor> {
        match *self {
            Layer::Conv { weight, bias, spec } => ops::conv2d(x, p.get(weight), Some(p.get(bias)), spec),
            Layer::LeakyRelu => Ok(ops::leaky_relu(x)),
            Layer::HardSigmoid => Ok(ops::hard_sigmoid(x)),
            Layer::AvgPool(k) => ops::avg_pool(x, k),
            Layer::GlobalAvgPool => ops::global_avg_pool(x),
        }
    }

    fn backward(&self, p: &Params, x: &Tensor, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        match *self {
            Layer::Conv { weight, bias, spec } => {
                let (dx, dw, db) = ops::conv2d_backward(x, p.get(weight), spec, dy)?;
                g.accumulate(weight, &dw);
                g.accumulate(bias, &db);
                Ok(dx)
            }
            Layer::LeakyRelu => ops::leaky_relu_backward(x, dy),
            Layer::HardSigmoid => ops::hard_sigmoid_backward(x, dy),
            Layer::AvgPool(k) => ops::avg_pool_backward(x, k, dy),
            Layer::GlobalAvgPool => ops::global_avg_pool_backward(x, dy),
        }
    }

    fn flops(&self, p: &Params, x: &Tensor, y: &Tensor) -> u64 {
        match *self {
            Layer::Conv { weight, spec, .. } => {
                let k = p.get(weight).shape()[2];
                let (_, cin, _, _) = x.dims4().expect("NCHW");
                let (n, cout, ho, wo) = y.dims4().expect("NCHW");
                n as u64 * ops::conv_flops(cin, cout, k, spec.groups, ho, wo)
            }
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Seq(Vec<Layer>);

impl Seq {
    /// Activations: the input followed by every layer's output.
    fn forward(&self, p: &Params, x: Tensor) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.0.len() + 1);
        acts.push(x);
        for layer in &self.0 {
            let y = layer.forward(p, acts.last().expect("non-empty"))?;
            acts.push(y);
        }
        Ok(acts)
    }

    fn backward(&self, p: &Params, acts: &[Tensor], dy: Tensor, g: &mut Grads) -> Result<Tensor> {
        let mut d = dy;
        for (i, layer) in self.0.iter().enumerate().rev() {
            d = layer.backward(p, &acts[i], &d, g)?;
        }
        Ok(d)
    }

    fn flops(&self, p: &Params, acts: &[Tensor]) -> u64 {
        self.0.iter().enumerate().map(|(i, l)| l.flops(p, &acts[i], &acts[i + 1])).sum()
    }

    /// Distance from the nearest activation input to a kink of its function.
    fn kink_margin(&self, acts: &[Tensor]) -> f64 {
        let mut m = f64::INFINITY;
        for (layer, x) in self.0.iter().zip(acts) {
            let dist: fn(f64) -> f64 = match layer {
                Layer::LeakyRelu => f64::abs,
                Layer::HardSigmoid => |v| (v.abs() - 3.0).abs(),
                _ => continue,
            };
            m = x.data().iter().map(|&v| dist(v)).fold(m, f64::min);
        }
        m
    }
}

/// Inverted residual block with linear bottleneck and optional squeeze-and-excitation.
///
/// expand 1×1 → LeakyReLU → depthwise 3×3 → LeakyReLU → [SE gate] → project 1×1,
/// plus the input when the stride is 1 and the channel counts agree.
#[derive(Debug, Clone, PartialEq)]
pub struct InvLbSeBlock {
    body: Seq,
    se: Option<Seq>,
    project: Layer,
    residual: bool,
}

#[derive(Debug, Clone)]
pub struct BlockTrace {
    body: Vec<Tensor>,
    se: Option<Vec<Tensor>>,
    projected_from: Tensor,
}

impl BlockTrace {
    /// The SE gate values, when the block has SE.
    pub fn gate(&self) -> Option<&Tensor> {
        self.se.as_ref().and_then(|a| a.last())
    }
}

impl InvLbSeBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: &mut Params,
        name: &str,
        cin: usize,
        expanded: usize,
        cout: usize,
        stride: usize,
        use_se: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let body = Seq(vec![
            Layer::conv(p, &format!("{name}.expand"), cin, expanded, 1, ConvSpec::POINTWISE, rng),
            Layer::LeakyRelu,
            Layer::conv(p, &format!("{name}.depthwise"), expanded, expanded, 3, ConvSpec::new(stride, 1, expanded), rng),
            Layer::LeakyRelu,
        ]);
        let se = use_se.then(|| {
            let squeezed = (expanded / 4).max(1);
            Seq(vec![
                Layer::GlobalAvgPool,
                Layer::conv(p, &format!("{name}.se.reduce"), expanded, squeezed, 1, ConvSpec::POINTWISE, rng),
                Layer::LeakyRelu,
                Layer::conv(p, &format!("{name}.se.expand"), squeezed, expanded, 1, ConvSpec::POINTWISE, rng),
                Layer::HardSigmoid,
            ])
        });
        let project = Layer::conv(p, &format!("{name}.project"), expanded, cout, 1, ConvSpec::POINTWISE, rng);
        InvLbSeBlock { body, se, project, residual: stride == 1 && cin == cout }
    }

    pub fn has_residual(&self) -> bool {
        self.residual
    }

    pub fn has_se(&self) -> bool {
        self.se.is_some()
    }

    pub fn forward(&self, p: &Params, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(p, x)?.0)
    }

    pub fn forward_traced(&self, p: &Params, x: &Tensor) -> Result<(Tensor, BlockTrace)> {
        let body = self.body.forward(p, x.clone())?;
        let features = body.last().expect("non-empty");
        let (se, projected_from) = match &self.se {
            Some(seq) => {
                let acts = seq.forward(p, features.clone())?;
                let scaled = ops::channel_scale(features, acts.last().expect("non-empty"))?;
                (Some(acts), scaled)
            }
            None => (None, features.clone()),
        };
        let mut y = self.project.forward(p, &projected_from)?;
        if self.residual {
            y = ops::add(&y, x)?;
        }
        Ok((y, BlockTrace { body, se, projected_from }))
    }

    pub fn backward(&self, p: &Params, trace: &BlockTrace, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let d_proj = self.project.backward(p, &trace.projected_from, dy, g)?;
        let features = trace.body.last().expect("non-empty");
        let d_features = match (&self.se, &trace.se) {
            (Some(seq), Some(acts)) => {
                let gate = acts.last().expect("non-empty");
                let (d_direct, d_gate) = ops::channel_scale_backward(features, gate, &d_proj)?;
                let d_squeeze = seq.backward(p, acts, d_gate, g)?;
                ops::add(&d_direct, &d_squeeze)?
            }
            _ => d_proj,
        };
        let dx = self.body.backward(p, &trace.body, d_features, g)?;
        if self.residual {
            ops::add(&dx, dy)
        } else {
            Ok(dx)
        }
    }

    fn flops(&self, p: &Params, trace: &BlockTrace, out: &Tensor) -> u64 {
        let se = match (&self.se, &trace.se) {
            (Some(seq), Some(acts)) => seq.flops(p, acts),
            _ => 0,
        };
        self.body.flops(p, &trace.body) + se + self.project.flops(p, &trace.projected_from, out)
    }
}

/// Two conv 3×3 → LeakyReLU → average-pool stages over the high-frequency
/// component of a frame. The first pool is 2×2; the second is configurable so
/// the output lines up with the feature map it is added to.
#[derive(Debug, Clone, PartialEq)]
pub struct HfBranch {
    seq: Seq,
}

impl HfBranch {
    pub fn new(p: &mut Params, name: &str, mid: usize, out: usize, second_pool: usize, rng: &mut ChaCha8Rng) -> Self {
        let same = ConvSpec::new(1, 1, 1);
        HfBranch {
            seq: Seq(vec![
                Layer::conv(p, &format!("{name}.conv1"), 3, mid, 3, same, rng),
                Layer::LeakyRelu,
                Layer::AvgPool(2),
                Layer::conv(p, &format!("{name}.conv2"), mid, out, 3, same, rng),
                Layer::LeakyRelu,
                Layer::AvgPool(second_pool),
            ]),
        }
    }

    /// `[n, 3, h, w]` YCbCr high-frequency planes from frames.
    pub fn input(frames: &[Frame]) -> Result<Tensor> {
        let hf: Vec<Frame> = frames.iter().map(extract_hf).collect();
        frames_to_tensor(&hf, ColorSpace::YCbCr)
    }

    pub fn forward(&self, p: &Params, hf: &Tensor) -> Result<Tensor> {
        Ok(self.seq.forward(p, hf.clone())?.pop().expect("non-empty"))
    }

    pub fn forward_traced(&self, p: &Params, hf: &Tensor) -> Result<Vec<Tensor>> {
        self.seq.forward(p, hf.clone())
    }

    /// Returns the gradient with respect to the HF input.
    pub fn backward(&self, p: &Params, acts: &[Tensor], dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        self.seq.backward(p, acts, dy.clone(), g)
    }
}

/// Stacks frames into an `[n, 3, h, w]` tensor in the given colorspace.
pub fn frames_to_tensor(frames: &[Frame], cs: ColorSpace) -> Result<Tensor> {
    let first = frames.first().ok_or_else(|| Error::contract("no frames to stack"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(frames.len() * 3 * w * h);
    for f in frames {
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::DimensionMismatch(format!("{}x{} frame among {w}x{h}", f.width(), f.height())));
        }
        data.extend(f.to_colorspace(cs).data().iter().map(|&v| v as f64));
    }
    Tensor::new(&[frames.len(), 3, h, w], data)
}

const STEM_CHANNELS: usize = 16;

/// (expanded, output) channels of the 15 bottleneck blocks of MobileNetV3-Large.
const MOBILENET_V3_LARGE: [(usize, usize); 15] = [
    (16, 16),
    (64, 24),
    (72, 24),
    (72, 40),
    (120, 40),
    (120, 40),
    (240, 80),
    (200, 80),
    (184, 80),
    (184, 80),
    (480, 112),
    (672, 112),
    (672, 160),
    (960, 160),
    (960, 160),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreqSpConfig {
    pub depth: usize,
    /// Leading blocks built without SE.
    pub se_free_prefix: usize,
    pub width_mult: f64,
    pub hf_enabled: bool,
    pub input_size: usize,
    /// Channel reduction of the first regression-head 1×1 conv.
    pub nlr_reduction: usize,
    /// Depthwise stride per block; empty means one stride-2 block at the start
    /// of each quarter of the stack.
    pub strides: Vec<usize>,
    /// Side of the blocks restitched into an input image; the grid is
    /// `input_size / patch_block` blocks across.
    pub patch_block: usize,
}

impl Default for FreqSpConfig {
    fn default() -> Self {
        FreqSpConfig {
            depth: 4,
            se_free_prefix: 1,
            width_mult: 0.25,
            hf_enabled: true,
            input_size: 64,
            nlr_reduction: 4,
            strides: Vec::new(),
            patch_block: 16,
        }
    }
}

impl FreqSpConfig {
    /// Full-size configuration: 15 blocks, 3 without SE, 256×256 input.
    pub fn full() -> Self {
        FreqSpConfig { depth: 15, se_free_prefix: 3, width_mult: 1.0, input_size: 256, ..Default::default() }
    }

    pub fn block_strides(&self) -> Vec<usize> {
        if !self.strides.is_empty() {
            return self.strides.clone();
        }
        let quarter = self.depth.div_ceil(4).max(1);
        (0..self.depth).map(|i| if i % quarter == 0 { 2 } else { 1 }).collect()
    }

    /// Total spatial downsampling of the feature extractor, stem included.
    pub fn downsample(&self) -> usize {
        2 * self.block_strides().iter().product::<usize>()
    }

    fn width(&self, c: usize) -> usize {
        ((c as f64 * self.width_mult).round() as usize).max(1)
    }

    /// `(expanded, output)` channels of block `i`.
    pub fn block_channels(&self, i: usize) -> (usize, usize) {
        let (e, o) = MOBILENET_V3_LARGE[i * MOBILENET_V3_LARGE.len() / self.depth];
        (self.width(e), self.width(o))
    }

    pub fn patch_grid(&self) -> usize {
        self.input_size / self.patch_block
    }

    pub fn stem_channels(&self) -> usize {
        self.width(STEM_CHANNELS)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth == 0 || self.se_free_prefix > self.depth {
            return bad(format!("need depth >= se_free_prefix >= 0 and depth > 0 (depth {}, prefix {})", self.depth, self.se_free_prefix));
        }
        if !(self.width_mult > 0.0 && self.width_mult.is_finite()) {
            return bad(format!("width_mult {} must be positive", self.width_mult));
        }
        if self.nlr_reduction == 0 {
            return bad("nlr_reduction must be positive".into());
        }
        let strides = self.block_strides();
        if strides.len() != self.depth || strides.iter().any(|s| !matches!(s, 1 | 2)) {
            return bad(format!("strides {strides:?} must list 1 or 2 for each of {} blocks", self.depth));
        }
        let f = self.downsample();
        if self.input_size == 0 || self.input_size % f != 0 || self.input_size % 4 != 0 {
            return bad(format!("input_size {} must be a positive multiple of {} and of 4", self.input_size, f.max(4)));
        }
        if self.patch_block == 0 || self.input_size % self.patch_block != 0 {
            return bad(format!("patch_block {} must divide input_size {}", self.patch_block, self.input_size));
        }
        Ok(())
    }
}

/// Network inputs for a batch: RGB frames and, when enabled, their HF component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub image: Tensor,
    pub hf: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    stem: Vec<Tensor>,
    blocks: Vec<(BlockTrace, Tensor)>,
    hf: Option<Vec<Tensor>>,
    head: Vec<Tensor>,
}

impl Trace {
    /// Bytes held by every activation of the forward pass.
    pub fn activation_bytes(&self) -> usize {
        let sum = |v: &[Tensor]| v.iter().map(Tensor::len).sum::<usize>();
        let blocks: usize = self
            .blocks
            .iter()
            .map(|(t, out)| sum(&t.body) + t.se.as_deref().map_or(0, sum) + t.projected_from.len() + out.len())
            .sum();
        8 * (sum(&self.stem) + blocks + self.hf.as_deref().map_or(0, sum) + sum(&self.head))
    }
}

/// The sharpening-level regressor: stem, inverted-residual stack, optional HF
/// branch added to the final features, and a 1×1-conv regression head ending
/// in global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqSp {
    config: FreqSpConfig,
    params: Params,
    stem: Seq,
    blocks: Vec<InvLbSeBlock>,
    hf: Option<HfBranch>,
    head: Seq,
}

impl FreqSp {
    /// Kaiming fan-in normal weights, zero biases.
    pub fn new(config: FreqSpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::new();
        let stem_c = config.stem_channels();
        let stem = Seq(vec![Layer::conv(&mut p, "stem", 3, stem_c, 3, ConvSpec::new(2, 1, 1), &mut rng), Layer::LeakyRelu]);
        let mut cin = stem_c;
        let mut blocks = Vec::with_capacity(config.depth);
        for (i, &stride) in config.block_strides().iter().enumerate() {
            let (e, o) = config.block_channels(i);
            let use_se = i >= config.se_free_prefix;
            blocks.push(InvLbSeBlock::new(&mut p, &format!("blocks.{i}"), cin, e, o, stride, use_se, &mut rng));
            cin = o;
        }
        let hf = config
            .hf_enabled
            .then(|| HfBranch::new(&mut p, "hf", stem_c, cin, config.downsample() / 2, &mut rng));
        let reduced = (cin / config.nlr_reduction).max(1);
        let head = Seq(vec![
            Layer::conv(&mut p, "head.reduce", cin, reduced, 1, ConvSpec::POINTWISE, &mut rng),
            Layer::LeakyRelu,
            Layer::conv(&mut p, "head.out", reduced, 1, 1, ConvSpec::POINTWISE, &mut rng),
            Layer::GlobalAvgPool,
        ]);
        Ok(FreqSp { config, params: p, stem, blocks, hf, head })
    }

    pub fn config(&self) -> &FreqSpConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn blocks(&self) -> &[InvLbSeBlock] {
        &self.blocks
    }

    /// Builds inputs from frames of exactly `input_size`×`input_size` pixels.
    pub fn prepare(&self, frames: &[Frame]) -> Result<ModelInput> {
        let s = self.config.input_size;
        if let Some(f) = frames.iter().find(|f| f.width() != s || f.height() != s) {
            return Err(Error::DimensionMismatch(format!("model expects {s}x{s} frames, got {}x{}", f.width(), f.height())));
        }
        let image = frames_to_tensor(frames, ColorSpace::Rgb)?;
        let hf = if self.config.hf_enabled { Some(HfBranch::input(frames)?) } else { None };
        Ok(ModelInput { image, hf })
    }

    /// One predicted level per sample.
    pub fn forward(&self, input: &ModelInput) -> Result<Vec<f64>> {
        Ok(self.forward_traced(input)?.0)
    }

    pub fn forward_traced(&self, input: &ModelInput) -> Result<(Vec<f64>, Trace)> {
        self.forward_inner(input, true)
    }

    /// Forward pass that leaves out the HF addition regardless of configuration.
    pub fn forward_without_hf(&self, input: &ModelInput) -> Result<Vec<f64>> {
        Ok(self.forward_inner(input, false)?.0)
    }

    fn forward_inner(&self, input: &ModelInput, use_hf: bool) -> Result<(Vec<f64>, Trace)> {
        let (_, c, h, w) = input.image.dims4()?;
        let s = self.config.input_size;
        if (c, h, w) != (3, s, s) {
            return Err(Error::DimensionMismatch(format!("model expects [n, 3, {s}, {s}], got {:?}", input.image.shape())));
        }
        let p = &self.params;
        let stem = self.stem.forward(p, input.image.clone())?;
        let mut x = stem.last().expect("non-empty").clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, t) = b.forward_traced(p, &x)?;
            blocks.push((t, y.clone()));
            x = y;
        }
        let mut hf = None;
        if let (true, Some(branch)) = (use_hf, &self.hf) {
            let hf_in = input.hf.as_ref().ok_or_else(|| Error::contract("HF branch enabled but no HF input"))?;
            let acts = branch.forward_traced(p, hf_in)?;
            x = ops::add(&x, acts.last().expect("non-empty"))?;
            hf = Some(acts);
        }
        let head = self.head.forward(p, x)?;
        let out = head.last().expect("non-empty").data().to_vec();
        Ok((out, Trace { stem, blocks, hf, head }))
    }

    /// Parameter gradients of `Σ dout[i] · pred[i]`.
    /// Smallest distance from any LeakyReLU or hard-sigmoid input in `trace`
    /// to the activation's kink. A finite-difference probe whose effect on
    /// every pre-activation stays below this margin sees a smooth function.
    pub fn kink_margin(&self, trace: &Trace) -> f64 {
        let mut m = self.stem.kink_margin(&trace.stem).min(self.head.kink_margin(&trace.head));
        for (block, (t, _)) in self.blocks.iter().zip(&trace.blocks) {
            m = m.min(block.body.kink_margin(&t.body));
            if let (Some(seq), Some(acts)) = (&block.se, &t.se) {
                m = m.min(seq.kink_margin(acts));
            }
        }
        if let (Some(branch), Some(acts)) = (&self.hf, &trace.hf) {
            m = m.min(branch.seq.kink_margin(acts));
        }
        m
    }

    pub fn backward(&self, trace: &Trace, dout: &[f64]) -> Result<Grads> {
        let p = &self.params;
        let mut g = Grads::zeros(p);
        let dy = Tensor::new(&[dout.len(), 1, 1, 1], dout.to_vec())?;
        let d_fused = self.head.backward(p, &trace.head, dy, &mut g)?;
        if let (Some(branch), Some(acts)) = (&self.hf, &trace.hf) {
            branch.backward(p, acts, &d_fused, &mut g)?;
        }
        let mut d = d_fused;
        for (b, (t, _)) in self.blocks.iter().zip(&trace.blocks).rev() {
            d = b.backward(p, t, &d, &mut g)?;
        }
        self.stem.backward(p, &trace.stem, d, &mut g)?;
        Ok(g)
    }

    /// Analytic FLOPs of all convolutions for a batch of one.
    pub fn flops(&self) -> Result<u64> {
        let (trace, _) = self.probe()?;
        let p = &self.params;
        let blocks: u64 = self.blocks.iter().zip(&trace.blocks).map(|(b, (t, out))| b.flops(p, t, out)).sum();
        let hf = match (&self.hf, &trace.hf) {
            (Some(branch), Some(acts)) => branch.seq.flops(p, acts),
            _ => 0,
        };
        Ok(self.stem.flops(p, &trace.stem) + blocks + hf + self.head.flops(p, &trace.head))
    }

    /// Parameter plus activation bytes for one forward pass of a single frame.
    pub fn memory_estimate_bytes(&self) -> Result<usize> {
        let (trace, input) = self.probe()?;
        let inputs = input.image.len() + input.hf.as_ref().map_or(0, Tensor::len);
        Ok(8 * (self.params.count() + inputs) + trace.activation_bytes())
    }

    fn probe(&self) -> Result<(Trace, ModelInput)> {
        let s = self.config.input_size;
        let input = ModelInput {
            image: Tensor::zeros(&[1, 3, s, s]),
            hf: self.config.hf_enabled.then(|| Tensor::zeros(&[1, 3, s, s])),
        };
        Ok((self.forward_traced(&input)?.1, input))
    }

    /// Rebuilds a model from a config and a full set of named parameters.
    pub fn from_parts(config: FreqSpConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = FreqSp::new(config, 0)?;
        if named.len() != model.params.len() {
            return Err(Error::format("checkpoint", format!("{} tensors for a model with {}", named.len(), model.params.len())));
        }
        for ((name, t), (want, slot)) in named.into_iter().zip(model.params.iter_mut()) {
            if name != want || t.shape() != slot.shape() {
                return Err(Error::format("checkpoint", format!("tensor {name} {:?} where {want} {:?} expected", t.shape(), slot.shape())));
            }
            *slot = t;
        }
        Ok(model)
    }
}
