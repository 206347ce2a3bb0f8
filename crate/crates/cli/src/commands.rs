use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};

use freqsp::freq::extract_hf_with;
use freqsp::labeler::{label_corpus, read_labels, LabelRecord};
use freqsp::media::{load_video, store_video, ColorSpace, Frame, Video, VideoFormat};
use freqsp::net::model::frames_to_tensor;
use freqsp::net::ops::{conv2d, conv_flops, ConvSpec};
use freqsp::net::{
    evaluate, load_checkpoint, predict_video, save_checkpoint, save_tensor, video_inputs, FreqSp, RestitchMode, Sample,
    Tensor,
};
use freqsp::rdcurve::{bd_rate, RdCurve, RdPoint};
use freqsp::sharpen::{usm_video, UsmParams, UsmTarget};

use crate::config::{GlobalConfig, UsageError};
use crate::svg::{self, Series};
use crate::{
    BdrateArgs, BenchArgs, EvalArgs, Format, HfExtractArgs, LabelArgs, PredictArgs, RdPlotArgs, SharpenArgs, TrainArgs,
};

fn load(path: &Path) -> Result<Video> {
    load_video(path, VideoFormat::detect(path)).with_context(|| format!("loading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<GlobalConfig> {
    Ok(match path {
        Some(p) => GlobalConfig::load(p)?,
        None => GlobalConfig::default(),
    })
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

pub fn sharpen(a: SharpenArgs) -> Result<()> {
    let target = if a.all_channels { UsmTarget::AllChannels } else { UsmTarget::LumaOnly };
    let params = UsmParams { amount: a.amount, kernel: a.kernel, target };
    params.validate().map_err(|e| UsageError(e.to_string()))?;
    let in_format = VideoFormat::detect(&a.input);
    let video = load(&a.input)?;
    let out = usm_video(&video, &params)?;
    let format = match a.format {
        Some(Format::Raw) => VideoFormat::Raw,
        Some(Format::Png) => VideoFormat::PngSequence,
        None => in_format,
    };
    store_video(&out, &a.output, format).with_context(|| format!("writing {}", a.output.display()))?;
    print_json(&serde_json::json!({
        "frames": out.len(),
        "width": out.width(),
        "height": out.height(),
        "amount": a.amount,
        "kernel": a.kernel,
    }));
    Ok(())
}

pub fn hf_extract(a: HfExtractArgs) -> Result<()> {
    let mut video = load(&a.input)?;
    if let Some(n) = a.frames {
        video = video.sample_uniform(n);
    }
    let hf: Vec<Frame> = video.frames().iter().map(|f| extract_hf_with(f, a.dropped)).collect();
    let tensor = frames_to_tensor(&hf, ColorSpace::YCbCr)?;
    save_tensor(&tensor, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
    print_json(&serde_json::json!({ "shape": tensor.shape() }));
    Ok(())
}

/// Reads `bitrate_kbps,quality` rows; a non-numeric first row is a header.
fn read_curve_csv(path: &Path) -> Result<Vec<RdPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let parsed = (row.len() == 2).then(|| (row[0].parse::<f64>(), row[1].parse::<f64>()));
        match parsed {
            Some((Ok(r), Ok(q))) => points.push(RdPoint::new(r, q)),
            _ if i == 0 => continue,
            _ => bail!("{} row {}: expected bitrate_kbps,quality", path.display(), i + 1),
        }
    }
    Ok(points)
}

pub fn bdrate(a: BdrateArgs) -> Result<()> {
    let anchor = RdCurve::new(read_curve_csv(&a.anchor)?, 0.0).with_context(|| format!("anchor {}", a.anchor.display()))?;
    let test = RdCurve::new(read_curve_csv(&a.test)?, 1.0).with_context(|| format!("test {}", a.test.display()))?;
    let r = bd_rate(&anchor, &test)?;
    println!("bd_rate,overlap_low,overlap_high");
    println!("{:.6},{},{}", r.value, r.overlap.0, r.overlap.1);
    Ok(())
}

fn record_series(record: &LabelRecord) -> Vec<Series> {
    let mut levels: Vec<f64> = record.points.iter().map(|p| p.sharpening_level).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .into_iter()
        .map(|level| Series {
            name: format!("level {level}"),
            points: record
                .points
                .iter()
                .filter(|p| p.sharpening_level == level)
                .map(|p| RdPoint::new(p.bitrate_kbps, p.quality))
                .collect(),
        })
        .collect()
}

pub fn rd_plot(a: RdPlotArgs) -> Result<()> {
    let series = match (&a.labels, &a.id) {
        (Some(labels), Some(id)) => {
            let records = read_labels(labels)?;
            let record = records.iter().find(|r| &r.id == id).with_context(|| format!("no record {id:?} in {}", labels.display()))?;
            record_series(record)
        }
        _ if a.csv.is_empty() => return Err(UsageError("give CSV files or --labels with --id".into()).into()),
        _ => a
            .csv
            .iter()
            .map(|p| {
                let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
                Ok(Series { name, points: read_curve_csv(p)? })
            })
            .collect::<Result<_>>()?,
    };
    let doc = svg::rd_plot(&series);
    match &a.out {
        Some(path) => fs::write(path, doc).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(doc.as_bytes())?,
    }
    Ok(())
}

pub fn label(a: LabelArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(jobs) = a.jobs {
        cfg.sweep.jobs = jobs;
    }
    cfg.sweep.validate()?;
    let summary = label_corpus(&a.manifest, &a.out, &cfg.sweep)?;
    info!("{} videos: {} labeled, {} failed, {} already present", summary.total, summary.labeled, summary.failed, summary.skipped);
    print_json(&serde_json::to_value(summary)?);
    Ok(())
}

fn resolve(base: &Path, record: &LabelRecord) -> Result<PathBuf> {
    let path = record.path.as_deref().with_context(|| format!("record {:?} has no video path", record.id))?;
    Ok(base.join(path))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.cfg.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(steps) = a.steps {
        cfg.train.steps = steps;
    }
    cfg.train.deterministic |= a.deterministic;
    cfg.net.validate()?;
    cfg.train.validate()?;
    if cfg.train_frames == 0 {
        return Err(UsageError("train.frames_per_video must be positive".into()).into());
    }

    let mut model = FreqSp::new(cfg.net.clone(), cfg.seed)?;
    let mut samples = Vec::new();
    for (vi, record) in read_labels(&a.labels)?.iter().enumerate() {
        let Some(label) = record.label else {
            warn!("skipping {:?}: no label", record.id);
            continue;
        };
        let video = load(&resolve(&a.videos, record)?)?;
        let mode = RestitchMode::Random { seed: cfg.seed.wrapping_add((vi as u64) << 32) };
        for frame in video_inputs(&cfg.net, &video, cfg.train_frames, mode).with_context(|| format!("video {:?}", record.id))? {
            samples.push(Sample { input: model.prepare(&[frame])?, label });
        }
    }
    if samples.is_empty() {
        bail!("no labeled videos in {}", a.labels.display());
    }
    info!("training on {} frames for {} steps", samples.len(), cfg.train.steps);
    let report = freqsp::net::train(&mut model, &samples, &cfg.train)?;
    save_checkpoint(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&serde_json::to_value(&report)?);
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?;
    let pred = predict_video(&model, &load(&a.video)?, a.frames)?;
    println!("{pred}");
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?;
    let base = match &a.videos {
        Some(dir) => dir.clone(),
        None => a.labels.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let (mut preds, mut gts) = (Vec::new(), Vec::new());
    for record in read_labels(&a.labels)? {
        let Some(label) = record.label else { continue };
        let video = load(&resolve(&base, &record)?)?;
        preds.push(predict_video(&model, &video, a.frames).with_context(|| format!("video {:?}", record.id))?);
        gts.push(label);
    }
    let (plcc, rmse) = evaluate(&preds, &gts)?;
    println!("n,plcc,rmse");
    println!("{},{plcc},{rmse}", preds.len());
    Ok(())
}

/// Mean wall-clock milliseconds of `f` over `runs` calls, after `warmup` calls.
fn time_ms(runs: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let start = Instant::now();
    for _ in 0..runs {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / runs.max(1) as f64)
}

fn parse_conv(spec: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| UsageError(format!("--conv {spec:?}: {e}")))?;
    match parts[..] {
        [cin, cout, k, size] if cin > 0 && cout > 0 && k % 2 == 1 && size > 0 => Ok([cin, cout, k, size]),
        _ => Err(UsageError(format!("--conv takes CIN,COUT,K,SIZE with odd K, got {spec:?}")).into()),
    }
}

/// Smooth deterministic test pattern.
fn bench_frame(size: usize) -> Frame {
    Frame::from_fn(size, size, ColorSpace::Rgb, |x, y| {
        let (u, v) = (x as f32 / size as f32, y as f32 / size as f32);
        [0.5 + 0.4 * (7.0 * u).sin() * (5.0 * v).cos(), 0.5 + 0.3 * (3.0 * u + 2.0 * v).sin(), u * v]
    })
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    pool.install(|| bench_inner(a))
}

fn bench_inner(a: BenchArgs) -> Result<()> {
    if a.runs == 0 {
        return Err(UsageError("--runs must be positive".into()).into());
    }
    if let Some(spec) = &a.conv {
        let [cin, cout, k, size] = parse_conv(spec)?;
        let x = Tensor::filled(&[1, cin, size, size], 0.5);
        let w = Tensor::filled(&[cout, cin, k, k], 0.01);
        let b = Tensor::zeros(&[cout]);
        let conv = ConvSpec { stride: 1, pad: k / 2, groups: 1 };
        let out_len = cout * size * size;
        let ms = time_ms(a.runs, a.warmup, || conv2d(&x, &w, Some(&b), conv).map(drop).map_err(Into::into))?;
        print_json(&serde_json::json!({
            "conv": { "cin": cin, "cout": cout, "k": k, "size": size },
            "params": w.len() + b.len(),
            "memory_bytes": 8 * (w.len() + b.len() + x.len() + out_len),
            "flops": conv_flops(cin, cout, k, 1, size, size),
            "forward_ms": ms,
            "runs": a.runs,
            "warmup": a.warmup,
            "threads": 1,
        }));
        return Ok(());
    }
    let model = match &a.ckpt {
        Some(path) => load_checkpoint(path)?,
        None => {
            let cfg = load_config(a.cfg.as_deref())?;
            FreqSp::new(cfg.net, cfg.seed)?
        }
    };
    let input = model.prepare(&[bench_frame(model.config().input_size)])?;
    let ms = time_ms(a.runs, a.warmup, || model.forward(&input).map(drop).map_err(Into::into))?;
    print_json(&serde_json::json!({
        "config": model.config(),
        "params": model.params().count(),
        "memory_bytes": model.memory_estimate_bytes()?,
        "flops": model.flops()?,
        "forward_ms": ms,
        "runs": a.runs,
        "warmup": a.warmup,
        "threads": 1,
    }));
    Ok(())
}
