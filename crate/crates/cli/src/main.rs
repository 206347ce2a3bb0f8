//! `freqsp`: sharpening, feature extraction, BD-Rate labeling, training and
//! benchmarking from the command line.
//!
//! Results go to stdout as JSON, CSV or SVG; logs go to stderr. Exit codes:
//! 0 success, 1 usage, 2 runtime failure, 3 encoder or metric tool unavailable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod svg;

use config::UsageError;

#[derive(Parser)]
#[command(name = "freqsp", version, about = "Pick a bitrate-aware sharpening level for videos")]
struct Cli {
    /// More log output on stderr (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unsharp-mask a video.
    Sharpen(SharpenArgs),
    /// Write the high-frequency residual of every frame as a tensor file.
    HfExtract(HfExtractArgs),
    /// Draw RD curves as SVG.
    RdPlot(RdPlotArgs),
    /// BD-Rate of a test RD curve against an anchor.
    Bdrate(BdrateArgs),
    /// Label a manifest of videos with their BD-Rate-optimal sharpening level.
    Label(LabelArgs),
    /// Train a regressor on labeled videos.
    Train(TrainArgs),
    /// Predict the sharpening level of one video.
    Predict(PredictArgs),
    /// PLCC and RMSE of a checkpoint on labeled videos.
    Eval(EvalArgs),
    /// Parameter count, memory estimate, FLOPs and single-thread forward time.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `W H C FPS N` header, then 8-bit planar RGB.
    Raw,
    /// Directory of frame_%06d.png files.
    Png,
}

#[derive(Args)]
struct SharpenArgs {
    /// Sharpening amount λ in [0, 4].
    #[arg(long)]
    amount: f64,
    /// Odd box-blur kernel size.
    #[arg(long, default_value_t = 5)]
    kernel: usize,
    /// Sharpen luma only (default).
    #[arg(long, conflicts_with = "all_channels")]
    luma_only: bool,
    /// Sharpen R, G and B independently.
    #[arg(long)]
    all_channels: bool,
    /// Output format; defaults to the input's.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Raw video file or PNG directory.
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct HfExtractArgs {
    /// Lowest zigzag coefficients removed per block.
    #[arg(long, default_value_t = 1)]
    dropped: usize,
    /// Sample this many frames uniformly instead of using all.
    #[arg(long)]
    frames: Option<usize>,
    input: PathBuf,
    /// Tensor file: `FQT1`, rank, dims, f64 values; shape N×3×H×W (Y, Cb, Cr).
    output: PathBuf,
}

#[derive(Args)]
struct RdPlotArgs {
    /// CSV files with `bitrate_kbps,quality` rows, one curve each.
    csv: Vec<PathBuf>,
    /// Plot every level of a label manifest record instead.
    #[arg(long, requires = "id", conflicts_with = "csv")]
    labels: Option<PathBuf>,
    /// Record id within --labels.
    #[arg(long, requires = "labels")]
    id: Option<String>,
    /// Write the SVG here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BdrateArgs {
    /// Anchor curve CSV (`bitrate_kbps,quality`).
    #[arg(long)]
    anchor: PathBuf,
    /// Test curve CSV.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    /// Config file (`section.key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSONL of {"id": ..., "path": ...}.
    #[arg(long)]
    manifest: PathBuf,
    /// Output JSONL; existing records are kept and skipped.
    #[arg(long)]
    out: PathBuf,
    /// Concurrent encodes; overrides sweep.jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Label manifest written by `label`.
    #[arg(long)]
    labels: PathBuf,
    /// Directory that relative video paths in --labels resolve against.
    #[arg(long)]
    videos: PathBuf,
    /// Config file (`section.key = value`).
    #[arg(long)]
    cfg: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides train.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Single-threaded, bit-reproducible run.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Frames sampled uniformly and averaged.
    #[arg(long, default_value_t = freqsp::labeler::DEFAULT_FRAMES_PER_VIDEO)]
    frames: usize,
    video: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Directory for relative video paths; defaults to the labels file's directory.
    #[arg(long)]
    videos: Option<PathBuf>,
    /// Frames sampled per video.
    #[arg(long, default_value_t = freqsp::labeler::DEFAULT_FRAMES_PER_VIDEO)]
    frames: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Model config file; defaults to the built-in desk-scale model.
    #[arg(long, conflicts_with = "ckpt")]
    cfg: Option<PathBuf>,
    /// Benchmark a trained checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Benchmark a single stride-1 conv instead: CIN,COUT,K,SIZE.
    #[arg(long, conflicts_with_all = ["cfg", "ckpt"])]
    conv: Option<String>,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
}

/// Exit code for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<freqsp::Error>() {
            return match e {
                freqsp::Error::AdapterUnavailable(_) => 3,
                freqsp::Error::Config(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (_, 0) => "info",
        (_, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Sharpen(a) => commands::sharpen(a),
        Command::HfExtract(a) => commands::hf_extract(a),
        Command::RdPlot(a) => commands::rd_plot(a),
        Command::Bdrate(a) => commands::bdrate(a),
        Command::Label(a) => commands::label(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
