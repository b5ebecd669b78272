//! `pseudobox` command line: mining, evaluation, statistics, sweeps,
//! synthetic corpora, overlay rendering and throughput benchmarks.

mod commands;
mod config;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pseudobox::io::FormatError;
use pseudobox::pipeline::PipelineError;

pub use config::MiningFlags;

#[derive(Debug, Parser)]
#[command(name = "pseudobox", version, about = "Mine pseudo bounding boxes from class activation maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine boxes for every image in a manifest and write COCO-style JSON.
    Mine(MineArgs),
    /// Score predicted boxes against ground truth.
    Eval(EvalArgs),
    /// Print box statistics of an annotation file.
    Stats(StatsArgs),
    /// Mine once per threshold set and per NMS IoU and tabulate the results.
    Sweep(SweepArgs),
    /// Write a synthetic corpus (CAMB files, manifest, ground truth).
    Synth(SynthArgs),
    /// Write heatmap overlays with box outlines as PNG files.
    Render(RenderArgs),
    /// Measure mining throughput with one and with several workers.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Directory holding `<image_id>.camb` files.
    #[arg(long)]
    pub cams: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mining: MiningFlags,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Where to write the JSON run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Ap,
    Ap11,
    ApAvg,
    Recall,
    Corloc,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Print only this metric; all metrics otherwise.
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub anns: PathBuf,
    /// Emit JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub cams: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Ground truth; adds evaluation rows when given.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Threshold sets separated by `;`, values within a set by `,`.
    #[arg(long, default_value = "0.2;0.3;0.4;0.5;0.2,0.3,0.4,0.5")]
    pub thresholds_grid: String,
    /// NMS IoU values for the second table, comma separated.
    #[arg(long, default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
    pub nms_grid: String,
    #[command(flatten)]
    pub mining: MiningFlags,
    /// IoU used for the evaluation rows.
    #[arg(long, default_value_t = 0.5)]
    pub eval_iou: f64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "gauss")]
    pub kind: String,
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub cams: PathBuf,
    #[arg(long)]
    pub anns: PathBuf,
    /// Maps annotation file names to CAMB image ids; without it the file
    /// stem is taken as the image id.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory with the source images to draw under the heatmap.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

/// Exit status: 0 success, 1 invalid input, 2 I/O failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return e.exit_code();
        }
        if let Some(e) = cause.downcast_ref::<FormatError>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<image::ImageError>().is_some() {
            return 2;
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Mine(a) => commands::mine(a),
        Command::Eval(a) => commands::eval(a),
        Command::Stats(a) => commands::stats(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
        Command::Render(a) => commands::render(a),
        Command::Bench(a) => commands::bench(a),
    }
}
