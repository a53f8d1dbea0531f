//! `pathroute <synth|train|eval|route-map|sweep> --config FILE [options]`
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or config error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pathroute::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Write degraded/clean patch pairs and a manifest.
    Synth,
    /// Run training stage 1 or 2.
    Train,
    /// Tiled evaluation: report.csv, report.txt and restored images.
    ///
    /// report.csv columns: image,psnr,ssim,input_psnr,mean_flops,n_regions,
    /// one row per image and a final `mean` row. report.txt fields: psnr,
    /// ssim, input_psnr, mean_flops, n_regions, route_histogram.
    Eval,
    /// Per-region route heatmap (green = cheap, red = expensive) and routes.csv.
    RouteMap,
    /// Stage-2 fine-tuning per penalty; writes sweep.csv.
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "pathroute", version, about = "Dynamic-routing image restoration")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: Option<u8>,
    /// Checkpoint to start from (required for stage 2 and sweeps).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Force difficulty to 1 in the reward.
    #[arg(long)]
    pub non_regulated: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Numeric(_) | Error::Format { .. } | Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathroute: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
