//! `hybridkit` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error (bad flag, missing input, empty
//! corpus), 1 runtime failure.

mod commands;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hybridkit::bench::FilterKind;
use hybridkit::{BoundaryPolicy, HighpassMode, Strategy};

#[derive(Debug, Parser)]
#[command(
    name = "hybridkit",
    version,
    about = "Gaussian/LoG filtering, hybrid images and filter benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gaussian lowpass of one image.
    Blur {
        input: PathBuf,
        /// Output path; format follows the extension (.png, .ppm, .pgm).
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7.0, value_parser = positive)]
        sigma: f64,
        #[arg(long, default_value_t = BoundaryPolicy::Replicate, value_parser = parse_boundary)]
        boundary: BoundaryPolicy,
    },
    /// High-pass residual, shifted to mid-gray for display.
    Highpass {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7.0, value_parser = positive)]
        sigma: f64,
        #[arg(long, default_value_t = HighpassMode::Subtract, value_parser = parse_mode)]
        mode: HighpassMode,
        #[arg(long, default_value_t = BoundaryPolicy::Replicate, value_parser = parse_boundary)]
        boundary: BoundaryPolicy,
    },
    /// Blend the lowpass of one image with the high-pass of another.
    Hybrid {
        /// Source of the coarse (low-frequency) content.
        input_low: PathBuf,
        /// Source of the fine (high-frequency) content.
        input_high: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7.0, value_parser = positive)]
        sigma_low: f64,
        #[arg(long, default_value_t = 7.0, value_parser = positive)]
        sigma_high: f64,
        /// Share of the lowpass layer, in [0, 1].
        #[arg(long, default_value_t = 0.5, value_parser = unit)]
        weight: f64,
        #[arg(long, default_value_t = HighpassMode::Subtract, value_parser = parse_mode)]
        mode: HighpassMode,
        #[arg(long, default_value_t = BoundaryPolicy::Replicate, value_parser = parse_boundary)]
        boundary: BoundaryPolicy,
        /// Write a strip of this many half-size copies instead of the bare
        /// hybrid when greater than 1.
        #[arg(long, default_value_t = 1)]
        pyramid_levels: usize,
    },
    /// Time filters over a corpus and write a JSON suite.
    Bench {
        /// Directory of .png/.ppm/.pgm images.
        #[arg(
            long,
            conflicts_with = "synthetic",
            required_unless_present = "synthetic"
        )]
        corpus: Option<PathBuf>,
        /// Seeded noise images of 64², 128² and 256² pixels.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = hybridkit_bench::DEFAULT_SEED)]
        seed: u64,
        /// Comma-separated sigmas [default: 2,4,5,7,10,15,20,25,30].
        #[arg(long, value_delimiter = ',', value_parser = positive)]
        sigmas: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [Kind::Lowpass, Kind::HighpassSubtract])]
        kinds: Vec<Kind>,
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_values_t = [Strategy::Direct, Strategy::Separable])]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = hybridkit::bench::DEFAULT_REPETITIONS, value_parser = clap::value_parser!(u32).range(1..))]
        repetitions: u32,
        /// Row-parallel convolution (recorded in the machine note).
        #[arg(long)]
        parallel: bool,
        /// Extra text for the suite's machine note.
        #[arg(long)]
        note: Option<String>,
        #[arg(long, default_value = "bench.json")]
        out: PathBuf,
    },
    /// Render a bench suite as an SVG scatter plot.
    Plot {
        input: PathBuf,
        #[arg(short, long, default_value = "bench.svg")]
        output: PathBuf,
    },
    /// Print kernel taps, one row per line, then their sum.
    KernelDump {
        #[arg(long, value_enum, default_value_t = DumpKind::Gaussian)]
        kind: DumpKind,
        #[arg(long, default_value_t = 2.0, value_parser = positive)]
        sigma: f64,
    },
    /// Start the tuning HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Bind address; loopback unless overridden.
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = hybridkit_service::DEFAULT_MAX_SESSIONS as u64, value_parser = clap::value_parser!(u64).range(1..))]
        max_sessions: u64,
        /// Directory of built UI assets served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Lowpass,
    HighpassSubtract,
    HighpassLog,
}

impl From<Kind> for FilterKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Lowpass => FilterKind::Lowpass,
            Kind::HighpassSubtract => FilterKind::HighpassSubtract,
            Kind::HighpassLog => FilterKind::HighpassLog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpKind {
    Gaussian,
    Log,
    Binomial3,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("must lie in [0, 1], got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_boundary(s: &str) -> Result<BoundaryPolicy, String> {
    s.parse().map_err(|e: hybridkit::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<HighpassMode, String> {
    s.parse().map_err(|e: hybridkit::Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: hybridkit::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
