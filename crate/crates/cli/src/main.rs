//! `mlfht`: kernel likelihood-free hypothesis tests from the command line.
//!
//! Results go to stdout, diagnostics to stderr. Exit status is 0 on
//! success, 1 on invalid input or failed computation, 2 on usage errors and
//! 3 on I/O failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::Run;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "mlfht", version, about = "Kernel likelihood-free hypothesis testing")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "MLFHT_WORKERS")]
    workers: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the test on Z, calibrate its null and report a p-value.
    Test(TestArgs),
    /// Train a deep kernel and write it with a per-epoch report.
    Train(TrainArgs),
    /// Monte Carlo error grid over (m, n) on the discrete toy problem.
    Sweep(SweepArgs),
    /// Sample-complexity bounds for a kernel on a finite support.
    Bounds(BoundsArgs),
    /// Eigenvalues of a kernel on a finite support.
    Spectrum {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Finite support points (dataset file).
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// p-value of a statistic against a cached calibration table.
    Pvalue(PvalueArgs),
}

#[derive(Args, Clone, Default)]
pub struct KernelArgs {
    /// Kernel file written by `mlfht train`.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Built-in kernel: identity or gaussian.
    #[arg(long = "kernel-kind")]
    pub kind: Option<String>,
    /// Support size of the identity kernel.
    #[arg(long)]
    pub k: Option<u32>,
    /// Gaussian bandwidth (median heuristic when omitted).
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Args)]
pub struct TestArgs {
    /// Background-class pool (evaluation, then calibration, then threshold points).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Signal-class pool, split like --x.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Observations to test.
    #[arg(long)]
    pub z: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub pi: Option<f64>,
    /// Calibration repetitions.
    #[arg(long)]
    pub k_cal: Option<usize>,
    #[arg(long)]
    pub n_ev: Option<usize>,
    #[arg(long)]
    pub n_cal: Option<usize>,
    /// Points per class reserved for the counting-threshold search.
    #[arg(long)]
    pub n_opt: Option<usize>,
    /// Also report Gaussian and binomial discovery significances.
    #[arg(long)]
    pub significance: bool,
    /// Accept calibration data that overlaps the evaluation data.
    #[arg(long)]
    pub allow_overlap: bool,
    /// Write the calibration table here.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// deep_o, deep_g or deep_m.
    #[arg(long)]
    pub arch: Option<String>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Training points per class (default: all).
    #[arg(long)]
    pub n_tr: Option<usize>,
    /// Kernel output path (default kernel.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch CSV path (default train_report.csv).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub m_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub pi: Option<f64>,
    /// Total-error level of the contour.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(long)]
    pub contour_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub support: Option<PathBuf>,
    /// Density bound relative to the base measure.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Misspecification radius.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Truncation level of the tail spectrum norm.
    #[arg(long)]
    pub j: Option<usize>,
}

#[derive(Args)]
pub struct PvalueArgs {
    /// Calibration table written by `mlfht test --cache`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Precomputed statistic; otherwise computed from --x, --y, --z.
    #[arg(long, allow_hyphen_values = true)]
    pub statistic: Option<f64>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub z: Option<PathBuf>,
    #[arg(long)]
    pub n_ev: Option<usize>,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

fn run(cli: Cli) -> Result<String> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cli.workers.or(cfg.workers) {
        if w == 0 {
            anyhow::bail!("worker count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let ctx = Run {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cfg,
    };
    match cli.command {
        Command::Test(a) => commands::test(a, &ctx),
        Command::Train(a) => commands::train(a, &ctx),
        Command::Sweep(a) => commands::sweep(a, &ctx),
        Command::Bounds(a) => commands::bounds(a, &ctx),
        Command::Spectrum { kernel, support } => commands::spectrum(kernel, support, &ctx),
        Command::Pvalue(a) => commands::pvalue(a, &ctx),
    }
}

fn is_io(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>().is_some() || matches!(e.downcast_ref::<mlfht::Error>(), Some(mlfht::Error::Io(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_io(&e) { 3 } else { 1 })
        }
    }
}
