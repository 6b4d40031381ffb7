use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use kernelweave::report::{run_stage, ReportError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "kernelweave", version, about = "Multi-kernel GPU workload generation and power-performance analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate all inputs.
    Ingest(Opts),
    /// Standardize, run PCA and cluster each feature track.
    Characterize(Opts),
    /// Build the consensus partition and workload database.
    Ensemble(Opts),
    /// Generate multi-kernel workload sets.
    Pair(Opts),
    /// Simulate every set on every device model.
    Simulate(Opts),
    /// Write report.json, metrics.csv, timelines and plots.
    Report(Opts),
    /// Run every stage from scratch.
    All(Opts),
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
}

fn run(cli: Cli) -> Result<(), ReportError> {
    let (stage, opts) = match cli.command {
        Command::Ingest(o) => (Some(Stage::Ingest), o),
        Command::Characterize(o) => (Some(Stage::Characterize), o),
        Command::Ensemble(o) => (Some(Stage::Ensemble), o),
        Command::Pair(o) => (Some(Stage::Pair), o),
        Command::Simulate(o) => (Some(Stage::Simulate), o),
        Command::Report(o) => (Some(Stage::Report), o),
        Command::All(o) => (None, o),
    };
    let mut cfg = RunConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.k.is_some() {
        cfg.k = opts.k;
    }
    if let Some(out) = opts.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    run_stage(&cfg, stage, &out)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KERNELWEAVE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
