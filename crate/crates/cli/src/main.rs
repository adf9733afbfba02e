use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gbc_cli::commands::{self, execution};
use gbc_cli::{init_threads, resolve_threads, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "gbc", version, about = "Generative Bayesian computation experiments")]
struct Cli {
    /// Run configuration (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to GBC_THREADS, then `run.threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the reference table.
    GenTable,
    /// Fit the summary statistic on the table.
    FitSummary,
    /// Train the quantile networks and write a checkpoint.
    Train,
    /// Draw from the trained posterior at the observation.
    Sample,
    /// Rejection ABC with a tolerance sweep.
    Abc,
    /// Fiducial rejection sampling.
    Fiducial,
    /// Network, ABC and fiducial posteriors against the conjugate answer.
    BenchmarkNormal,
    /// Quantile-trajectory emulator with held-out scenarios.
    BenchmarkEpidemic,
    /// Finite-difference check of random networks.
    Gradcheck,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.to_string_lossy().into_owned();
    }
    let env = std::env::var("GBC_THREADS").ok();
    let threads = match resolve_threads(cli.threads, env.as_deref())? {
        0 => cfg.run.threads,
        n => n,
    };
    cfg.run.threads = threads;
    init_threads(threads);
    let exec = execution(threads);
    match cli.command {
        Command::GenTable => commands::cmd_gen_table(&cfg, exec),
        Command::FitSummary => commands::cmd_fit_summary(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Sample => commands::cmd_sample(&cfg, exec),
        Command::Abc => commands::cmd_abc(&cfg, exec),
        Command::Fiducial => commands::cmd_fiducial(&cfg, exec),
        Command::BenchmarkNormal => commands::cmd_benchmark_normal(&cfg, exec),
        Command::BenchmarkEpidemic => commands::cmd_benchmark_epidemic(&cfg, exec),
        Command::Gradcheck => commands::cmd_gradcheck(&cfg, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gbc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
