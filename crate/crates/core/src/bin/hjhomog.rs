use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hjhomog::config::ExperimentConfig;
use hjhomog::runner::{run, Command, RunOptions};
use hjhomog::Error;

/// Homogenization experiments for convex Hamilton-Jacobi equations.
///
/// Exit status: 0 when every audit passes, 1 on a failed audit or a
/// numerical error, 2 on usage or config errors.
#[derive(Parser)]
#[command(name = "hjhomog", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the medium's structural assumptions and the initial data.
    Audit(Flags),
    /// Estimate the effective Lagrangian and Hamiltonian.
    Effective(Flags),
    /// Compare rescaled and homogenized solutions across epsilon.
    Converge(Flags),
    /// Stable norms of a metric medium, by both methods.
    StableNorm(Flags),
}

#[derive(Args)]
struct Flags {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Action-table cache root (falls back to the config, then $HJHOMG_CACHE_DIR).
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// Treat warnings (unconverged directions, non-uniform regularity) as failures.
    #[arg(long)]
    strict: bool,
    /// Replace every seed list with this single seed.
    #[arg(long, value_name = "K")]
    seed_override: Option<u64>,
    /// Also write each rescaled solution as CSV (converge only).
    #[arg(long)]
    export_fields: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Audit(f) => (Command::Audit, f),
        Cmd::Effective(f) => (Command::Effective, f),
        Cmd::Converge(f) => (Command::Converge, f),
        Cmd::StableNorm(f) => (Command::StableNorm, f),
    };
    let cfg = match ExperimentConfig::load(&flags.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        out: flags.out,
        cache: flags.cache,
        workers: flags.workers.map(|w| w as usize),
        strict: flags.strict,
        seed_override: flags.seed_override,
        export_fields: flags.export_fields,
    };
    match run(command, &cfg, &opts) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            for a in &m.audits {
                println!("{} {}: {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
            }
            for w in &m.warnings {
                println!("warn {w}");
            }
            println!(
                "{} artifacts in {} (cache hits {}, misses {})",
                m.artifacts.len(),
                outcome.out_dir.display(),
                m.cache.hits,
                m.cache.misses
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
