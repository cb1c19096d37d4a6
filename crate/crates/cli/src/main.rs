use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use detsum::commands::{cmd_bench, cmd_expsum, cmd_solve, cmd_verify, EXIT_ERROR};
use detsum::RunConfig;

#[derive(Parser)]
#[command(version, about = "Ground states as sums of Slater determinants", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (`section.key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Overrides `solve.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; only used when built with the `parallel` feature
    #[arg(long)]
    threads: Option<usize>,
    /// Enables the reuse fast path between directions
    #[arg(long)]
    fast_path: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Green's-function iteration; writes trace.csv, wavefunction.wf and summary
    Solve(RunArgs),
    /// Randomized fast-formula checks against the dense oracle
    Verify(RunArgs),
    /// Prints the exponential sum for 1/t on [1, R] as CSV
    Expsum {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e8)]
        upper: f64,
    },
    /// Timing table over the bench.* grid
    Bench(RunArgs),
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.solve.seed = s;
    }
    if args.fast_path {
        cfg.solve.fast_path = true;
    }
    set_threads(args.threads)?;
    Ok(cfg)
}

#[cfg(feature = "parallel")]
fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(threads: Option<usize>) -> Result<()> {
    if threads.is_some_and(|t| t > 1) {
        eprintln!("note: built without the `parallel` feature; running single-threaded");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(a) => cmd_solve(&load(&a)?),
        Command::Verify(a) => cmd_verify(&load(&a)?),
        Command::Expsum { eps, upper } => cmd_expsum(eps, upper),
        Command::Bench(a) => cmd_bench(&load(&a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
