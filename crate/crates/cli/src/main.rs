//! hjlab: discrete-velocity laboratory for the coupled forward-backward
//! Boltzmann system and its Hamilton-Jacobi functional.
//!
//! Exit codes: 0 success, 1 validation error, 2 solver divergence
//! (solve/functional), 3 internal error.

mod commands;
mod config;
mod report;
mod verify;

use clap::{Parser, Subcommand};
use commands::{cmd_functional, cmd_solve, cmd_sweep, cmd_verify, CommandInput, Outcome};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hjlab",
    about = "Coupled Boltzmann / Hamilton-Jacobi functional laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite (module invariants, oracle equivalence,
    /// optional refinement slopes) and write a structured report.
    Verify(CommonArgs),
    /// Solve the coupled system; writes trajectory and iteration CSVs.
    Solve(CommonArgs),
    /// Evaluate the functional by both formulas, the stationary limit, and
    /// the mild HJ residual over the configured t-list.
    Functional(CommonArgs),
    /// Cartesian sweep over configured parameter lists; one CSV row per
    /// point, divergences recorded but never aborting.
    Sweep(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (fallback: HJLAB_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Scenario seed override.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads(cli_threads: Option<usize>) {
    let from_env = std::env::var("HJLAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    if let Some(n) = cli_threads.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn is_validation_error(err: &anyhow::Error) -> bool {
    if let Some(lab) = err.downcast_ref::<hjlab_core::LabError>() {
        return matches!(lab, hjlab_core::LabError::InvalidParameter { .. });
    }
    // config parse failures (unreadable file, unknown keys, bad values)
    err.chain().any(|c| {
        let s = c.to_string();
        s.contains("invalid config")
            || s.contains("cannot read config")
            || s.contains("unknown regime")
            || s.contains("unknown preset")
            || s.contains("unknown mode")
    })
}

fn run(args: &CommonArgs, which: &str) -> anyhow::Result<Outcome> {
    init_threads(args.threads);
    let (config, config_text) = RunConfig::load(&args.config)?;
    let out_dir = commands::ensure_out_dir(&config, args.out.as_deref());
    let input = CommandInput {
        config,
        config_text,
        out_dir,
        seed_override: args.seed,
    };
    match which {
        "verify" => cmd_verify(&input),
        "solve" => cmd_solve(&input),
        "functional" => cmd_functional(&input),
        _ => cmd_sweep(&input),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version print and exit cleanly; real usage errors are
            // validation failures
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let (args, which) = match &cli.command {
        Command::Verify(a) => (a, "verify"),
        Command::Solve(a) => (a, "solve"),
        Command::Functional(a) => (a, "functional"),
        Command::Sweep(a) => (a, "sweep"),
    };
    match run(args, which) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Divergence) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if which == "verify" && e.to_string().contains("verification failed") {
                // failed checks are reported; treat as validation-style failure
                return ExitCode::from(1);
            }
            if is_validation_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
