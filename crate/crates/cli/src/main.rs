//! `fragkin`: batch front end for the fragmentation solver.
//!
//! Exit status: 0 when every enabled check passes, 1 when a check fails,
//! 2 for configuration errors, 3 for solver failures, 4 for I/O errors.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fragkin", version, about = "Collision-induced fragmentation solver and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Accepted for interface stability; the solver is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; FRAGKIN_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, then write trajectory.csv, moments.csv, events.json, diagnostics.json
    /// and the resolved scenario.toml.
    Run(Common),
    /// Write the contraction constants to estimate.json.
    Estimate(Common),
    /// Refinement study in the truncation index; writes refine.json.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Comma-separated truncation indices, e.g. 4,8,16.
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<f64>,
    },
    /// Check the kernel hypotheses; writes validate.json.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Sample on [1/n², n²] instead of the truncated domain.
        #[arg(long)]
        untruncated: bool,
    },
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    if let Some(threads) = cli.threads {
        fragkin_core::par::init_thread_pool(usize::from(threads));
    }
    let _ = cli.seed;
    let common = match &cli.command {
        Command::Run(c) | Command::Estimate(c) => c,
        Command::Refine { common, .. } | Command::Validate { common, .. } => common,
    };
    let loaded = commands::load(&common.config)?;
    let out = commands::output_dir(common.out.clone(), &loaded.config)?;
    match &cli.command {
        Command::Run(_) => commands::run(&loaded, &out),
        Command::Estimate(_) => commands::estimate(&loaded, &out),
        Command::Refine { n_list, .. } => commands::refine(&loaded, &out, n_list),
        Command::Validate { untruncated, .. } => commands::validate(&loaded, &out, *untruncated),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("fragkin: {e}");
            e.exit_code()
        }
    }
}
