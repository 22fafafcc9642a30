//! `romkit` command-line front end.
//!
//! Every subcommand reads a JSON config, writes its outputs and a
//! `report.json` into `--out`, and exits with 0 when all embedded audits
//! pass, 2 when any audit fails and 1 on errors.

mod analysis;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "romkit", version, about = "Snapshot-based parametric model reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the piston model over a parameter grid and write snapshots.
    Simulate(Args),
    /// Karhunen-Loeve / POD expansion with truncation table.
    Pod(Args),
    /// Two-subsystem analysis from a coupled manifest.
    Coupled(Args),
    /// Tensorize over a parameter grid and run TT-SVD and binary splits.
    Tensor(Args),
    /// Encode an SPD or rotation field, reduce it and decode it again.
    MatrixField(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for the randomized audits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat the last parameter column as sample weights.
    #[arg(long)]
    weights: bool,
}

fn run(cli: Cli) -> Result<bool> {
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Pod(a) => ("pod", a),
        Command::Coupled(a) => ("coupled", a),
        Command::Tensor(a) => ("tensor", a),
        Command::MatrixField(a) => ("matrix-field", a),
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let start = Instant::now();
    let (config, out, seed, w) = (args.config.as_path(), args.out.as_path(), args.seed, args.weights);
    let passed = match &cli.command {
        Command::Simulate(_) => commands::simulate::run(config, out, seed)?,
        Command::Pod(_) => commands::pod::run(config, out, seed, w)?,
        Command::Coupled(_) => commands::coupled::run(config, out, seed, w)?,
        Command::Tensor(_) => commands::tensor::run(config, out, seed, w)?,
        Command::MatrixField(_) => commands::field::run(config, out, seed, w)?,
    };
    report::write_timing(out, name, start.elapsed())?;
    Ok(passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("romkit: one or more audits failed; see report.json");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("romkit: {e:#}");
            ExitCode::from(1)
        }
    }
}
