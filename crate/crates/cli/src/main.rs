//! `doeblin`: batch runner for Doeblin-function experiments.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::run::{Run, SEED_ENV};

#[derive(Parser)]
#[command(name = "doeblin", version, about = "Coupling, renewal and mixing experiments for Doeblin functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides the config seed and DOEBLIN_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Two coupled chains driven by block couplings.
    Couple(RunArgs),
    /// The associated renewal chain and its tail diagnostic.
    Ychain(RunArgs),
    /// Correlation sequence and Cesàro terms for two cylinder sets.
    Mixing(RunArgs),
    /// Variation of log g by agreement depth.
    Varprofile(RunArgs),
    /// Distances between block laws from pairs of pasts.
    Tvprofile(RunArgs),
    /// Stationary law of a local Doeblin function.
    Stationary(RunArgs),
    /// Spin-flip symmetry identities on random states.
    Symmetry(RunArgs),
}

type Handler = fn(&mut Run) -> Result<serde_json::Value, error::CliError>;

impl Command {
    fn split(self) -> (&'static str, Handler, RunArgs) {
        match self {
            Command::Couple(a) => ("couple", commands::couple, a),
            Command::Ychain(a) => ("ychain", commands::ychain, a),
            Command::Mixing(a) => ("mixing", commands::mixing, a),
            Command::Varprofile(a) => ("varprofile", commands::varprofile, a),
            Command::Tvprofile(a) => ("tvprofile", commands::tvprofile, a),
            Command::Stationary(a) => ("stationary", commands::stationary, a),
            Command::Symmetry(a) => ("symmetry", commands::symmetry, a),
        }
    }
}

fn main() -> ExitCode {
    let (name, handler, args) = Cli::parse().command.split();
    let mut run = Run::new(name, &args.config, &args.out_dir, args.workers);
    let outcome = run.load(args.seed, std::env::var(SEED_ENV).ok()).and_then(|()| handler(&mut run));
    if let Err(e) = run.finish(&outcome) {
        eprintln!("doeblin: could not write manifest: {e}");
    }
    match outcome {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("doeblin {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
