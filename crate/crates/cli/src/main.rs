//! `chessprobe`: build corpora, train tiny chess language models, and probe
//! them for board-state tracking.

mod cmd;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigFile, Global};
use crate::error::CliError;

const AFTER_HELP: &str = "\
Settings are resolved as built-in defaults, then the --config file, then \
command-line flags (flags win). In the TOML file, top-level data_dir, seed \
and threads apply to every command and a [command] table holds that \
command's options, named like the flags with underscores.

Relative paths are resolved against the data directory.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 runtime failure.";

#[derive(Debug, Parser)]
#[command(name = "chessprobe", version, about, after_long_help = AFTER_HELP)]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "CHESSPROBE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Serialize)]
struct GlobalFlags {
    #[serde(skip_serializing_if = "Option::is_none")]
    data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse PGN files into a filtered, deduplicated UCI dataset.
    Ingest(cmd::ingest::Args),
    /// Split a dataset and build the four probe sets.
    Prepare(cmd::prepare::Args),
    /// Generate random legal games as a stand-in corpus.
    Synth(cmd::synth::Args),
    /// Train a model and write a checkpoint.
    Train(cmd::train::Args),
    /// Per-move perplexity of a checkpoint on a dataset.
    Ppl(cmd::eval::PplArgs),
    /// Run probe sets through a checkpoint.
    Probe(cmd::eval::ProbeArgs),
    /// Classify saved probe predictions and write the report tables.
    Analyze(cmd::eval::AnalyzeArgs),
    /// Play against a checkpoint in the terminal.
    Play(cmd::play::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = GlobalFlags {
        data_dir: cli.data_dir,
        seed: cli.seed,
        threads: cli.threads,
    };
    let global: Global = file.global(serde_json::to_value(flags).expect("flags serialize"))?;
    if global.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    match cli.command {
        Command::Ingest(a) => cmd::ingest::run(&file, global, a),
        Command::Prepare(a) => cmd::prepare::run(&file, global, a),
        Command::Synth(a) => cmd::synth::run(&file, global, a),
        Command::Train(a) => cmd::train::run(&file, global, a),
        Command::Ppl(a) => cmd::eval::run_ppl(&file, global, a),
        Command::Probe(a) => cmd::eval::run_probe(&file, global, a),
        Command::Analyze(a) => cmd::eval::run_analyze(&file, global, a),
        Command::Play(a) => cmd::play::run(&file, global, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
