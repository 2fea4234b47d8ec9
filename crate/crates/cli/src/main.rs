//! `psp`: train, evaluate and run the prosodic structure predictor.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "psp", version, about = "Multi-level prosodic structure prediction")]
struct Cli {
    /// Run config (train, sweep) or synthetic corpus spec (gen-synthetic).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed, or the generator seed for gen-synthetic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes the checkpoint, resolved config and loss log.
    Train,
    /// Score a checkpoint on an annotated corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Annotate plain text with predicted boundary markers.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Train and evaluate one model per window size.
    Sweep {
        /// Comma-separated, strictly increasing window sizes.
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Write a synthetic corpus.
    GenSynthetic,
    /// Utterance, character and boundary counts of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn required(opt: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    opt.clone().ok_or_else(|| CliError::Usage(format!("--{flag} is required for this command")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train => commands::train(&required(&cli.config, "config")?, cli.seed, &required(&cli.out, "out")?),
        Command::Eval { checkpoint, corpus } => commands::eval(checkpoint, corpus, &required(&cli.out, "out")?),
        Command::Predict { checkpoint, input } => commands::predict(checkpoint, input, &required(&cli.out, "out")?),
        Command::Sweep { sizes } => commands::sweep(
            &required(&cli.config, "config")?,
            cli.seed,
            sizes.as_deref(),
            &required(&cli.out, "out")?,
        ),
        Command::GenSynthetic => commands::gen_synthetic(cli.config.as_deref(), cli.seed, &required(&cli.out, "out")?),
        Command::Stats { corpus } => commands::stats(corpus, cli.out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
