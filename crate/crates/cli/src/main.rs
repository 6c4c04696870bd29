//! `rwt`: one entry point for selection, label curation, synthetic corpora,
//! training, evaluation and the vetting service.
//!
//! Every run writes `effective_config.json` and `rwt.log` next to its
//! output. Passing that file back through `--config` repeats the run.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use settings::Failure;

#[derive(Debug, Parser)]
#[command(name = "rwt", version, about = "Overlaying-text detection pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file of settings; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, visible_alias = "out-dir", value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Echo the log to stderr and include debug records.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep images whose region-score mass clears the gate cutoff.
    Select(commands::SelectArgs),
    /// Filter votes by time, aggregate them, binarize and split.
    Aggregate(commands::AggregateArgs),
    /// Dataset statistics as text, CSV tables and SVG plots.
    Stats(commands::StatsArgs),
    /// Generate a labelled synthetic corpus.
    Synth(commands::SynthArgs),
    /// Train one classifier variant.
    Train(commands::TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(commands::EvalArgs),
    /// Serve the review API.
    Serve(commands::ServeArgs),
    /// Compute and cache score maps for a manifest.
    Scoremaps(commands::ScoremapsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::ValueValidation, msg).exit(),
        Err(Failure::Domain(e)) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
