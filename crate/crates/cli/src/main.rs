//! `casecf`: counterfactual explanations for process event logs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "casecf", version, about = "Case-level counterfactual explanations for event logs")]
struct Cli {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides one configuration key, e.g. `--set explain.threshold=450`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the model and write the log and the sampled rows.
    Synth {
        #[arg(long)]
        traces: Option<usize>,
    },
    /// Build the situation feature table from the configured log.
    Extract,
    /// Model utilities.
    Sem {
        #[command(subcommand)]
        command: SemCommand,
    },
    /// Explain one case. Desirable means strictly below (or above) the
    /// threshold: for "at most 500" use a threshold of 501.
    Explain {
        #[arg(long)]
        case: Option<String>,
        /// Situation prefix length; the last situation of the case when omitted.
        #[arg(long)]
        prefix: Option<usize>,
    },
    /// Compare the model with the regression baselines.
    Evaluate {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        prefix: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum SemCommand {
    /// Parse a model and print its parent graph as DOT.
    Check { path: Option<PathBuf> },
}

fn run(cli: Cli) -> Result<()> {
    let loaded = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match cli.command {
        Command::Synth { traces } => commands::synth(&loaded, &cli.out, traces),
        Command::Extract => commands::extract(&loaded, &cli.out),
        Command::Sem { command: SemCommand::Check { path } } => commands::sem_check(&loaded, path.as_deref()),
        Command::Explain { case, prefix } => commands::explain_case(&loaded, &cli.out, case.as_deref(), prefix),
        Command::Evaluate { case, prefix } => commands::evaluate(&loaded, &cli.out, case.as_deref(), prefix),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
