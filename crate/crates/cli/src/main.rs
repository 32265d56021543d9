//! harfeat: train and evaluate policy-learned sensor features across users.
//!
//! Pipeline: `synth`/`ingest` export per-plan window CSVs, `train` fits one
//! policy per plan, `eval` scores held-out users with a linear probe,
//! `sweep` retrains along one hyperparameter axis, `report` summarizes.
//! Everything is driven by a TOML config plus `--set` overrides, and every
//! output directory is content-addressed by a digest of the config.

mod commands;
mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "harfeat",
    version,
    about = "Cross-user activity features learned by a PPO-trained sequence policy",
    propagate_version = true
)]
struct Cli {
    /// Config file (default: config/default.toml if present, else built-ins).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set ppo.rounds=40 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read a real sensor corpus and export per-plan window CSVs.
    Ingest {
        /// Raw corpus root (beats dataset.root and the environment).
        #[arg(long, value_name = "DIR")]
        root: Option<PathBuf>,
    },
    /// Generate the synthetic corpus and export per-plan window CSVs.
    Synth,
    /// Train one policy per split plan (PPO on the plan's source users).
    Train {
        /// Plan name or directory; default is every plan in the manifest.
        #[arg(long)]
        plan: Option<String>,
    },
    /// Evaluate trained features on each plan's held-out users.
    Eval {
        /// Plan name or directory; default is every plan in the manifest.
        #[arg(long)]
        plan: Option<String>,
        /// Checkpoint to score (default: this run's trained checkpoint).
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
    },
    /// Retrain and re-evaluate along one hyperparameter axis.
    Sweep {
        /// Axis to vary: s, w_cls, or w_inv.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values (at least 2).
        #[arg(long, value_delimiter = ',', value_name = "V1,V2,...")]
        values: Vec<String>,
        /// Concurrent (value, plan) cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize evaluation results across plans.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is a usage error.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    match &cli.cmd {
        Cmd::Ingest { root } => commands::ingest::run(&cfg, root.as_deref()),
        Cmd::Synth => commands::synth::run(&cfg),
        Cmd::Train { plan } => commands::train::run(&cfg, plan.as_deref()),
        Cmd::Eval { plan, checkpoint } => {
            commands::eval::run(&cfg, plan.as_deref(), checkpoint.as_deref())
        }
        Cmd::Sweep { axis, values, jobs } => commands::sweep::run(&cfg, axis, values, *jobs),
        Cmd::Report => commands::report::run(&cfg),
    }
}
