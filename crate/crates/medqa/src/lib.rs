//! File formats, configuration and the `medqa` command-line driver for the
//! pipeline implemented in `medqa-core`.

pub mod commands;
pub mod config;
pub mod formats;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{cmd_eval, cmd_prepare, cmd_report, cmd_train, CliError, EvalModeArg, Run, Stage};

#[derive(Debug, Parser)]
#[command(name = "medqa", version, about = "Desk-scale medical question answering pipeline")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "medqa.toml")]
    pub config: PathBuf,
    /// Output directory; defaults to `out/` next to the config file.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.encoder.total_steps=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Keep existing artifacts instead of rewriting them.
    #[arg(long, global = true)]
    pub no_overwrite: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, clean, split and augment the corpus.
    Prepare,
    /// Run one training stage (or all of them in order).
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Score the trained models and write a report.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalModeArg,
    },
    /// Merge every evaluation report into one table.
    Report,
}

/// Execute a parsed command line. `env_seed` is the value of `MEDQA_SEED`.
pub fn execute(cli: &Cli, env_seed: Option<&str>) -> Result<String, CliError> {
    let cfg = config::load(&cli.config, &cli.overrides, env_seed)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.base_dir.join("out"));
    let mut run = Run::new(cfg, out);
    run.no_overwrite = cli.no_overwrite;
    match &cli.command {
        Command::Prepare => cmd_prepare(&run),
        Command::Train { stage } => cmd_train(&run, *stage),
        Command::Eval { mode } => cmd_eval(&run, *mode),
        Command::Report => cmd_report(&run),
    }
}
