//! Command-line driver: scenario simulation, LLM-driven dataset campaigns,
//! architecture search and evaluation, each persisted in a self-describing
//! run directory.

pub mod backend;
pub mod commands;
pub mod config;
pub mod error;
pub mod rundir;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use backend::{Backend, OfflinePolicy};
pub use commands::{EvalSplit, Scorecard};
pub use config::{BackendConfig, RunConfig};
pub use error::{exit, CliError};
pub use rundir::{Manifest, RunDir, StageStatus};

#[derive(Debug, Parser)]
#[command(name = "tsa", version, about = "Transient stability assessment: scenario campaigns and architecture search")]
pub struct Cli {
    /// Run configuration (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Use the offline mock backend whatever the config says.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and label one scenario.
    Simulate {
        /// Scenario file (TOML, or JSON by extension).
        scenario: PathBuf,
        /// Bundled case name or case file; overrides the config.
        #[arg(long)]
        case: Option<String>,
    },
    /// Generate a labeled dataset from a study request.
    Campaign {
        /// Study request; falls back to campaign.request.
        request: Option<String>,
    },
    /// Search a classifier architecture for a dataset.
    Search {
        /// Dataset file (.tsds).
        dataset: PathBuf,
    },
    /// Campaign followed by search in one run directory.
    Pipeline {
        request: Option<String>,
    },
    /// Score saved weights on a dataset.
    Eval {
        /// Run directory, its search directory, or a weights file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: EvalSplit,
    },
}

/// Loads the config and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Command::Simulate { case: Some(case), .. } = &cli.command {
        cfg.case = case.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes one invocation.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Simulate { scenario, .. } => commands::cmd_simulate(&cfg, scenario, out).map(|_| ()),
        Command::Campaign { request } => commands::cmd_campaign(&cfg, cli.offline, request.as_deref(), out).map(|_| ()),
        Command::Search { dataset } => commands::cmd_search(&cfg, cli.offline, dataset, out).map(|_| ()),
        Command::Pipeline { request } => commands::cmd_pipeline(&cfg, cli.offline, request.as_deref(), out).map(|_| ()),
        Command::Eval { model, dataset, split } => commands::cmd_eval(&cfg, model, dataset, *split, out).map(|_| ()),
    }
}
