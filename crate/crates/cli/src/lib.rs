//! Command-line driver for the giteval evaluation engine.
//!
//! Subcommands write plain files (CSV, JSON, Markdown) into `--out`, always
//! including a `manifest.json` that reproduces the run when passed back as
//! `--config`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod summary;

use anyhow::Result;

pub use cli::{Cli, Command};
pub use config::RunConfig;
use summary::Failure;

/// Result of a run that got far enough to write its outputs.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Sequences that could not be processed.
    pub failures: Vec<Failure>,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Resolves the configuration and runs one subcommand.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cmd = &cli.command;
    let mut base = match cmd.config_path() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let over = cmd.overrides()?;
    // a tracker source given on the command line replaces the configured one
    if over.client.is_some() {
        base.listen = None;
    }
    if over.listen.is_some() {
        base.client = None;
    }
    let cfg = base.overlay(over);
    let out = cmd.out();
    match cmd {
        Command::Attributes { .. } => commands::attributes::run(&cfg, out),
        Command::Densify { .. } => commands::densify::run(&cfg, out),
        Command::EvalOpe { .. } => commands::ope::run(&cfg, out),
        Command::EvalRope { .. } => commands::rope::run(&cfg, out),
        Command::Report { .. } => commands::report::run(&cfg, out),
    }
}
