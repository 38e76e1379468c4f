//! Command-line driver for the `dcot` library.
//!
//! Every command reads a JSON [`RunConfig`], validates all of it (including
//! loading inputs and building the loss) and only then creates the output
//! directory, so a bad config never leaves partial outputs behind.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

pub use config::{Format, RunConfig};
pub use error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Planted data, the generating model and side information.
    Synth,
    /// Fit a model to the observed entries.
    Factorize,
    /// Fit, then write the full reconstructed tensor.
    Complete,
    /// RMSE of a prediction against reference entries.
    Evaluate,
    /// Pick the penalty weight on a held-out split.
    GridSearch,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if let Some(t) = self.threads {
            cfg.threads = t.max(1);
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        cfg.apply_seed();
    }
}

/// Runs `command` and returns the summary written to `summary.json`.
pub fn run(command: Command, mut cfg: RunConfig, overrides: &Overrides) -> Result<serde_json::Value, CliError> {
    overrides.apply(&mut cfg);
    match command {
        Command::Synth => commands::synth(&cfg),
        Command::Factorize => commands::factorize(&cfg, false),
        Command::Complete => commands::factorize(&cfg, true),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::GridSearch => commands::grid_search(&cfg),
    }
}
