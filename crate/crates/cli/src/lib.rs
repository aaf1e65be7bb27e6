//! Scenario runner for `cvqkd-lab`: reproduces the figure data sets, runs
//! loss sweeps and Monte Carlo estimation experiments, and writes CSV or
//! JSON.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

use std::fs;
use std::io::Write;

pub use config::{Format, LossRange, Overrides, RunConfig, Scenario};
pub use error::CliError;
pub use output::{Output, Table};

/// Runs a scenario and writes its output to the configured path, or to
/// `stdout` when none is set.
pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let output = scenarios::run(cfg)?;
    let bytes = output.to_bytes(cfg.format);
    match &cfg.out {
        Some(path) => fs::write(path, &bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e)),
        None => std::io::stdout()
            .lock()
            .write_all(&bytes)
            .map_err(|e| CliError::io("writing stdout", e)),
    }
}
