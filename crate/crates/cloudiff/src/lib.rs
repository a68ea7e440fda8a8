//! File formats and the batch command line for `cloudiff-core`.
//!
//! The `cloudiff` binary exposes seven subcommands (`synth`, `filter`,
//! `register`, `optimize`, `detect`, `evaluate`, `sweep`). Each reads a flat
//! key-value configuration (see [`config`]) and writes plain files: PLY
//! clouds, trajectory text, metric CSV rows, JSON summaries and SVG plots.

pub mod commands;
pub mod config;
pub mod io;
pub mod plot;

use std::fs;
use std::path::Path;

pub use commands::{run, CliError, Command};
pub use config::Settings;

/// Builds settings from an optional config file followed by `--key value`
/// pairs. A `--config FILE` pair among `args` is read before the others.
pub fn settings_from_args(config: Option<&Path>, overwrite: bool, args: &[String]) -> Result<Settings, CliError> {
    let mut pairs = config::parse_cli_pairs(args)?;
    let mut files: Vec<String> = config.map(|p| p.to_string_lossy().into_owned()).into_iter().collect();
    pairs.retain(|(k, v)| {
        if k == "config" {
            files.push(v.clone());
            false
        } else {
            true
        }
    });
    let mut settings = Settings::default();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| CliError::Input(format!("config file {f}: {e}")))?;
        settings.apply(&config::parse_config_text(&text)?)?;
    }
    settings.apply(&pairs)?;
    if overwrite {
        settings.overwrite = true;
    }
    Ok(settings)
}
