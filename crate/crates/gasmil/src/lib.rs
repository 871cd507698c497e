//! IO companion to `gasmil-core`: file formats (bag files, JSON manifests,
//! checkpoints, PPM images), parallel evaluation, and the `gasmil` CLI.

pub mod cli;
mod error;
pub mod evaluate;
pub mod formats;
pub mod options;
pub mod report;

pub use error::{CliError, Result};

/// Reads the `GASMIL_THREADS` cap. Unset means "use every core"; anything
/// that does not parse as a positive integer is a usage error.
pub fn thread_cap_from_env() -> Result<Option<usize>> {
    match std::env::var("GASMIL_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::usage(format!("GASMIL_THREADS: {e}"))),
        Ok(text) => match text.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::usage(format!(
                "GASMIL_THREADS must be a positive integer, got `{text}`"
            ))),
        },
    }
}
