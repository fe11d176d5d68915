//! Library side of the `pmri` command-line tool.
//!
//! Each subcommand is a plain function taking its parsed arguments, so the
//! commands can be driven from tests without spawning a process.
//!
//! Output layout:
//!
//! ```text
//! data/                  (generate)
//!   manifest.json
//!   ds000007/ kspace.pmri mask.pmri sens.pmri reference.pmri labels.pmri
//!             reference.png labels.png
//! recon/                 (reconstruct)
//!   manifest.json
//!   ds000007/ sos.pmri sos.png [labels.pmri labels.png]
//! model/                 (train)
//!   manifest.json checkpoint.pmri loss.csv
//! eval/                  (evaluate)
//!   manifest.json report.csv
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::Path;

pub mod args;
pub mod commands;
pub mod image_out;
pub mod manifest;
pub mod report;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<pmri_core::Error> for CliError {
    fn from(e: pmri_core::Error) -> Self {
        if e.is_numerical() {
            Self::numerical(e.to_string())
        } else {
            Self::data(e.to_string())
        }
    }
}

pub use manifest::parse_manifest;
pub use report::parse_report;
