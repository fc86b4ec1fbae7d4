//! File formats, reports and the command-line driver for the `dcnet-core`
//! classifier.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvdir;
pub mod eegt;
pub mod error;
mod io;
pub mod report;

pub use error::{CliError, FormatError, Result};
