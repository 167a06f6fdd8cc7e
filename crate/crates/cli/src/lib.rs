//! Command-line front end: cycle CSV files in, versioned JSON models and
//! JSON-lines reports out.

pub mod commands;
pub mod csvio;
pub mod error;
pub mod files;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
