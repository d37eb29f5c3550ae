//! Library side of the `qong` command-line tool: configuration parsing,
//! the five commands, and their serialized outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod units;

pub use commands::{CliError, Command};
pub use config::RunConfig;

/// Version of every JSON/CSV layout written by this crate.
pub const FORMAT_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
