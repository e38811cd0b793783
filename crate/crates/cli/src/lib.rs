//! Configuration and experiment drivers behind the `ns2d` binary.

pub mod commands;
pub mod config;

pub use commands::{output_root, run, Command, RunError, Summary, VERSION};
pub use config::{ConfigError, RunConfig};
