//! Command-line harness: configuration loading, the built-in example
//! library, command dispatch and report emission.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

pub use commands::{run_command, Command};
pub use config::{load_config, ConfigError, RunConfig};
pub use fixtures::{builtin, builtin_examples};
pub use report::{Record, Report};
