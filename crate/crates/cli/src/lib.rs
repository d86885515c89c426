//! Config-driven front end: modal tables, slow-flow and direct runs, steady
//! states, projections and run comparisons, all persisted as CSV with JSON
//! metadata.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Command, Invocation};
pub use config::LoadedConfig;
pub use error::{CliError, CliResult};
