//! Command implementations behind the `effort` binary. Each command takes a
//! resolved [`RunConfig`] and a writer for its human-readable summary, and
//! returns the report it also writes to the run directory.

pub mod commands;
pub mod config;

use effort_core::Error;

pub use config::{RunConfig, RunPaths};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}
