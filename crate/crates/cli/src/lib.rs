//! Command-line front end for the evocache simulator, policy search and
//! workload clustering.

pub mod args;
pub mod commands;
pub mod config;
pub mod policy_ref;
pub mod table;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};

/// Exit code for runtime failures.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit code for malformed invocations.
pub const EXIT_USAGE: i32 = 2;

/// A bad invocation detected after argument parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
