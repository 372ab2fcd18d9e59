//! Command-line experiment runner for the `gfssm-core` kernels.
//!
//! Exit codes: 0 when every checked property holds, 1 on a property
//! violation (or a diverged training run), 2 on usage and configuration
//! errors. All randomness derives from `--seed`, so reruns produce
//! identical CSV output apart from timing columns.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
pub mod sweep;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parse `args` (including the program name), run the command, and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::EquivCheck(a) => commands::equiv_check(a),
        Command::Stability(a) => commands::stability(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::Train(a) => commands::train(a),
        Command::StreamCheck(a) => commands::stream_check(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(Outcome::Pass) => EXIT_OK,
        Ok(Outcome::Fail) => EXIT_VIOLATION,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
