//! Command-line front end for `hma-core`: run configuration, HMF1 field
//! files, and JSON/CSV reports.

pub mod cli;
pub mod config;
pub mod error;
pub mod hmf;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use error::{CliError, EXIT_SOLVER, EXIT_VALIDATION};

/// Parse `args` (program name first), run, and return the exit status:
/// 0 on success, 2 for invalid input, 3 when a solve fails.
pub fn cli_main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match cli::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
