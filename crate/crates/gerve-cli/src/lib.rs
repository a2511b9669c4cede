//! Command-line front end: configuration, CSV ingestion, geospatial
//! normalisation and background padding, and result emission.

pub mod commands;
pub mod config;
pub mod geo;
pub mod ingest;

use std::ffi::OsString;

/// Exit code for malformed input: unknown flags, unreadable files, bad
/// configuration.
pub const EXIT_INPUT: i32 = 1;
/// Exit code for numeric failures inside the estimation routines.
pub const EXIT_NUMERIC: i32 = 2;

/// Parses arguments and runs one subcommand; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::Parser;
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits; everything
            // else is an input error with usage text.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_INPUT,
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err
                .downcast_ref::<gerve_core::CoreError>()
                .map(|e| e.is_numeric())
                .unwrap_or(false)
            {
                EXIT_NUMERIC
            } else {
                EXIT_INPUT
            }
        }
    }
}
