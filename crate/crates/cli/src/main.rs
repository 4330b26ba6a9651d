//! `maxcorr` command-line front end.
//!
//! Every subcommand prints one JSON document on stdout. Errors go to stderr
//! as `{"error": ..., "kind": ...}` and map to stable exit codes:
//!
//! | code | meaning                          |
//! |------|----------------------------------|
//! | 0    | success                          |
//! | 2    | input or validation error        |
//! | 3    | numerical error                  |
//! | 4    | solver did not converge          |
//! | 5    | at least one check failed        |

mod baseline;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, Outcome};
use maxcorr::{Error, ErrorKind};

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::NotConverged => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(4),
        Ok(Outcome::ChecksFailed) => ExitCode::from(5),
        Err(err) => {
            let kind = match err.kind() {
                ErrorKind::Validation => "validation",
                ErrorKind::Numerical => "numerical",
                ErrorKind::NotConverged => "not-converged",
            };
            let body = serde_json::json!({ "error": err.to_string(), "kind": kind });
            eprintln!("{body}");
            ExitCode::from(exit_code(&err))
        }
    }
}
