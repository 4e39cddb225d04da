//! Command-line front end and HTTP scenario service.

pub mod args;
pub mod commands;
pub mod config;
pub mod serve;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use epiecon_core::ErrorClass;
use serde_json::json;

pub use args::{Cli, Command, Common};
pub use config::RunConfig;

/// Version tag carried by every report and API payload.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit code and machine-readable tag for a failed command.
pub fn classify(err: &anyhow::Error) -> (i32, &'static str, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<epiecon_core::Error>() {
            return match e.class() {
                ErrorClass::Data => (EXIT_DATA, "data", e.kind()),
                ErrorClass::Numeric => (EXIT_NUMERIC, "numeric", e.kind()),
            };
        }
        if cause.is::<toml::de::Error>() {
            return (EXIT_DATA, "data", "config");
        }
        if cause.is::<std::io::Error>() {
            return (EXIT_DATA, "data", "io");
        }
    }
    (EXIT_DATA, "data", "other")
}

/// The error chain joined by ": ", skipping causes their parent already prints.
pub fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

pub fn error_json(class: &str, kind: &str, message: &str) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "class": class, "kind": kind, "message": message },
    })
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
/// Failures print an error JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
                _ => {
                    eprint!("{}", e.render());
                    let text = e.to_string();
                    let msg = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
                    eprintln!("{}", error_json("usage", "usage", msg));
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            let (code, class, kind) = classify(&err);
            let _ = std::io::stdout().flush();
            eprintln!("{}", error_json(class, kind, &message(&err)));
            code
        }
    }
}
