//! File formats and the `localscore` command-line pipeline:
//! validate, match, score, oracle checks, balance and estimation.

pub mod commands;
pub mod error;
pub mod files;
pub mod manifest;
pub mod report;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{execute, synth_config, Cli, Command, TemplateSidecar};
pub use error::{Error, Result};
pub use files::{read_market, read_scores, write_market, write_scores, ReadOptions, Role, Schema, ScoreLine};
pub use manifest::{RunManifest, Staging};

/// Runs the CLI on `args` (program name first) and returns the exit code.
/// Success prints a JSON summary on stdout; failure prints
/// `{"error": {...}}` on stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = Error::Usage(e.render().to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &argv) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
