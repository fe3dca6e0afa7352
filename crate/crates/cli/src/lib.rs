//! Command-line front end: market and measure files in, JSON reports out.
//!
//! Exit codes: 0 consistent, 1 arbitrage, 2 inconclusive, 64 input error.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

mod commands;
pub mod input;
pub mod report;
pub mod target;

pub use commands::{
    execute, summary, Cli, Command, DEFAULT_GRID, EXIT_ARBITRAGE, EXIT_INCONCLUSIVE, EXIT_INPUT,
    EXIT_OK, MAX_ITER_ENV,
};

use report::{ErrorReport, ReportFile};

/// Parse `args` (program name first), run the command, write the report and
/// return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            let mut report = ReportFile::new(
                &args
                    .get(1)
                    .map(|a| a.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
            report.exit_code = EXIT_INPUT;
            report.error = Some(ErrorReport {
                kind: "usage".into(),
                message: e.kind().to_string(),
                violations: Vec::new(),
                arbitrage_report: None,
            });
            print!("{}", report.to_json());
            return EXIT_INPUT;
        }
    };
    let mut report = execute(&cli.command);
    let text = summary(&report);
    if !text.is_empty() {
        eprintln!("{text}");
    }
    commands::emit(&cli.command, &mut report);
    report.exit_code
}
