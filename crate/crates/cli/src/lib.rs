//! `tokenloss` command-line front end.
//!
//! [`run`] parses arguments, dispatches to a subcommand and maps failures to
//! exit codes: 1 for usage errors, 2 for data or validation errors, 3 for
//! internal errors. Every failure also prints one JSON object on stderr.

mod args;
mod common;
mod concord;
mod correlate;
mod demo;
mod render;
mod report;
mod shape;
mod summarize;
mod svg;

use std::ffi::OsString;
use std::panic::{catch_unwind, AssertUnwindSafe};

use clap::Parser;

pub use args::{Cli, Command};

/// Environment variable read for the default worker count.
pub const THREADS_ENV: &str = "TOKENLOSS_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(tokenloss_core::Error),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m.clone(),
            CliError::Data(e) => e.to_string(),
        }
    }

    /// The single-line JSON form written to stderr.
    pub fn json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl From<tokenloss_core::Error> for CliError {
    fn from(e: tokenloss_core::Error) -> Self {
        CliError::Data(e)
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| usage(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        _ => Ok(None),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let threads = thread_count(cli.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let digits = cli.digits;
    if digits == 0 || digits > 17 {
        return Err(usage("--digits must be in 1..=17"));
    }
    pool.install(|| match cli.command {
        Command::Summarize(a) => summarize::run(a, digits),
        Command::Concord(a) => concord::run(a),
        Command::Shape(a) => shape::run(a, digits),
        Command::Correlate(a) => correlate::run(a, digits),
        Command::DistillDemo(a) => demo::run(a, digits),
        Command::Report(a) => report::run(a, digits),
    })
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = usage(e.render().to_string().trim_end().to_string());
            eprintln!("{e}");
            eprintln!("{}", err.json_line());
            return err.code();
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(cli)));
    let err = match outcome {
        Ok(Ok(())) => return 0,
        Ok(Err(e)) => e,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            CliError::Internal(msg)
        }
    };
    eprintln!("tokenloss: {}", err.message());
    eprintln!("{}", err.json_line());
    err.code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_and_json() {
        let e = usage("bad \"flag\"");
        assert_eq!(e.code(), 1);
        let j: serde_json::Value = serde_json::from_str(&e.json_line()).unwrap();
        assert_eq!(j["error"], "usage");
        assert_eq!(j["message"], "bad \"flag\"");
        assert_eq!(
            CliError::from(tokenloss_core::Error::InvalidArgument("x".into())).code(),
            2
        );
        assert_eq!(CliError::Internal("p".into()).code(), 3);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn run_maps_parse_failures() {
        assert_eq!(run(["tokenloss", "--help"]), 0);
        assert_eq!(run(["tokenloss", "nope"]), 1);
        assert_eq!(run(["tokenloss", "--digits", "0", "summarize", "x.bin"]), 1);
    }
}
