//! Command-line front end. [`run`] parses arguments, dispatches to a
//! subcommand and returns the process exit code: 0 on success, 1 on runtime
//! errors or failed verifications, 2 on argument errors.

pub mod args;
pub mod commands;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};

pub const THREADS_ENV: &str = "AGE_METRICS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a).map(|_| true),
        Command::Eval(a) => commands::eval(a).map(|_| true),
        Command::Verify(a) => commands::verify(a),
        Command::Sweep(a) => commands::sweep(a).map(|_| true),
        Command::Optimize(a) => commands::optimize(a).map(|_| true),
        Command::Chain(a) => commands::chain(a).map(|_| true),
        Command::Rerun(a) => commands::rerun(a).map(|_| true),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}
