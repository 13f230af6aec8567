//! Batch front end: argument handling, commands and study runners.

pub mod args;
pub mod commands;
pub mod output;
pub mod study;

use clap::Parser;

use args::{expand_config, Cli, Command};

/// Points of a CI grid given as `lo,hi`.
pub const DEFAULT_CI_POINTS: usize = 5000;
pub const DEFAULT_REPS: usize = 2000;
/// Replications for the Design 1 power surfaces.
pub const DEFAULT_SURFACE_REPS: usize = 2500;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] calpha_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Io(_) => 3,
            CliError::Core(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return usage("--threads must be positive");
        }
        // a second call in the same process keeps the first pool, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Size(a) => configure_threads(a.threads).and_then(|_| commands::cmd_size(&a)),
        Command::Power(a) => configure_threads(a.threads).and_then(|_| commands::cmd_power(&a)),
        Command::Test(a) => configure_threads(a.threads).and_then(|_| commands::cmd_test(&a)),
        Command::Ci(a) => configure_threads(a.threads).and_then(|_| commands::cmd_ci(&a)),
        Command::Bounds(a) => commands::cmd_bounds(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
