//! Command-line front end for `sparse-sphere`.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod render;

use args::{Cli, Command};
use error::{config_err, CliResult};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "SPARSESPHERE_THREADS";

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| config_err(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(config_err("thread count must be at least 1"));
    }
    Ok(n)
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Analyze(a) => commands::analyze_cmd(a),
        Command::Bispectrum(a) => commands::bispectrum(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Render(a) => commands::render(a),
    }
}
