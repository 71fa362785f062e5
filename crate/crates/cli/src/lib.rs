//! Command-line front end: strict TOML configs, batch sweeps, CSV tables,
//! a JSON manifest and gnuplot scripts.

pub mod config;
pub mod error;
pub mod plot;
pub mod reproduce;
pub mod runner;
pub mod tables;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{load, RunConfig, SweepEntry};
pub use error::{CliError, Result, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL};
pub use runner::{run, RunOptions, RunReport};

/// Largest chain length used by `validate`.
pub const VALIDATE_MAX_LEN: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "teleqcp", version, about = "Locate quantum critical points of spin chains with teleportation detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every sweep of a config and write tables, manifest and plot scripts.
    Run {
        config: PathBuf,
        /// Worker threads; overrides TELEQCP_WORKERS and the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Cross-check closed forms against the full protocol at small chain
    /// lengths; writes nothing.
    Validate {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Chain lengths above this are replaced by it.
        #[arg(long, default_value_t = VALIDATE_MAX_LEN)]
        max_len: usize,
    },
    /// Write a built-in figure config into the output directory and run it.
    Reproduce {
        /// fig1 .. fig9, or all.
        figure: String,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Print the config and exit without running.
        #[arg(long)]
        print_config: bool,
    },
}

/// Caps every chain length at `max_len`, dropping duplicates, and turns on
/// protocol cross-checks.
pub fn validation_config(mut config: RunConfig, max_len: usize) -> RunConfig {
    config.validation = true;
    for s in &mut config.sweeps {
        let mut lens: Vec<usize> = Vec::new();
        for &l in &s.lengths {
            let l = l.min(max_len);
            if !lens.contains(&l) {
                lens.push(l);
            }
        }
        s.lengths = lens;
    }
    config
}

fn summarize(report: &RunReport) {
    let failed: Vec<_> = report.failures().collect();
    if failed.is_empty() {
        eprintln!("{} sweep(s) completed", report.jobs.len());
        return;
    }
    eprintln!("{} of {} sweep(s) failed:", failed.len(), report.jobs.len());
    for j in failed {
        eprintln!("  {}: {}", j.id, j.error.as_ref().expect("failed job has an error"));
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let report = match cli.command {
        Command::Run { config, workers, output_dir } => {
            let c = load(&config)?;
            run(&c, &RunOptions { workers, output_dir, dry: false })?
        }
        Command::Validate { config, workers, max_len } => {
            if max_len < 2 {
                return Err(CliError::field("--max-len", "must be at least 2"));
            }
            let c = validation_config(load(&config)?, max_len);
            c.validate()?;
            run(&c, &RunOptions { workers, output_dir: None, dry: true })?
        }
        Command::Reproduce { figure, workers, output_dir, print_config } => {
            let mut c = reproduce::figure_config(&figure)?;
            if let Some(dir) = output_dir {
                c.output_dir = dir;
            }
            let text = c.to_toml()?;
            if print_config {
                print!("{text}");
                return Ok(EXIT_OK);
            }
            std::fs::create_dir_all(&c.output_dir)
                .map_err(|e| CliError::io(format!("creating {}", c.output_dir.display()), e))?;
            let path = c.output_dir.join("config.toml");
            std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
            run(&c, &RunOptions { workers, output_dir: None, dry: false })?
        }
    };
    summarize(&report);
    Ok(report.exit_code())
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
