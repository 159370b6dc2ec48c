//! Batch front end for the `martapprox` toolkit: reads a chain
//! specification file, runs one analysis command and writes a long-format
//! report.

pub mod commands;
pub mod error;
pub mod report;
pub mod spec_file;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

pub use commands::{run, Command};
pub use error::{CliError, ParseError};
pub use report::{Format, RunReport, CSV_HEADER};
pub use spec_file::{chain_digest, inputs_digest, ChainSpec, Model, RunOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_SUITE_FAILURE: u8 = 2;

fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    let grid = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a positive integer")))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("grid must be positive and strictly increasing".into());
    }
    Ok(grid)
}

fn parse_replicas(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("`{s}` is not a positive integer")),
        Ok(r) => Ok(r),
    }
}

#[derive(Debug, Parser)]
#[command(name = "martapprox", version, about = "Martingale approximation diagnostics for finite Markov chains")]
pub struct Cli {
    /// One of: inspect, approx, criteria, spectral, inequalities, fclt, report.
    pub command: String,
    /// Chain specification file.
    #[arg(long, value_name = "PATH")]
    pub spec: PathBuf,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N", value_parser = parse_replicas)]
    pub replicas: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_name = "a,b,c", value_parser = parse_grid)]
    pub n_grid: Option<::std::vec::Vec<usize>>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_name = "a,b,c", value_parser = parse_grid)]
    pub m_grid: Option<::std::vec::Vec<usize>>,
    /// Write `<command>.csv` or `<command>.txt` here instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_name = "csv|text")]
    pub format: Format,
}

impl Cli {
    /// Flags over spec-file options over defaults.
    pub fn options(&self, spec: &ChainSpec) -> RunOptions {
        let mut o = spec.options();
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if let Some(r) = self.replicas {
            o.replicas = r;
        }
        if let Some(g) = &self.n_grid {
            o.n_grid = g.clone();
        }
        if let Some(g) = &self.m_grid {
            o.m_grid = g.clone();
        }
        o
    }
}

/// Parses the spec, runs the command and emits the report.
pub fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    let command: Command = cli.command.parse()?;
    let started = Instant::now();
    let spec = ChainSpec::read(&cli.spec)?;
    let model = spec.build()?;
    let options = cli.options(&spec);
    let mut report = run(command, &model, &options)?;
    report.wall_clock = started.elapsed();
    match &cli.out {
        Some(dir) => {
            let path = report.write_to(dir, cli.format)?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{}", report.render(cli.format)),
    }
    Ok(report)
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { EXIT_OK });
        }
    };
    match execute(&cli) {
        Ok(report) => {
            for v in &report.verdicts {
                eprintln!("{}: {}", v.name, v.verdict);
            }
            eprintln!("{} finished in {:.3} s", report.command, report.wall_clock.as_secs_f64());
            if report.suite_failed() {
                ExitCode::from(EXIT_SUITE_FAILURE)
            } else {
                ExitCode::from(EXIT_OK)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
