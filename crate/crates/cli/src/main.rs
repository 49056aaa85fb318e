use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use findel_core::oracle::{check_trace, random_trace, Universe};
use findel_core::{parse, parse_scenario, pretty_print, run_scenario, validate, Delta, ScenarioConfig};

#[derive(Parser)]
#[command(name = "findel", version, about = "Run and check Findel financial contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and report every step. Exits 0 iff all assertions hold.
    Run {
        file: PathBuf,
        /// Half-width of the window produced by `At`.
        #[arg(long, default_value_t = 30)]
        delta: u64,
        /// Maximum age of a gateway value, in time units.
        #[arg(long, default_value_t = 10)]
        freshness: u64,
        /// Number of time units in `1yr`.
        #[arg(long, default_value_t = 365)]
        year: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Parse a contract expression and print its canonical form.
    Parse {
        expr: String,
        #[arg(long, default_value_t = 30)]
        delta: u64,
    },
    /// Generate random marketplace traces and check them for consistency.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        traces: u64,
        #[arg(long, default_value_t = 50)]
        depth: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { file, delta, freshness, year, format } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let commands = parse_scenario(&text).with_context(|| format!("parsing {}", file.display()))?;
            let config = ScenarioConfig { delta: Delta(delta), freshness_window: freshness, year_length: year };
            let report = run_scenario(&commands, config);
            match format {
                Format::Text => emit(&report.to_text())?,
                Format::Json => emit(&(report.to_json() + "\n"))?,
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Parse { expr, delta } => {
            let p = parse(&expr, Delta(delta))?;
            println!("{}", pretty_print(&p));
            match validate(&p) {
                Ok(()) => Ok(ExitCode::SUCCESS),
                Err(violations) => {
                    for v in violations {
                        println!("invalid: {v}");
                    }
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Check { seed, traces, depth } => {
            let universe = Universe::default();
            let mut bad = 0;
            for s in seed..seed.saturating_add(traces) {
                let violations = check_trace(&random_trace(s, depth, &universe));
                for v in &violations {
                    println!("seed {s}: {v}");
                }
                bad += usize::from(!violations.is_empty());
            }
            println!("{traces} traces checked, {bad} with violations");
            Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
