mod config;
mod report;
mod runner;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::ConfigError;
use crate::runner::RunOptions;

/// Runs verification scenarios and writes CSV reports.
#[derive(Debug, Parser)]
#[command(name = "bdtrace", version)]
struct Args {
    /// Scenario file, or a directory of `*.toml` scenario files.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "bdtrace-out")]
    out: PathBuf,
    /// Multiplies every check tolerance and the limit tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Only run scenarios whose name matches this glob.
    #[arg(long)]
    filter: Option<String>,
    /// Also write per-check convergence tables.
    #[arg(long)]
    tables: bool,
    /// Write 0 in the wall_time_ms column.
    #[arg(long)]
    no_timing: bool,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn seed_override() -> Result<Option<u64>, ConfigError> {
    match std::env::var("BDTRACE_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| ConfigError::BadSeed(s)),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn run(args: &Args) -> Result<bool, String> {
    if !(args.tol_scale > 0.0 && args.tol_scale.is_finite()) {
        return Err(format!("--tol-scale must be positive, got {}", args.tol_scale));
    }
    let filter = match &args.filter {
        Some(f) => Some(glob::Pattern::new(f).map_err(|e| format!("--filter: {e}"))?),
        None => None,
    };
    let seed = seed_override().map_err(|e| e.to_string())?;
    let located = config::load(&args.config).map_err(|e| e.to_string())?;
    let scenarios = located
        .iter()
        .filter(|l| filter.as_ref().is_none_or(|p| p.matches(&l.config.name)))
        .map(|l| scenario::build(l, seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;

    let rows = runner::run(&scenarios, &RunOptions { tol_scale: args.tol_scale, jobs: args.jobs })
        .map_err(|e| format!("worker pool: {e}"))?;

    let out_err = |e: std::io::Error| format!("{}: {e}", args.out.display());
    std::fs::create_dir_all(&args.out).map_err(out_err)?;
    let timing = !args.no_timing;
    report::write_csv(&rows, &args.out.join(report::CSV_FILE), timing).map_err(out_err)?;
    report::write_summary(&rows, &args.out.join(report::SUMMARY_FILE), timing).map_err(out_err)?;
    if args.tables {
        report::write_tables(&rows, &args.out.join(report::TABLES_DIR)).map_err(out_err)?;
    }

    let failed = rows.iter().filter(|r| !r.report.pass).count();
    eprintln!("{} scenarios, {} checks, {} failed", scenarios.len(), rows.len(), failed);
    eprint!("{}", report::failure_table(&rows));
    Ok(failed == 0)
}
