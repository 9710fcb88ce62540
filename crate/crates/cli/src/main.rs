//! `lifted`: run scenarios, print ledger dumps, diff them.
//!
//! Exit codes: 0 success, 1 runtime failure (or invariant failures, or a
//! non-empty diff), 2 invalid configuration or malformed input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lifted_core::dump::{diff_dumps, DumpError, LedgerDump};
use lifted_core::scenario::{bundled, run_scenario, ScenarioConfig, ScenarioError, BUNDLED};

#[derive(Parser)]
#[command(name = "lifted", version, about = "Lifted-chain network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its event log, dumps and summary.
    Run {
        /// Scenario config file.
        #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
        config: Option<PathBuf>,
        /// Name of a bundled scenario instead of a file.
        #[arg(long)]
        bundled: Option<String>,
        /// Output directory (default: the config's out_dir, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pretty-print a ledger dump.
    Dump { ledger: PathBuf },
    /// Compare the disclosed records of two dumps; exit 0 iff identical.
    Diff { a: PathBuf, b: PathBuf },
}

fn load_dump(path: &Path) -> Result<LedgerDump, ExitCode> {
    LedgerDump::read(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        match e {
            DumpError::Malformed(_) => ExitCode::from(2),
            DumpError::Io(_) => ExitCode::from(1),
        }
    })
}

fn run(
    config: Option<PathBuf>,
    name: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExitCode, ScenarioError> {
    let mut cfg = match (config, name) {
        (Some(path), _) => ScenarioConfig::read(&path)?,
        (None, Some(name)) => bundled(&name).ok_or_else(|| {
            let known: Vec<_> = BUNDLED.iter().map(|b| b.0).collect();
            ScenarioError::ConfigInvalid(format!("no bundled scenario {name:?} (have {known:?})"))
        })?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let report = run_scenario(&cfg)?;
    report.write(&dir)?;
    let s = &report.summary;
    println!(
        "{}: seed {} ticks {} blocks {} forks_resolved {} tamper_detections {} invariant_failures {}",
        s.name,
        s.seed,
        s.ticks,
        s.blocks_confirmed,
        s.forks_resolved,
        s.tamper_detections,
        s.invariant_failures
    );
    for f in &s.failures {
        println!("  failure: {f}");
    }
    println!("outputs in {}", dir.display());
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, bundled, out, seed } => match run(config, bundled, out, seed) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Dump { ledger } => match load_dump(&ledger) {
            Ok(d) => {
                print!("{}", d.pretty());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Diff { a, b } => {
            let (a, b) = match (load_dump(&a), load_dump(&b)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(code), _) | (_, Err(code)) => return code,
            };
            let report = diff_dumps(&a, &b);
            if report.identical {
                println!("identical");
                ExitCode::SUCCESS
            } else {
                println!(
                    "differ at block {}: {}",
                    report.first_difference.unwrap_or_default(),
                    report.detail.unwrap_or_default()
                );
                ExitCode::from(1)
            }
        }
    }
}
