use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcoop::report::Format;
use qcoop::selftest::run_selftest;
use qcoop::sweep::{grid, sweep, SweepParam};
use qcoop::table1::verify_table1;
use qcoop::{load_scenario, run_scenario, write_report, HarnessError};

#[derive(Parser)]
#[command(name = "qcoop", version, about = "Quantum-secured cooperative robotics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its report and event log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replaces the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Rerun a scenario over a grid of one parameter and write a CSV table.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Verify the eight plate/beam-splitter truth-table rows.
    Table1 {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn execute(cmd: Cmd) -> Result<i32, HarnessError> {
    match cmd {
        Cmd::Run { scenario, seed, out, format } => {
            let s = load_scenario(&scenario, seed)?;
            let output = run_scenario(&s);
            for path in write_report(&output, &out, format)? {
                println!("wrote {}", path.display());
            }
            let r = &output.report;
            if let Some(msg) = &r.failure {
                eprintln!("run failed: {msg}");
            }
            println!("{} (seed {}): {:?}", r.name, r.seed, r.status);
            Ok(r.status.exit_code())
        }
        Cmd::Sweep { scenario, param, from, to, steps, seed, out } => {
            let s = load_scenario(&scenario, seed)?;
            let values = match param {
                SweepParam::Delta => grid(from.unwrap_or(0.0), to.unwrap_or(2.0 * PI), steps, false),
                SweepParam::InterceptProbability => grid(from.unwrap_or(0.0), to.unwrap_or(1.0), steps, true),
            };
            let table = sweep(&s, param, &values)?;
            std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            let path = out.join("sweep.csv");
            std::fs::write(&path, table.to_csv()?).map_err(|e| HarnessError::io(&path, e))?;
            println!("wrote {} ({} rows)", path.display(), table.len());
            Ok(0)
        }
        Cmd::Table1 { trials, seed } => {
            let rows = verify_table1(trials, seed)?;
            println!("row  alice  bob  expected  fraction_one  result");
            for r in &rows {
                println!(
                    "{:>3}  {:>5}  {:>3}  {:>8}  {:>12.5}  {}",
                    r.row,
                    r.alice_state_deg,
                    r.bob_label_deg,
                    r.expected,
                    r.fraction_one,
                    if r.passed { "ok" } else { "FAIL" }
                );
            }
            Ok(if rows.iter().all(|r| r.passed) { 0 } else { 1 })
        }
        Cmd::Selftest { seed } => {
            let checks = run_selftest(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
