//! `flmtest`: adaptive tests of a null slope in the functional linear model.

mod error;
mod io;
mod rates_cmd;
mod simulate_cmd;
mod test_cmd;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, CliResult};

/// Version tag written into plans, reports and result headers.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of worker threads; unset means one per core.
const THREADS_ENV: &str = "FLMTEST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "flmtest", version, about = "Adaptive tests of a null slope in the functional linear model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test a dataset of curves and responses.
    Test(test_cmd::TestArgs),
    /// Run the cells of a simulation plan.
    Simulate(simulate_cmd::SimulateArgs),
    /// Tabulate separation rates.
    Rates(rates_cmd::RatesArgs),
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Test(args) => {
            let r = test_cmd::run(args)?;
            let selected = r.selected_k.map_or("-".to_string(), |k| k.to_string());
            println!(
                "{} (sup margin {:.4}, selected k = {selected}, weight {:.4e})",
                if r.reject { "reject" } else { "do not reject" },
                r.supremum_margin,
                r.weight.weight
            );
            println!("report written to {}", args.out.display());
        }
        Command::Simulate(args) => {
            let s = simulate_cmd::run(args)?;
            for row in &s.rows {
                println!(
                    "{:<24} {:>3} {:>7.2}% +/- {:.2} ({} trials)",
                    row.cell, row.method, row.percent, row.ci_half_width, row.trials
                );
            }
            println!(
                "{} cell(s) run, {} reused; results written to {}",
                s.run_cells,
                s.reused_cells,
                args.out.display()
            );
        }
        Command::Rates(args) => {
            let reports = rates_cmd::run(args)?;
            println!("{} row(s) written to {}", reports.len(), args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
