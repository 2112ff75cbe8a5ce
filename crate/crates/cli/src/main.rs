use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use drmech_cli::manifest::{parse_entries, parse_values, RunManifest};
use drmech_cli::results::{read_results, Row};
use drmech_cli::run::{run, write_figures};
use drmech_core::OptimizerOptions;

#[derive(Parser)]
#[command(
    name = "drmech",
    version,
    about = "Design and compare demand-response discount mechanisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize mechanisms on a scenario.
    Optimize(RunArgs),
    /// Optimize, then check each optimum with a Monte Carlo population.
    Simulate(RunArgs),
    /// Optimize over a range of flexibility values.
    Sweep(RunArgs),
    /// Print a results table and redraw its figures.
    Report {
        /// Directory holding results.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated list of base, optimized, robust, broadcast, dictatorial or all.
    #[arg(long, default_value = "all")]
    mechanism: String,
    /// Random starts per mechanism.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated users per optimum (simulate defaults to 100000).
    #[arg(long)]
    users: Option<usize>,
    /// Flexibility values, e.g. `0.1,1/6,1/3,1` (sweep defaults to that list).
    #[arg(long)]
    mu: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Final broadcast tie-smoothing width in $/MWh.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Worker threads for the optimizer.
    #[arg(long, env = "DRMECH_THREADS")]
    threads: Option<usize>,
}

const DEFAULT_SWEEP: &str = "0.1,1/6,1/3,1";
const DEFAULT_USERS: usize = 100_000;

impl RunArgs {
    fn manifest(self, default_mu: Option<&str>, default_users: Option<usize>) -> Result<RunManifest> {
        let options = OptimizerOptions {
            starts: self.starts,
            seed: self.seed,
            threads: self.threads,
            ..OptimizerOptions::default()
        };
        let mu = match self.mu.as_deref().or(default_mu) {
            Some(list) => Some(parse_values(list)?),
            None => None,
        };
        Ok(RunManifest {
            scenario: self.scenario,
            entries: parse_entries(&self.mechanism)?,
            options,
            mu,
            users: self.users.or(default_users),
            final_smoothing: self.smoothing,
            out: self.out,
        })
    }
}

fn print_table(rows: &[Row]) {
    println!(
        "{:<12} {:>8} {:>7} {:>16} {:>14} {:>14} {:>16} {:>9}",
        "mechanism", "mu", "starts", "production", "discounts", "wasted", "total", "savings"
    );
    for r in rows {
        println!(
            "{:<12} {:>8} {:>7} {:>16.2} {:>14.2} {:>14.2} {:>16.2} {:>8.3}%",
            r.mechanism,
            r.mu.map(|m| format!("{m:.4}")).unwrap_or_default(),
            r.starts,
            r.production_cost,
            r.discounts_paid,
            r.wasted_discounts,
            r.total_cost,
            100.0 * r.savings_fraction
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    let rows = match cli.command {
        Command::Optimize(args) => run(&args.manifest(None, None)?)?,
        Command::Simulate(args) => run(&args.manifest(None, Some(DEFAULT_USERS))?)?,
        Command::Sweep(args) => run(&args.manifest(Some(DEFAULT_SWEEP), None)?)?,
        Command::Report { out } => {
            let rows = read_results(&out.join("results.csv"))?;
            write_figures(&out, &rows)?;
            rows
        }
    };
    print_table(&rows);
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
