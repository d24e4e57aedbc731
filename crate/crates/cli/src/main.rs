use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diststeer_cli::run::{run, Exit, RunOptions};
use diststeer_cli::scenario::Overrides;
use diststeer_cli::verify::verify;

#[derive(Parser)]
#[command(
    name = "diststeer",
    version,
    about = "Distribution steering of linear stochastic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario, validate by Monte Carlo and write CSV reports.
    Run(RunArgs),
    /// Re-check the invariants of a run directory.
    Verify {
        /// Directory written by `run`.
        #[arg(long = "out", value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Monte-Carlo master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    mc_samples: Option<usize>,
    /// Multiplies every matching weight.
    #[arg(long, value_name = "F")]
    lambda_scale: Option<f64>,
    /// Keep the risk split uniform instead of optimizing it.
    #[arg(long)]
    fixed_risk: bool,
    /// Leave the generation time out of the CSV headers.
    #[arg(long)]
    no_timestamp: bool,
}

fn code(exit: Exit) -> ExitCode {
    ExitCode::from(exit as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(a) => {
            let opts = RunOptions {
                scenario: a.scenario,
                out: a.out,
                overrides: Overrides {
                    seed: a.seed,
                    mc_samples: a.mc_samples,
                    lambda_scale: a.lambda_scale,
                    fixed_risk: a.fixed_risk,
                },
                timestamp: !a.no_timestamp,
            };
            match run(&opts) {
                Ok(outcome) => {
                    let sol = &outcome.solution;
                    println!(
                        "status {}  J {:.4}  objective {:.4}  D {:?}",
                        outcome.status, sol.cost, sol.objective, sol.distances
                    );
                    for c in outcome.failed_checks() {
                        eprintln!("check failed: {} = {} (limit {})", c.name, c.value, c.limit);
                    }
                    println!("reports written to {}", opts.out.display());
                    code(outcome.exit)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit())
                }
            }
        }
        Command::Verify { out } => match verify(&out) {
            Ok(passed) => {
                println!("{} checks passed", passed.len());
                code(Exit::Ok)
            }
            Err(e) => {
                eprintln!("verify: {e}");
                code(if e.is_input_error() {
                    Exit::Input
                } else {
                    Exit::Validation
                })
            }
        },
    }
}
