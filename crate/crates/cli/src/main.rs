//! Command line front end for the stochastic Poisson integrator library.
//!
//! Exit codes: 0 success (and passing checks), 1 usage or configuration
//! error, 2 numerical failure during a run, 3 a verification that ran to
//! completion but failed its tolerances.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use commands::{EXIT_USAGE, cmd_order, cmd_simulate, cmd_tableau_check, cmd_verify};
use config::{CommonArgs, OrderArgs};

#[derive(Parser, Debug)]
#[command(
    name = "sps",
    version,
    about = "Structure-preserving integrators for stochastic Poisson systems",
    after_help = "Flags may also come from a key=value config file (--config); \
                  command-line flags win on conflict."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one sampled path and write trajectory + invariant CSVs
    Simulate(CommonArgs),
    /// Audit a method: tableau conditions, Poisson-map residuals, invariant drift
    Verify(CommonArgs),
    /// Estimate the mean-square convergence order over a step-size sweep
    Order(OrderArgs),
    /// Print a tableau and check its structure-preservation conditions
    TableauCheck(CommonArgs),
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };

    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Order(args) => cmd_order(args),
        Command::TableauCheck(args) => cmd_tableau_check(args),
    };

    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            EXIT_USAGE
        }
    }
}
