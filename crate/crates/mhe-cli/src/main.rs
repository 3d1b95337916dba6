use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mhe_cli::commands::{self, RunFlags};

#[derive(Parser)]
#[command(
    name = "mhe",
    version,
    about = "Moving-horizon estimation toolkit: estimation runs with error-bound monitors, detectability certification, and stopping-rule benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config: simulate, estimate, monitor bounds, write
    /// CSV/JSON (and SVG) artifacts
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write SVG line plots
        #[arg(long)]
        svg: bool,
        /// Monte Carlo repetitions (independent noise per run)
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Print a certification report (JSON) for a registered model
    Certify {
        /// Registry name: example1 | example2
        model: String,
        #[arg(long, default_value_t = 123)]
        seed: u64,
        /// Sample count for dissipation / supremum checks
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Compare relaxed vs exact stopping on identical data
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Run the first built-in figure-reproduction set (third-order system,
    /// window-3 quadratic and window-5 max-form estimators)
    ReproduceFig1 {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Run the second built-in figure-reproduction set (second-order system
    /// with multiplicative measurement noise, window-3/4 max-form estimators)
    ReproduceFig2 {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate {
            config,
            seed,
            out,
            svg,
            runs,
        } => commands::cmd_estimate(
            &config,
            &RunFlags {
                seed,
                out,
                svg,
                runs,
            },
        ),
        Command::Certify {
            model,
            seed,
            samples,
        } => commands::cmd_certify(&model, samples, seed),
        Command::Bench {
            config,
            seed,
            out,
            runs,
        } => commands::cmd_bench(
            &config,
            &RunFlags {
                seed,
                out,
                svg: false,
                runs,
            },
        ),
        Command::ReproduceFig1 {
            seed,
            out,
            svg,
            runs,
        } => commands::cmd_reproduce(
            1,
            &RunFlags {
                seed,
                out,
                svg,
                runs,
            },
        ),
        Command::ReproduceFig2 {
            seed,
            out,
            svg,
            runs,
        } => commands::cmd_reproduce(
            2,
            &RunFlags {
                seed,
                out,
                svg,
                runs,
            },
        ),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
