use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedsgld::config::ExperimentConfig;
use fedsgld::runner;
use fedsgld::Error;

#[derive(Parser)]
#[command(
    name = "fedsgld",
    about = "Federated SGLD simulator with posterior-chained priors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies over all days and persist the results
    Run {
        config: PathBuf,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset: tl,retrain,pcl
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Suppress progress output
        #[arg(long)]
        quiet: bool,
    },
    /// Write one tabular data file per day
    GenData {
        config: PathBuf,
        out_dir: PathBuf,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress progress output
        #[arg(long)]
        quiet: bool,
    },
    /// Print the summary table of a finished run directory
    Report { run_dir: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_GEN_DATA_IO: u8 = 4;
const EXIT_BAD_ARTIFACTS: u8 = 5;

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    strategies: Option<Vec<String>>,
) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(strategies) = strategies {
        config.strategies = strategies;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), (u8, Error)> {
    match cli.command {
        Command::Run {
            config,
            seed,
            strategies,
            quiet,
        } => {
            let config =
                load_config(&config, seed, strategies).map_err(|e| (EXIT_CONFIG, e))?;
            runner::cmd_run(&config, quiet).map_err(|e| {
                let code = if e.is_divergence() {
                    EXIT_DIVERGENCE
                } else {
                    1
                };
                (code, e)
            })?;
            Ok(())
        }
        Command::GenData {
            config,
            out_dir,
            seed,
            quiet,
        } => {
            let config = load_config(&config, seed, None).map_err(|e| (EXIT_CONFIG, e))?;
            let files = runner::cmd_gen_data(&config, &out_dir)
                .map_err(|e| (EXIT_GEN_DATA_IO, e))?;
            if !quiet {
                for f in files {
                    println!("{}", f.display());
                }
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            let render = runner::cmd_report(&run_dir).map_err(|e| (EXIT_BAD_ARTIFACTS, e))?;
            print!("{}", render.text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
