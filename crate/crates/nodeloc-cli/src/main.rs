mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_evaluate, cmd_localize, cmd_simulate, EvaluateInputs, Paths, ERROR_BUDGET_M};
use config::ExperimentConfig;
use error::CliError;

/// Ground-node localization experiments: render a synthetic walk, localize
/// it and score the fixes against ground truth.
#[derive(Debug, Parser)]
#[command(name = "nodeloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory; defaults to `<out>/dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the configured scenario into a dataset directory.
    Simulate(Common),
    /// Run the localization pipeline over a dataset.
    Localize(Common),
    /// Score fixes against ground truth and draw plots.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Fixes file; defaults to `<out>/fixes.csv`.
        #[arg(long)]
        fixes: Option<PathBuf>,
        /// Truth file; defaults to `<dataset>/truth.csv`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn setup(common: Common) -> Result<(ExperimentConfig, Paths), CliError> {
    let config = ExperimentConfig::load(&common.config)?;
    let paths = Paths::resolve(&config, common.dataset, common.out);
    Ok((config, paths))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let (config, paths) = setup(common)?;
            let manifest = cmd_simulate(&config, &paths)?;
            println!("{}", manifest.display());
        }
        Command::Localize(common) => {
            let (config, paths) = setup(common)?;
            let s = cmd_localize(&config, &paths)?;
            println!(
                "{} frames, {} fixes ({} decoded, {} projected) -> {}",
                s.frames,
                s.fixes,
                s.decoded,
                s.fixes - s.decoded,
                paths.out.display()
            );
        }
        Command::Evaluate { common, fixes, truth } => {
            let (_, paths) = setup(common)?;
            let inputs = EvaluateInputs::resolve(&paths, fixes, truth);
            let s = cmd_evaluate(&paths, &inputs)?;
            let m = &s.metrics;
            println!("evaluated fixes: {}", s.evaluated_fixes);
            println!("fix rate: {:.2} Hz", m.fix_rate_hz);
            match m.max_error_m() {
                Some(e) => println!(
                    "max error: {:.4} m ({} the {:.2} m budget)",
                    e,
                    if e <= ERROR_BUDGET_M { "within" } else { "exceeds" },
                    ERROR_BUDGET_M
                ),
                None => println!("max error: n/a"),
            }
            println!("disambiguation success: {:.3}", m.disambiguation_success);
            println!("results in {}", paths.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
