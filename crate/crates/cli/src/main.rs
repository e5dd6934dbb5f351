use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhpp_core::io::{Command, RunConfig};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "nhpp", version, about = "Bernstein-Dirichlet intensity estimation for Poisson processes")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Draw a point pattern from a known intensity.
    Simulate(RunArgs),
    /// Choose prior hyperparameters and K from intensity guesses.
    Elicit(RunArgs),
    /// Run one of the samplers and write draw logs.
    Fit(RunArgs),
    /// Posterior summaries of intensity, density, total intensity and K.
    Summarize(RunArgs),
    /// Predictive residuals on a regular grid of cells.
    Residuals(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON run config, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides paths.out.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Elicit(a) => (Command::Elicit, a),
        Sub::Fit(a) => (Command::Fit, a),
        Sub::Summarize(a) => (Command::Summarize, a),
        Sub::Residuals(a) => (Command::Residuals, a),
    };
    let result = RunConfig::load(&args.config).and_then(|mut config| {
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(out) = args.out {
            config.paths.out = Some(out);
        }
        config.validate(command)?;
        commands::run(command, &config)
    });
    match result {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                nhpp_core::Error::InvalidConfig(_) | nhpp_core::Error::MissingFile(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
