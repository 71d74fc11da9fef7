use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

mod cmd;
mod common;

use common::{exit_code, Globals};

/// Efficient single-image super-resolution: upscale, train, evaluate, time and
/// inspect models.
#[derive(Parser)]
#[command(name = "esr", version)]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upscale one image.
    Upscale(cmd::upscale::Args),
    /// Train a model on a directory of images.
    Train(cmd::train::Args),
    /// Score a model on a dataset and record it in a registry.
    Eval(cmd::eval::Args),
    /// Time a model and record its speed in a registry.
    Bench(cmd::bench::Args),
    /// Export filters, correlations, spectra or registry scatter data.
    Inspect(cmd::inspect::Args),
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("ESR_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) => n,
        Err(_) => bail!(common::usage(format!("ESR_THREADS must be a count, got {raw:?}"))),
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    configure_threads()?;
    let g = &cli.globals;
    match cli.command {
        Command::Upscale(a) => cmd::upscale::run(a, g),
        Command::Train(a) => cmd::train::run(a, g),
        Command::Eval(a) => cmd::eval::run(a, g),
        Command::Bench(a) => cmd::bench::run(a, g),
        Command::Inspect(a) => cmd::inspect::run(a, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_out = cli.globals.json.clone();
    let registry_command = matches!(cli.command, Command::Eval(_) | Command::Bench(_));
    match run(cli) {
        Ok(summary) => {
            let line = summary.to_string();
            println!("{line}");
            if let (Some(path), false) = (json_out, registry_command) {
                if let Err(e) = std::fs::write(&path, format!("{line}\n")) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
