use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sdlab_core::experiment::{
    emit_results, load_config, run_experiment, ExperimentConfig, ExperimentKind, ExperimentResult,
};

/// Experiments for singular stochastic p-Laplace and fast diffusion equations.
#[derive(Parser)]
#[command(name = "sdlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `noise.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant suite.
    Selfcheck {
        /// Also write the report into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn report(result: &ExperimentResult) {
    for a in &result.assertions {
        let tag = if a.passed { "PASS" } else { "FAIL" };
        if a.detail.is_empty() {
            println!("{tag}  {}", a.name);
        } else {
            println!("{tag}  {}: {}", a.name, a.detail);
        }
    }
    for note in &result.notes {
        println!("note  {note}");
    }
}

fn execute(cfg: &ExperimentConfig, write: bool) -> Result<bool> {
    let result = run_experiment(cfg).with_context(|| format!("running {}", cfg.experiment.name()))?;
    report(&result);
    if write {
        let files = emit_results(&result, cfg)
            .with_context(|| format!("writing results to {}", cfg.output.directory.display()))?;
        for f in files {
            println!("wrote {}", f.display());
        }
    }
    Ok(result.passed())
}

fn main_inner(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = out {
                cfg.output.directory = dir;
            }
            if let Some(s) = seed {
                cfg.noise.master_seed = s;
            }
            execute(&cfg, true)
        }
        Command::Selfcheck { out, seed } => {
            let mut cfg = ExperimentConfig::with_defaults(ExperimentKind::Selfcheck);
            if let Some(s) = seed {
                cfg.noise.master_seed = s;
            }
            let write = out.is_some();
            if let Some(dir) = out {
                cfg.output.directory = dir;
            }
            execute(&cfg, write)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
