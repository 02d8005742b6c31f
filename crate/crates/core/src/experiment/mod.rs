//! Configuration, orchestration and artifact emission for the experiments.

pub mod config;
pub mod emit;
pub mod run;
pub mod selfcheck;

use std::path::PathBuf;

use crate::error::Result;

pub use config::{load_config, ExperimentConfig, ExperimentKind, OutputFormat};
pub use emit::{emit_results, Assertion, Cell, ExperimentResult, Table};
pub use run::run_experiment;

/// Runs the experiment and writes its artifacts.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<PathBuf>)> {
    let result = run_experiment(cfg)?;
    let files = emit_results(&result, cfg)?;
    Ok((result, files))
}
