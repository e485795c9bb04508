//! Experiment configuration, the runner behind the CLI, and the statistics used to
//! judge results.

mod config;
mod runner;
pub mod stats;

pub use config::{parse_grid, Acceptance, ExperimentConfig, ExperimentKind};
pub use runner::{
    execute, exit_code, manifest, run_experiment, write_outcome, RunOutcome, EXIT_ACCEPTANCE,
    EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME,
};
