//! Configuration, experiment orchestration and output emission.

pub mod config;
pub mod output;
pub mod plot;
pub mod run;
pub mod validate;

pub use config::{LambdaMode, Overrides, Param, Resolved, RunConfig, SweepGrid};
pub use output::{emit_run, emit_sweep, write_manifest, write_rounds_csv, write_summary_csv, CSV_HEADER};
pub use run::{
    aggregate, mean_sd, run_episode, run_experiment, run_experiment_with, run_sweep, run_sweep_with, sweep_cells,
    Aggregate, ExperimentResult, Metric, SweepResult,
};
pub use validate::run_validation;
