//! Config-driven experiments: training runs, baselines, sweeps and plots.

pub mod baseline;
pub mod config;
pub mod plot;
pub mod run;

pub use baseline::{BaselineController, BaselinePolicy};
pub use config::{load_config, preset_names, ExperimentConfig, OUTPUT_ROOT_ENV};
pub use plot::emit_plots;
pub use run::{
    evaluate_baseline, run_baseline, run_baseline_in, run_experiment, run_experiment_in, run_sweep, run_sweep_in,
    RunOutcome, RunSummary, SweepOutcome,
};
