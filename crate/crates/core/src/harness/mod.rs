//! Monte-Carlo harness: configuration, seeded trials, aggregation, CSV output
//! and the randomized property checks behind `juice validate`.

mod config;
mod output;
mod run;
pub mod validate;

pub use config::{AlgorithmConfig, ExperimentConfig};
pub use output::{emit_results, read_csv, read_sidecar, sidecar_path, write_csv, write_csv_to, Sidecar, CSV_HEADER};
pub use run::{
    nmse_standard_error, run_experiment, run_experiment_with_threads, run_trial, run_trial_detailed,
    srr_standard_error, Algorithm, ExperimentResults, FailureCount, ResultRow, TrialOutcome, TrialResult,
};
