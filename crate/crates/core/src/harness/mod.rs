//! Experiment harness: config files, run orchestration, CSV logs, and
//! cross-run comparison.

pub mod config;
pub mod run;
pub mod runlog;

pub use config::{Algorithm, ConfigError, ExperimentConfig, Profile, ResolvedConfig, load_config};
pub use run::{
    HarnessError, RunOutput, RunSummary, eval_run, nvs_run, oracle_run, run, static_run, sweep,
    sweep_summary_csv, train_run, write_outputs,
};
pub use runlog::{CompareError, CompareReport, RunLog, compare, converged_mean};
