//! Experiment runner: wires environment, agent, replay, return tracking and
//! calibration into the training loop, and writes per-run logs.

mod config;
mod log;
mod run;

pub use config::{RunConfig, CONFIG_KEYS};
pub use log::{
    read_log_csv, read_summary, CalibrationLogRow, EvalRow, LogRows, RunLog, RunStatus, RunSummary, CSV_HEADER,
};
pub use run::{build_agent, evaluate, run_suite, run_training, RunFailure, RunOutcome};
