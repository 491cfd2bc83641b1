//! Experiment driver for particle ensembles: reads a TOML config, trains on
//! each fold and writes metrics, histories, predictions, checkpoints and
//! curvature snapshots.

pub mod commands;
pub mod config;

pub use commands::{cmd_compare, cmd_run, cmd_snapshot, fold_summary, run_experiment, snapshot_epochs, FoldResult};
pub use config::{load_experiment, Experiment, ExperimentConfig, Overrides};
