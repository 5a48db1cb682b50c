//! Experiment plumbing: configuration, Monte-Carlo trials, sweeps and output.

pub mod config;
pub mod multibs;
pub mod run;
pub mod sweep;

pub use config::{
    parse_config, parse_config_str, ConfigError, ExperimentConfig, Method, PhaseChoice, Profile, Sweep, SweepValue,
    SweepVariable,
};
pub use run::{run_trial, MethodEstimate, MethodOutcome, OperatingPoint};
pub use sweep::{bounds_table, run_sweep, write_csv, write_jsonl, SweepOutput, SweepRow, TrialRecord};
