//! Experiment driver for the `dcbrec` binary: configuration, the six
//! subcommands, and report rendering.

pub mod algo;
pub mod commands;
pub mod config;
pub mod output;
pub mod report;

pub use algo::AlgoRequest;
pub use commands::{
    calibrate, ingest, run, split_cmd, sweep_l, synth_check, CalibrationRecord, IngestSummary,
    RunReport, SplitSummary, SweepReport, SynthReport,
};
pub use config::{ExperimentConfig, Overrides};
pub use output::{StageError, StageResult};
