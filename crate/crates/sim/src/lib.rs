//! Experiment harness for the `wsnfm-core` simulator: configuration, named
//! fault scenarios, replicated sweeps and CSV output.

pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, Flags};
pub use output::{emit_csv, OutputError};
pub use scenario::Scenario;
pub use sweep::{run_one, run_sweep, AggregateRow, SweepError};
