//! Configuration, metrics and the end-to-end run loop.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{load_config, ConfigError, Mode, RunConfig};
pub use metrics::{write_csv, MetricsRow, COLUMNS};
pub use run::{run_algorithm1, run_config, write_outputs, RunError, RunOutput, Summary, TracePoint};
