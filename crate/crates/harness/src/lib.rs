//! Experiment engine: builds topology corpora, runs the role-assignment
//! algorithms on them and collects throughput, stretch, validity and
//! convergence metrics with Student-t confidence intervals.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod stats;

pub use config::{Algorithm, ExperimentConfig, Topology};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, Aggregate, MetricsRow, MetricsTable, RowStatus};
pub use output::{emit_csv, emit_plot_data, plot_data_string, rows_csv_string};
