//! Benchmark harness: expands a sweep over models, methods, data sizes and
//! solver settings into independent cells, runs each (simulate, train, draw
//! posterior samples, score), and writes one CSV row per cell.

pub mod report;
pub mod run;
pub mod sweep;

use thiserror::Error;

pub use report::{aggregate, read_csv, summary_table, write_csv, Aggregate, BenchmarkRow};
pub use run::{compute_mse, fit, model_mse, run_experiment, Fit, RunOptions};
pub use sweep::{Cell, SolverSettings, SweepConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] dmvi_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid sweep: {0}")]
    Config(String),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
