//! Experiment driver for the `rsqn-core` optimizers: experiment configs, Karcher and
//! matrix-completion instances, ratings ingestion, step-size tuning and CSV metrics.

pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod runner;

pub use config::{ExperimentConfig, InnerIters, OptimizerKind, OptimizerSettings, ProblemSpec, ScheduleKind};
pub use data::{
    build_ratings, ingest_ratings, karcher_reference, karcher_samples, parse_ratings, split_assignment,
    write_synthetic, ColumnModel, Rating, RatingsData, Split,
};
pub use error::{HarnessError, Result};
pub use metrics::{read_rows, write_rows, MetricRow, HEADER};
pub use runner::{
    median, run_case, run_case_on, run_single, select_best, write_report, BestAlpha, CaseReport,
    Evaluation, Instance, RunOptions, RunResult,
};
