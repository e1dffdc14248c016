//! Experiment orchestration and statistics.
//!
//! Two experiments ship with the engine: a scalability sweep that determines,
//! per workload size, the minimum number of instances whose latency trend
//! stays below a slope threshold, and a reliability run that injects an
//! instance outage and tracks smoothed throughput while the backlog drains.

mod reliability;
mod scalability;
mod stats;

pub use reliability::{
    run_reliability, write_reliability_csv, ReliabilityConfig, ReliabilityReport, ThroughputSeries,
};
pub use scalability::{
    min_sufficient_instances, run_scalability, write_scalability_csv, RunParameters,
    ScalabilityConfig, ScalabilityResult,
};
pub use stats::{
    fit_through_origin, latency_trend, median_lower, moving_average, StatsError, TrendResult,
    DEFAULT_SLOPE_THRESHOLD_MS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Runtime(#[from] crate::runtime::RuntimeError),
}
