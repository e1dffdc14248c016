//! Deterministic discrete-event execution fabric.
//!
//! Simulates a partitioned log broker and a consumer group of worker
//! instances with finite capacity: range-based partition assignment,
//! periodic offset commits with at-least-once redelivery after failures, and
//! fault injection (stopping and restarting instances). Time is a virtual
//! clock advanced in fixed ticks; given the same configuration and seed,
//! every run is bit-identical.

mod cluster;
mod log;
mod metrics;
mod sim;

pub use cluster::{
    Cluster, ClusterConfig, Instance, InstanceState, LatencySample, RuntimeError, TickMetrics,
    Topic,
};
pub use log::PartitionedLog;
pub use metrics::{write_metrics_csv, MetricsRow};
pub use sim::{run_sim, ScheduleAction, ScheduleCommand, SimReport, SimSpec};
