//! Continuous hierarchical aggregation of keyed sensor streams.
//!
//! `cascade` rolls measurement streams up through (possibly nested, possibly
//! overlapping) sensor groups. Every operator output is treated both as a
//! stream of records and as successive updates to a table, so group
//! aggregates stay continuously up to date and group-of-group aggregates are
//! computed by feeding results back into the topology input.
//!
//! The crate is organized in layers:
//!
//! - [`model`] — records, tables, changelog events and the generic operators
//!   (merge, join, group-by, add/subtract aggregation) everything else is
//!   composed from.
//! - [`hierarchy`] — the child → parent-groups membership table, runtime
//!   reconfiguration events, and builders for nested test hierarchies.
//! - [`topology`] — the aggregation pipeline itself: merge, join, duplicate
//!   with tombstones, last-value table, group aggregate, output and feedback.
//! - [`runtime`] — a deterministic discrete-event simulation of a partitioned
//!   log broker with worker instances, rebalancing, offset commits and fault
//!   injection.
//! - [`workload`] — synthetic sensor workload generation and replay.
//! - [`harness`] — experiment orchestration: latency trend regression,
//!   scalability sweeps and reliability runs.

pub mod harness;
pub mod hierarchy;
pub mod model;
pub mod runtime;
pub mod topology;
pub mod workload;

pub use model::{ChangelogEvent, Id, Key, Record, Table, Timestamp, Tombstone};
pub use topology::{AggregationResult, Measurement};
