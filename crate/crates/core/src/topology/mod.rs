//! The hierarchical aggregation pipeline.
//!
//! Measurements enter keyed by sensor id and are merged with already
//! computed group results converted back into measurement form. The merged
//! stream is materialized into a per-sensor last-measurement table and
//! inner-joined (two-sided) with the membership table, so a new join result
//! appears whenever either a measurement arrives or the groups a sensor
//! belongs to change. Join results are duplicated into one record per parent
//! group, with tombstones for groups the child just left; the duplicated
//! records feed a last-value table keyed (child, group), whose changelog
//! drives the per-group add/subtract aggregation. Every group result is
//! published to the output stream and fed back to the input, which is what
//! rolls values up through nested groups.

mod driver;
mod io;
mod stages;
mod types;

pub use driver::{build_topology, InputRecord, RunLog, StageGraph, Topology, TopologyConfig};
pub use io::{load_measurements, write_results};
pub use stages::{
    convert_result, duplicate_for_parents, join_measurements_with_memberships, update_last_value,
    DuplicationState, GroupStageState, GroupUpdate, InputStageState, PairStageState, PairValue,
    ValueChange,
};
pub use types::{AggregateKind, AggregationResult, Measurement, TopologyError};
