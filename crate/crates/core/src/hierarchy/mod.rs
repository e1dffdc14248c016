//! Sensor group hierarchies.
//!
//! A hierarchy is described by a membership table mapping each child (sensor
//! or group) to the set of groups containing it. A child may belong to
//! several groups at once, which is how multiple overlapping hierarchies over
//! the same sensors are expressed; identifiers must be unique across all of
//! them. The induced child → parent graph must stay acyclic, otherwise the
//! topology's feedback loop would recirculate records forever, so events that
//! would create a cycle are rejected at ingestion.

mod io;
mod membership;
mod nested;

pub use io::{load_membership_events, load_membership_table, write_membership_table};
pub use membership::{HierarchyError, MembershipEvent, MembershipSet, MembershipTable};
pub use nested::{build_nested_hierarchy, NestedHierarchy};
