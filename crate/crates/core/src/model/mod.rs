//! Dual-streaming primitives.
//!
//! A data stream is an append-only sequence of immutable [`Record`]s (key,
//! value, timestamp). Operator outputs can equally be viewed as successive
//! updates to a [`Table`], materialized as a stream of insert, update and
//! delete [`ChangelogEvent`]s. The operators in this module are the generic
//! building blocks the aggregation topology is wired from.

mod aggregate;
mod ops;
mod partition;
mod record;
mod table;

pub use aggregate::{AggregateSpec, GroupedAggregate, SumSpec};
pub use ops::{group_by, inner_join, merge};
pub use partition::{partition_for, Partitioner};
pub use record::{Id, Key, Record, Timestamp, Tombstone};
pub use table::{replay_changelog, ChangelogEvent, Table};
