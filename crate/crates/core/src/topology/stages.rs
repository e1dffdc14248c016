//! The topology's stateful processing stages.
//!
//! The pipeline is split into three stages along its repartition boundaries,
//! so the same functions serve both the in-memory driver and the partitioned
//! simulation runtime:
//!
//! - input stage, keyed by sensor/child id: last-measurement table,
//!   membership join and duplication;
//! - pair stage, keyed by (child, group): the last-value table, re-keying its
//!   changelog by group;
//! - group stage, keyed by group id: the add/subtract aggregation.

use std::collections::BTreeSet;

use crate::hierarchy::MembershipTable;
use crate::model::{
    ChangelogEvent, GroupedAggregate, Id, Key, Record, SumSpec, Table, Timestamp, Tombstone,
};

use super::types::{AggregationResult, Measurement};

/// Value of a duplicated record keyed (child, group): the child's measurement
/// or a tombstone revoking the pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PairValue {
    Measurement(Measurement),
    Tombstone(Tombstone),
}

/// Remembers, per child, the parent set used for the child's previous
/// emission, so the duplication step can tombstone memberships that
/// disappeared. Scoped to one partition, never shared across partitions.
#[derive(Debug, Clone, Default)]
pub struct DuplicationState {
    previous: Table<Id, BTreeSet<Id>>,
}

impl DuplicationState {
    pub fn new() -> Self {
        DuplicationState {
            previous: Table::unlogged(),
        }
    }

    pub fn previous_parents(&self, child: &str) -> Option<&BTreeSet<Id>> {
        self.previous.get(&child.to_owned())
    }
}

/// Duplicates a join result into one record per parent group.
///
/// Emits `((child, g), measurement)` for every current parent `g` and a
/// tombstone `((child, g'), ⧫)` for every `g'` the child belonged to at the
/// previous emission but no longer does. The stored set is then updated to
/// `parents`.
pub fn duplicate_for_parents(
    state: &mut DuplicationState,
    child: &str,
    measurement: &Measurement,
    parents: &BTreeSet<Id>,
    trigger_ts: Timestamp,
) -> Vec<Record<PairValue>> {
    let child_id = child.to_owned();
    let mut records = Vec::with_capacity(parents.len());
    for group in parents {
        records.push(Record::new(
            Key::Pair(child_id.clone(), group.clone()),
            PairValue::Measurement(measurement.clone()),
            trigger_ts,
        ));
    }
    if let Some(previous) = state.previous.get(&child_id) {
        for gone in previous.difference(parents) {
            records.push(Record::new(
                Key::Pair(child_id.clone(), gone.clone()),
                PairValue::Tombstone(Tombstone),
                trigger_ts,
            ));
        }
    }
    if parents.is_empty() {
        state.previous.delete(&child_id);
    } else {
        state.previous.upsert(child_id, parents.clone());
    }
    records
}

/// State of the input stage: the membership table slice, the per-sensor
/// last-measurement table the merged stream is materialized into, and the
/// duplication state. All three are co-partitioned by child id.
#[derive(Debug, Clone)]
pub struct InputStageState {
    pub membership: MembershipTable,
    last_measurement: Table<Id, Measurement>,
    duplication: DuplicationState,
    /// External measurements dropped because they were older than the stored
    /// last measurement for their sensor.
    pub late_rejected: u64,
}

impl InputStageState {
    pub fn new(membership: MembershipTable) -> Self {
        InputStageState {
            membership,
            last_measurement: Table::unlogged(),
            duplication: DuplicationState::new(),
            late_rejected: 0,
        }
    }

    pub fn last_measurement(&self, id: &str) -> Option<&Measurement> {
        self.last_measurement.get(&id.to_owned())
    }

    /// Handles one merged-stream measurement (external sensor data or
    /// converted feedback).
    ///
    /// External records older than the stored last measurement for their
    /// sensor are rejected and counted; feedback records are ordered by the
    /// log they arrived on and always accepted. Returns the duplicated
    /// records for the pair stage; inner-join semantics mean a sensor without
    /// memberships produces nothing.
    pub fn handle_measurement(
        &mut self,
        measurement: &Measurement,
        external: bool,
        trigger_ts: Timestamp,
    ) -> Vec<Record<PairValue>> {
        if external {
            if let Some(stored) = self.last_measurement.get(&measurement.sensor) {
                if measurement.timestamp < stored.timestamp {
                    self.late_rejected += 1;
                    return Vec::new();
                }
            }
        }
        self.last_measurement
            .upsert(measurement.sensor.clone(), measurement.clone());
        if !self.membership.contains_child(&measurement.sensor) {
            return Vec::new();
        }
        let parents = self.membership.parents_of(&measurement.sensor).clone();
        duplicate_for_parents(
            &mut self.duplication,
            &measurement.sensor,
            measurement,
            &parents,
            trigger_ts,
        )
    }

    /// Reacts to a change of `child`'s parent set (the membership side of the
    /// two-sided join): if the child has a joined measurement, re-emits its
    /// duplicated records against the new parent set, tombstoning revoked
    /// memberships.
    ///
    /// The membership table itself must already reflect the change.
    pub fn handle_membership_change(
        &mut self,
        child: &str,
        trigger_ts: Timestamp,
    ) -> Vec<Record<PairValue>> {
        let Some(measurement) = self.last_measurement.get(&child.to_owned()).cloned() else {
            return Vec::new();
        };
        let parents = self.membership.parents_of(child).clone();
        duplicate_for_parents(&mut self.duplication, child, &measurement, &parents, trigger_ts)
    }
}

/// A last-value changelog event re-keyed by group for the aggregation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupUpdate {
    pub group: Id,
    pub change: ValueChange,
    pub trigger_ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueChange {
    Added { new: f64 },
    Updated { old: f64, new: f64 },
    Removed { old: f64 },
}

/// State of the pair stage: the last-value table keyed (child, group).
#[derive(Debug, Clone)]
pub struct PairStageState {
    last_value: Table<(Id, Id), Measurement>,
}

impl PairStageState {
    pub fn new() -> Self {
        PairStageState {
            last_value: Table::unlogged(),
        }
    }

    pub fn last_value(&self) -> &Table<(Id, Id), Measurement> {
        &self.last_value
    }

    /// Applies a duplicated record to the last-value table and re-keys the
    /// resulting changelog event by group. Tombstones delete the entry; a
    /// tombstone for an absent entry is a no-op that emits nothing.
    pub fn handle_pair_record(&mut self, record: &Record<PairValue>) -> Option<GroupUpdate> {
        update_last_value(&mut self.last_value, record)
    }
}

impl Default for PairStageState {
    fn default() -> Self {
        PairStageState::new()
    }
}

/// Applies one duplicated record to a last-value table.
pub fn update_last_value(
    table: &mut Table<(Id, Id), Measurement>,
    record: &Record<PairValue>,
) -> Option<GroupUpdate> {
    let Key::Pair(child, group) = &record.key else {
        debug_assert!(false, "pair stage records must carry pair keys");
        return None;
    };
    let key = (child.clone(), group.clone());
    let change = match &record.value {
        PairValue::Measurement(measurement) => {
            match table.upsert(key, measurement.clone()) {
                ChangelogEvent::Insert { new, .. } => ValueChange::Added { new: new.value },
                ChangelogEvent::Update { old, new, .. } => ValueChange::Updated {
                    old: old.value,
                    new: new.value,
                },
                ChangelogEvent::Delete { .. } => unreachable!("upsert never deletes"),
            }
        }
        PairValue::Tombstone(_) => {
            let event = table.delete(&key)?;
            match event {
                ChangelogEvent::Delete { old, .. } => ValueChange::Removed { old: old.value },
                _ => unreachable!("delete only emits delete events"),
            }
        }
    };
    Some(GroupUpdate {
        group: group.clone(),
        change,
        trigger_ts: record.timestamp,
    })
}

/// State of the group stage: one incremental sum per group.
pub struct GroupStageState {
    aggregate: GroupedAggregate<SumSpec>,
}

impl GroupStageState {
    pub fn new() -> Self {
        GroupStageState {
            aggregate: GroupedAggregate::new(),
        }
    }

    /// Applies a group update and emits the group's new aggregation result.
    /// The result carries the timestamp of the record that triggered it.
    pub fn handle_group_update(&mut self, update: &GroupUpdate) -> AggregationResult {
        let event: ChangelogEvent<(), f64> = match update.change {
            ValueChange::Added { new } => ChangelogEvent::Insert { key: (), new },
            ValueChange::Updated { old, new } => ChangelogEvent::Update { key: (), old, new },
            ValueChange::Removed { old } => ChangelogEvent::Delete { key: (), old },
        };
        let state = self.aggregate.apply(&update.group, &event);
        AggregationResult {
            group: update.group.clone(),
            sum: state.value,
            count: state.count,
            timestamp: update.trigger_ts,
        }
    }

    /// Current (sum, count) per group.
    pub fn aggregates(&self) -> impl Iterator<Item = (&Id, f64, u64)> {
        self.aggregate
            .groups()
            .iter()
            .map(|(group, state)| (group, state.value, state.count))
    }
}

impl Default for GroupStageState {
    fn default() -> Self {
        GroupStageState::new()
    }
}

/// Full materialization of the two-sided inner join between the per-sensor
/// last-measurement table and the membership table: an entry exists exactly
/// for the keys present on both sides.
///
/// The running topology maintains this join incrementally (via
/// [`InputStageState::handle_measurement`] and
/// [`InputStageState::handle_membership_change`]); the materialized form is
/// its point-in-time contract.
pub fn join_measurements_with_memberships(
    measurements: &Table<Id, Measurement>,
    memberships: &MembershipTable,
) -> std::collections::BTreeMap<Id, (Measurement, BTreeSet<Id>)> {
    crate::model::inner_join(measurements.entries(), memberships.entries())
}

/// Converts a group result into measurement form so it can be merged back
/// into the input stream. The member count is not representable in a
/// measurement and is dropped here.
pub fn convert_result(result: &AggregationResult) -> Measurement {
    Measurement {
        sensor: result.group.clone(),
        value: result.sum,
        timestamp: result.timestamp,
    }
}
