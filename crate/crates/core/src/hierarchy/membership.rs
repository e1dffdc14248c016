//! The child → parent-groups membership table and its change events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChangelogEvent, Id, Timestamp};

static NO_PARENTS: BTreeSet<Id> = BTreeSet::new();

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("membership change would create a cycle: {}", .path.join(" -> "))]
    Cycle { path: Vec<Id> },
    #[error("duplicate identifier: {0}")]
    DuplicateIdentifier(Id),
    #[error("invalid identifier: {0:?}")]
    InvalidIdentifier(String),
}

/// One table entry: a child and the set of groups it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipSet {
    pub child: Id,
    pub parents: BTreeSet<Id>,
}

/// A change to a child's group memberships.
///
/// Events carry the child's full new parent set rather than a delta; an empty
/// set removes the child from all groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipEvent {
    pub child: Id,
    pub parents: BTreeSet<Id>,
    #[serde(rename = "ts")]
    pub timestamp: Timestamp,
}

/// Mapping from child id to the set of groups containing it.
///
/// Entries never hold an empty parent set: removing the last membership
/// deletes the entry. The induced directed graph (edge child → parent) is
/// kept acyclic by rejecting cycle-creating events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MembershipTable {
    entries: BTreeMap<Id, BTreeSet<Id>>,
}

impl MembershipTable {
    pub fn new() -> Self {
        MembershipTable::default()
    }

    /// Builds a table without acyclicity checks. Callers are expected to run
    /// [`MembershipTable::validate`] afterwards; tests use this to construct
    /// deliberately broken tables.
    pub fn from_entries_unchecked(entries: BTreeMap<Id, BTreeSet<Id>>) -> Self {
        let entries = entries
            .into_iter()
            .filter(|(_, parents)| !parents.is_empty())
            .collect();
        MembershipTable { entries }
    }

    pub fn entries(&self) -> &BTreeMap<Id, BTreeSet<Id>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_child(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// The stored parent set, or the empty set if the id is absent.
    pub fn parents_of(&self, id: &str) -> &BTreeSet<Id> {
        self.entries.get(id).unwrap_or(&NO_PARENTS)
    }

    /// Applies a membership event: the child's parent set is replaced by the
    /// event's set, and the matching changelog event is returned (`None` when
    /// nothing changed, i.e. removing an absent child).
    ///
    /// Events that would create a cycle are rejected without mutating the
    /// table.
    pub fn apply_event(
        &mut self,
        event: &MembershipEvent,
    ) -> Result<Option<ChangelogEvent<Id, BTreeSet<Id>>>, HierarchyError> {
        if event.child.is_empty() {
            return Err(HierarchyError::InvalidIdentifier(event.child.clone()));
        }
        if let Some(path) = self.cycle_created_by(&event.child, &event.parents) {
            return Err(HierarchyError::Cycle { path });
        }
        let child = event.child.clone();
        if event.parents.is_empty() {
            Ok(self
                .entries
                .remove(&child)
                .map(|old| ChangelogEvent::Delete { key: child, old }))
        } else {
            let new = event.parents.clone();
            Ok(Some(
                match self.entries.insert(child.clone(), new.clone()) {
                    None => ChangelogEvent::Insert { key: child, new },
                    Some(old) => ChangelogEvent::Update {
                        key: child,
                        old,
                        new,
                    },
                },
            ))
        }
    }

    /// Returns the cycle that assigning `parents` to `child` would create, if
    /// any: some new parent reaches `child` by following parent edges.
    fn cycle_created_by(&self, child: &str, parents: &BTreeSet<Id>) -> Option<Vec<Id>> {
        for parent in parents {
            if parent == child {
                return Some(vec![child.to_owned(), child.to_owned()]);
            }
            if let Some(mut path) = self.path_to(parent, child) {
                // path runs parent -> ... -> child; prepend the new edge.
                let mut cycle = vec![child.to_owned()];
                cycle.append(&mut path);
                return Some(cycle);
            }
        }
        None
    }

    /// Depth-first search for a path from `from` to `to` along parent edges.
    fn path_to(&self, from: &str, to: &str) -> Option<Vec<Id>> {
        let mut stack = vec![vec![from.to_owned()]];
        let mut visited = BTreeSet::new();
        while let Some(path) = stack.pop() {
            let node = path.last().expect("paths are non-empty");
            if node == to {
                return Some(path);
            }
            if !visited.insert(node.clone()) {
                continue;
            }
            for parent in self.parents_of(node) {
                let mut next = path.clone();
                next.push(parent.clone());
                stack.push(next);
            }
        }
        None
    }

    /// Checks the whole table for cycles. Returns the offending cycle's node
    /// ids on failure.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        // Iterative three-color depth-first search over every node.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            InProgress,
            Done,
        }
        let mut colors: BTreeMap<&str, Color> = BTreeMap::new();
        for start in self.entries.keys() {
            if colors.contains_key(start.as_str()) {
                continue;
            }
            // Stack of (node, next-parent iterator position) with an explicit
            // path for cycle reporting.
            let mut path: Vec<&str> = Vec::new();
            let mut stack: Vec<(&str, std::collections::btree_set::Iter<'_, Id>)> =
                vec![(start.as_str(), self.parents_of(start).iter())];
            colors.insert(start.as_str(), Color::InProgress);
            path.push(start.as_str());
            while let Some((node, parents)) = stack.last_mut() {
                match parents.next() {
                    Some(parent) => match colors.get(parent.as_str()) {
                        Some(Color::InProgress) => {
                            let from = path
                                .iter()
                                .position(|n| n == &parent.as_str())
                                .expect("in-progress node is on the path");
                            let mut cycle: Vec<Id> =
                                path[from..].iter().map(|n| (*n).to_owned()).collect();
                            cycle.push(parent.clone());
                            return Err(HierarchyError::Cycle { path: cycle });
                        }
                        Some(Color::Done) => {}
                        None => {
                            colors.insert(parent.as_str(), Color::InProgress);
                            path.push(parent.as_str());
                            stack.push((parent.as_str(), self.parents_of(parent).iter()));
                        }
                    },
                    None => {
                        colors.insert(node, Color::Done);
                        path.pop();
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }

    /// Every node mentioned anywhere in the table (children and parents).
    pub fn node_ids(&self) -> BTreeSet<Id> {
        let mut ids: BTreeSet<Id> = self.entries.keys().cloned().collect();
        for parents in self.entries.values() {
            ids.extend(parents.iter().cloned());
        }
        ids
    }

    /// Ids that appear as a parent of some child, i.e. group ids.
    pub fn group_ids(&self) -> BTreeSet<Id> {
        let mut ids = BTreeSet::new();
        for parents in self.entries.values() {
            ids.extend(parents.iter().cloned());
        }
        ids
    }

    /// Ids that never appear as a parent: the leaf sensors.
    pub fn leaf_ids(&self) -> BTreeSet<Id> {
        let groups = self.group_ids();
        self.entries
            .keys()
            .filter(|id| !groups.contains(*id))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(child: &str, parents: &[&str]) -> MembershipEvent {
        MembershipEvent {
            child: child.to_owned(),
            parents: parents.iter().map(|p| (*p).to_owned()).collect(),
            timestamp: 0,
        }
    }

    fn parents(ps: &[&str]) -> BTreeSet<Id> {
        ps.iter().map(|p| (*p).to_owned()).collect()
    }

    #[test]
    fn insert_into_empty_table() {
        let mut table = MembershipTable::new();
        let ev = table.apply_event(&event("s1", &["g1"])).unwrap();
        assert_eq!(table.parents_of("s1"), &parents(&["g1"]));
        assert_eq!(
            ev,
            Some(ChangelogEvent::Insert {
                key: "s1".to_owned(),
                new: parents(&["g1"]),
            })
        );
    }

    #[test]
    fn shrinking_the_parent_set_is_an_update_with_old_value() {
        let mut table = MembershipTable::new();
        table.apply_event(&event("s1", &["g1", "g2"])).unwrap();
        let ev = table.apply_event(&event("s1", &["g1"])).unwrap();
        assert_eq!(table.parents_of("s1"), &parents(&["g1"]));
        assert_eq!(
            ev,
            Some(ChangelogEvent::Update {
                key: "s1".to_owned(),
                old: parents(&["g1", "g2"]),
                new: parents(&["g1"]),
            })
        );
    }

    #[test]
    fn empty_parent_set_deletes_the_entry() {
        let mut table = MembershipTable::new();
        table.apply_event(&event("s1", &["g1"])).unwrap();
        let ev = table.apply_event(&event("s1", &[])).unwrap();
        assert!(!table.contains_child("s1"));
        assert!(matches!(ev, Some(ChangelogEvent::Delete { .. })));
        // Removing an absent child changes nothing.
        assert_eq!(table.apply_event(&event("s1", &[])).unwrap(), None);
    }

    #[test]
    fn two_node_cycle_is_rejected_without_mutation() {
        let mut table = MembershipTable::new();
        table.apply_event(&event("g1", &["g2"])).unwrap();
        let err = table.apply_event(&event("g2", &["g1"])).unwrap_err();
        match err {
            HierarchyError::Cycle { path } => {
                // Brute-force oracle: with edges g1->g2 and g2->g1 the only
                // cycle is {g1, g2}.
                let nodes: BTreeSet<_> = path.iter().cloned().collect();
                assert_eq!(nodes, parents(&["g1", "g2"]));
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
        assert!(!table.contains_child("g2"), "rejected event must not mutate");
    }

    #[test]
    fn self_membership_is_rejected() {
        let mut table = MembershipTable::new();
        let err = table.apply_event(&event("g1", &["g1"])).unwrap_err();
        assert!(matches!(err, HierarchyError::Cycle { .. }));
    }

    #[test]
    fn replacing_own_parents_does_not_false_positive() {
        let mut table = MembershipTable::new();
        table.apply_event(&event("s1", &["g1"])).unwrap();
        table.apply_event(&event("g1", &["g2"])).unwrap();
        // Re-pointing s1 at g2 is fine even though g1 is reachable from s1.
        table.apply_event(&event("s1", &["g2"])).unwrap();
        assert_eq!(table.parents_of("s1"), &parents(&["g2"]));
    }

    #[test]
    fn validate_accepts_empty_and_tree() {
        assert_eq!(MembershipTable::new().validate(), Ok(()));
        let mut table = MembershipTable::new();
        table.apply_event(&event("s1", &["g1"])).unwrap();
        table.apply_event(&event("g1", &["G"])).unwrap();
        table.apply_event(&event("g2", &["G"])).unwrap();
        assert_eq!(table.validate(), Ok(()));
    }

    #[test]
    fn validate_reports_the_cycle_nodes() {
        // Assembled without checks: g1 -> g2 -> g3 -> g1.
        let mut entries = BTreeMap::new();
        entries.insert("g1".to_owned(), parents(&["g2"]));
        entries.insert("g2".to_owned(), parents(&["g3"]));
        entries.insert("g3".to_owned(), parents(&["g1"]));
        let table = MembershipTable::from_entries_unchecked(entries);
        match table.validate() {
            Err(HierarchyError::Cycle { path }) => {
                let nodes: BTreeSet<_> = path.iter().cloned().collect();
                assert_eq!(nodes, parents(&["g1", "g2", "g3"]));
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn parents_of_absent_id_is_empty() {
        let table = MembershipTable::new();
        assert!(table.parents_of("nope").is_empty());
    }

    #[test]
    fn parents_of_follows_the_event_history() {
        let mut table = MembershipTable::new();
        table.apply_event(&event("s1", &["g1", "g2"])).unwrap();
        assert_eq!(table.parents_of("s1"), &parents(&["g1", "g2"]));
        table.apply_event(&event("s1", &["g1"])).unwrap();
        assert_eq!(table.parents_of("s1"), &parents(&["g1"]));
    }

    #[test]
    fn rejects_empty_identifier() {
        let mut table = MembershipTable::new();
        let err = table.apply_event(&event("", &["g1"])).unwrap_err();
        assert!(matches!(err, HierarchyError::InvalidIdentifier(_)));
    }

    /// Brute-force reachability used as an independent acyclicity oracle.
    fn reaches(entries: &BTreeMap<Id, BTreeSet<Id>>, from: &str, to: &str) -> bool {
        let mut frontier = vec![from.to_owned()];
        let mut seen = BTreeSet::new();
        while let Some(node) = frontier.pop() {
            if node == to {
                return true;
            }
            if !seen.insert(node.clone()) {
                continue;
            }
            if let Some(parents) = entries.get(&node) {
                frontier.extend(parents.iter().cloned());
            }
        }
        false
    }

    proptest! {
        // Random accepted event sequences never yield a cycle, checked by an
        // exhaustive independent reachability test.
        #[test]
        fn accepted_events_preserve_acyclicity(
            events in prop::collection::vec((0u8..8, prop::collection::btree_set(0u8..8, 0..4)), 1..60)
        ) {
            let mut table = MembershipTable::new();
            for (child, parent_ids) in events {
                let ev = MembershipEvent {
                    child: format!("n{child}"),
                    parents: parent_ids.iter().map(|p| format!("n{p}")).collect(),
                    timestamp: 0,
                };
                let _ = table.apply_event(&ev);
                for node in table.entries().keys() {
                    for parent in table.parents_of(node) {
                        prop_assert!(
                            !reaches(table.entries(), parent, node),
                            "cycle through {node} -> {parent}"
                        );
                    }
                }
            }
            prop_assert_eq!(table.validate(), Ok(()));
        }

        // parents_of agrees with a naive replay over the event history.
        #[test]
        fn parents_of_matches_naive_replay(
            events in prop::collection::vec((0u8..6, prop::collection::btree_set(0u8..6, 0..3)), 1..40)
        ) {
            let mut table = MembershipTable::new();
            let mut naive: BTreeMap<Id, BTreeSet<Id>> = BTreeMap::new();
            for (child, parent_ids) in events {
                let ev = MembershipEvent {
                    child: format!("n{child}"),
                    parents: parent_ids.iter().map(|p| format!("n{p}")).collect(),
                    timestamp: 0,
                };
                if table.apply_event(&ev).is_ok() {
                    if ev.parents.is_empty() {
                        naive.remove(&ev.child);
                    } else {
                        naive.insert(ev.child.clone(), ev.parents.clone());
                    }
                }
            }
            for (child, parents) in &naive {
                prop_assert_eq!(table.parents_of(child), parents);
            }
            prop_assert_eq!(table.entries().len(), naive.len());
        }
    }
}
