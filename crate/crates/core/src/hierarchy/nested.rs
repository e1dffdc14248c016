//! Builders for the nested evaluation hierarchies.

use crate::model::Id;

use super::membership::{MembershipEvent, MembershipTable};

/// A complete `fan_out`-ary grouping tree of the given depth: `fan_out^depth`
/// leaf sensors, one group per internal node, a single root group.
///
/// Sensors are named `s<i>`, the group at level `l` (root = level 0) with
/// index `j` is named `g<l>_<j>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedHierarchy {
    pub fan_out: u32,
    pub depth: u32,
}

impl NestedHierarchy {
    pub fn new(fan_out: u32, depth: u32) -> Self {
        assert!(fan_out >= 1, "fan_out must be positive");
        assert!(depth >= 1, "depth must be positive");
        NestedHierarchy { fan_out, depth }
    }

    pub fn sensor_count(&self) -> u64 {
        u64::from(self.fan_out).pow(self.depth)
    }

    /// Number of group nodes: sum of `fan_out^l` for levels `0..depth`.
    pub fn group_count(&self) -> u64 {
        (0..self.depth)
            .map(|level| u64::from(self.fan_out).pow(level))
            .sum()
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = Id> {
        (0..self.sensor_count()).map(|i| format!("s{i}"))
    }

    fn group_id(level: u32, index: u64) -> Id {
        format!("g{level}_{index}")
    }

    /// Materializes the membership table for this hierarchy.
    pub fn table(&self) -> MembershipTable {
        let mut table = MembershipTable::new();
        let fan_out = u64::from(self.fan_out);
        let mut push = |child: Id, parent: Id| {
            let event = MembershipEvent {
                child,
                parents: std::iter::once(parent).collect(),
                timestamp: 0,
            };
            table
                .apply_event(&event)
                .expect("nested hierarchies are acyclic by construction");
        };
        for i in 0..self.sensor_count() {
            push(format!("s{i}"), Self::group_id(self.depth - 1, i / fan_out));
        }
        // Internal groups at level l attach to level l - 1; the root (level 0)
        // has no parent and therefore no table entry.
        for level in (1..self.depth).rev() {
            for j in 0..fan_out.pow(level) {
                push(Self::group_id(level, j), Self::group_id(level - 1, j / fan_out));
            }
        }
        table
    }

    pub fn root_id(&self) -> Id {
        Self::group_id(0, 0)
    }
}

/// See [`NestedHierarchy`].
pub fn build_nested_hierarchy(fan_out: u32, depth: u32) -> MembershipTable {
    NestedHierarchy::new(fan_out, depth).table()
}
