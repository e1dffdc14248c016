//! Records: keyed, timestamped, immutable stream elements.

use std::fmt;

/// Identifier of a sensor or a sensor group. Sensors and groups share one
/// namespace so that group aggregates can re-enter the topology as if they
/// were sensor measurements.
pub type Id = String;

/// Event time in integer milliseconds since epoch. Never negative.
pub type Timestamp = i64;

/// Record key: a plain identifier, or a (child, group) pair after the
/// duplication step re-keys records per parent group.
///
/// Records with different keys can be processed in parallel; the key is also
/// the partitioning unit (see [`super::partition_for`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    /// Single identifier (sensor or group).
    Id(Id),
    /// (child, group) pair.
    Pair(Id, Id),
}

impl Key {
    pub fn pair(child: impl Into<Id>, group: impl Into<Id>) -> Self {
        Key::Pair(child.into(), group.into())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Id(id) => write!(f, "{id}"),
            Key::Pair(child, group) => write!(f, "({child},{group})"),
        }
    }
}

impl From<&str> for Key {
    fn from(id: &str) -> Self {
        Key::Id(id.to_owned())
    }
}

impl From<Id> for Key {
    fn from(id: Id) -> Self {
        Key::Id(id)
    }
}

/// A key-value pair augmented by an event timestamp. Immutable once created.
#[derive(Debug, Clone, PartialEq)]
pub struct Record<V> {
    pub key: Key,
    pub value: V,
    pub timestamp: Timestamp,
}

impl<V> Record<V> {
    pub fn new(key: impl Into<Key>, value: V, timestamp: Timestamp) -> Self {
        debug_assert!(timestamp >= 0, "record timestamp must be non-negative");
        Record {
            key: key.into(),
            value,
            timestamp,
        }
    }
}

/// Marker value signalling deletion of a key's entry in a downstream table.
///
/// A tombstone is a dedicated type, so it is distinguishable from every
/// legitimate payload; tombstones delete table entries and are never stored
/// in one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tombstone;
