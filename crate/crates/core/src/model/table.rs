//! Materialized tables and their changelogs.

use std::collections::BTreeMap;

/// A single update to a table, in changelog form.
///
/// The variants carry exactly the values they are defined to carry: an insert
/// only the new value, a delete only the old value, an update both.
#[derive(Debug, Clone, PartialEq)]
pub enum ChangelogEvent<K, V> {
    Insert { key: K, new: V },
    Update { key: K, old: V, new: V },
    Delete { key: K, old: V },
}

impl<K, V> ChangelogEvent<K, V> {
    pub fn key(&self) -> &K {
        match self {
            ChangelogEvent::Insert { key, .. }
            | ChangelogEvent::Update { key, .. }
            | ChangelogEvent::Delete { key, .. } => key,
        }
    }

    /// The value visible after the event (`None` for deletes).
    pub fn new_value(&self) -> Option<&V> {
        match self {
            ChangelogEvent::Insert { new, .. } | ChangelogEvent::Update { new, .. } => Some(new),
            ChangelogEvent::Delete { .. } => None,
        }
    }

    /// The value replaced by the event (`None` for inserts).
    pub fn old_value(&self) -> Option<&V> {
        match self {
            ChangelogEvent::Insert { .. } => None,
            ChangelogEvent::Update { old, .. } | ChangelogEvent::Delete { old, .. } => Some(old),
        }
    }
}

/// Folds a changelog into the table contents it describes. Starting from
/// empty, replaying a table's changelog reproduces its entries exactly.
pub fn replay_changelog<K: Ord + Clone, V: Clone>(
    events: &[ChangelogEvent<K, V>],
) -> BTreeMap<K, V> {
    let mut entries = BTreeMap::new();
    for ev in events {
        match ev {
            ChangelogEvent::Insert { key, new } | ChangelogEvent::Update { key, new, .. } => {
                entries.insert(key.clone(), new.clone());
            }
            ChangelogEvent::Delete { key, .. } => {
                entries.remove(key);
            }
        }
    }
    entries
}

/// Latest-value-per-key view of a changelog stream.
///
/// Mutations return the corresponding [`ChangelogEvent`] so downstream
/// operators can be driven incrementally. When constructed with [`Table::new`]
/// the table additionally records its full changelog (useful for replay
/// checks and small drivers); [`Table::unlogged`] skips the recording for
/// long simulation runs.
#[derive(Debug, Clone)]
pub struct Table<K, V> {
    entries: BTreeMap<K, V>,
    changelog: Option<Vec<ChangelogEvent<K, V>>>,
}

impl<K: Ord + Clone, V: Clone> Table<K, V> {
    pub fn new() -> Self {
        Table {
            entries: BTreeMap::new(),
            changelog: Some(Vec::new()),
        }
    }

    /// A table that does not retain its changelog history.
    pub fn unlogged() -> Self {
        Table {
            entries: BTreeMap::new(),
            changelog: None,
        }
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.entries.get(key)
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<K, V> {
        &self.entries
    }

    /// Recorded changelog; empty for unlogged tables.
    pub fn changelog(&self) -> &[ChangelogEvent<K, V>] {
        self.changelog.as_deref().unwrap_or(&[])
    }

    /// Inserts or replaces the entry, returning the insert/update event.
    pub fn upsert(&mut self, key: K, value: V) -> ChangelogEvent<K, V> {
        let event = match self.entries.insert(key.clone(), value.clone()) {
            None => ChangelogEvent::Insert { key, new: value },
            Some(old) => ChangelogEvent::Update {
                key,
                old,
                new: value,
            },
        };
        if let Some(log) = &mut self.changelog {
            log.push(event.clone());
        }
        event
    }

    /// Removes the entry if present, returning the delete event. Deleting an
    /// absent key is a no-op and produces no event.
    pub fn delete(&mut self, key: &K) -> Option<ChangelogEvent<K, V>> {
        let old = self.entries.remove(key)?;
        let event = ChangelogEvent::Delete {
            key: key.clone(),
            old,
        };
        if let Some(log) = &mut self.changelog {
            log.push(event.clone());
        }
        Some(event)
    }
}

impl<K: Ord + Clone, V: Clone> Default for Table<K, V> {
    fn default() -> Self {
        Table::new()
    }
}
