//! Append-only partitioned logs.

use std::collections::VecDeque;

/// A topic: one append-only, totally ordered record sequence per partition.
///
/// Records are addressed by absolute offsets and never mutated. A consumed
/// and committed prefix can be pruned to bound memory; offsets remain
/// absolute, so pruning is invisible to consumers.
#[derive(Debug, Clone)]
pub struct PartitionedLog<T> {
    name: &'static str,
    partitions: Vec<LogPartition<T>>,
}

#[derive(Debug, Clone)]
struct LogPartition<T> {
    base_offset: u64,
    records: VecDeque<T>,
}

impl<T> PartitionedLog<T> {
    pub fn new(name: &'static str, num_partitions: usize) -> Self {
        PartitionedLog {
            name,
            partitions: (0..num_partitions)
                .map(|_| LogPartition {
                    base_offset: 0,
                    records: VecDeque::new(),
                })
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    /// Appends a record, returning its offset.
    pub fn append(&mut self, partition: usize, record: T) -> u64 {
        let p = &mut self.partitions[partition];
        let offset = p.base_offset + p.records.len() as u64;
        p.records.push_back(record);
        offset
    }

    /// The record at `offset`, if it is still retained and below the high
    /// water mark.
    pub fn get(&self, partition: usize, offset: u64) -> Option<&T> {
        let p = &self.partitions[partition];
        if offset < p.base_offset {
            return None;
        }
        p.records.get((offset - p.base_offset) as usize)
    }

    /// Next offset to be assigned in this partition.
    pub fn high_water_mark(&self, partition: usize) -> u64 {
        let p = &self.partitions[partition];
        p.base_offset + p.records.len() as u64
    }

    /// Drops all records below `offset` (typically the committed offset).
    pub fn prune_to(&mut self, partition: usize, offset: u64) {
        let p = &mut self.partitions[partition];
        while p.base_offset < offset && !p.records.is_empty() {
            p.records.pop_front();
            p.base_offset += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_absolute_across_pruning() {
        let mut log = PartitionedLog::new("t", 2);
        assert_eq!(log.append(0, "a"), 0);
        assert_eq!(log.append(0, "b"), 1);
        assert_eq!(log.append(0, "c"), 2);
        assert_eq!(log.append(1, "x"), 0, "partitions are independent");
        log.prune_to(0, 2);
        assert_eq!(log.get(0, 1), None, "pruned records are gone");
        assert_eq!(log.get(0, 2), Some(&"c"));
        assert_eq!(log.high_water_mark(0), 3);
        assert_eq!(log.append(0, "d"), 3);
    }
}
