//! Deterministic key partitioning.

use super::record::Key;

/// Assigns keys to partitions with a fixed, seedable hash.
///
/// The hash is FNV-1a over the key bytes (pair keys are separated by a 0x1f
/// unit separator so `("ab","c")` and `("a","bc")` hash differently) with the
/// seed folded into the offset basis and a final splitmix64 avalanche step.
/// The seed is part of the run configuration, so partition placement is
/// reproducible across runs.
#[derive(Debug, Clone, Copy)]
pub struct Partitioner {
    seed: u64,
    num_partitions: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hash ^= 0x1f;
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        for &byte in *part {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    // splitmix64 finalizer for avalanche on short keys
    hash = (hash ^ (hash >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    hash = (hash ^ (hash >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    hash ^ (hash >> 31)
}

impl Partitioner {
    pub fn new(seed: u64, num_partitions: usize) -> Self {
        assert!(num_partitions >= 1, "need at least one partition");
        Partitioner {
            seed,
            num_partitions,
        }
    }

    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    /// Partition index for a key; deterministic, in `[0, num_partitions)`,
    /// equal keys always map to equal partitions.
    pub fn partition(&self, key: &Key) -> usize {
        partition_for(key, self.num_partitions, self.seed)
    }

    /// Partition index for a plain identifier.
    pub fn partition_id(&self, id: &str) -> usize {
        (fnv1a(self.seed, &[id.as_bytes()]) % self.num_partitions as u64) as usize
    }
}

/// See [`Partitioner::partition`].
pub fn partition_for(key: &Key, num_partitions: usize, seed: u64) -> usize {
    assert!(num_partitions >= 1, "need at least one partition");
    let hash = match key {
        Key::Id(id) => fnv1a(seed, &[id.as_bytes()]),
        Key::Pair(child, group) => fnv1a(seed, &[child.as_bytes(), group.as_bytes()]),
    };
    (hash % num_partitions as u64) as usize
}
