//! Stateless stream and table operators.

use std::collections::BTreeMap;

use super::record::Record;

/// Merges two finite record streams into one.
///
/// The output contains every record of both inputs. Records are interleaved
/// by ascending timestamp without ever reordering records of the same input
/// (on ties the left input goes first), so per-key order within each input is
/// preserved.
pub fn merge<V>(a: Vec<Record<V>>, b: Vec<Record<V>>) -> Vec<Record<V>> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut a = a.into_iter().peekable();
    let mut b = b.into_iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (Some(ra), Some(rb)) => {
                if ra.timestamp <= rb.timestamp {
                    out.push(a.next().unwrap());
                } else {
                    out.push(b.next().unwrap());
                }
            }
            (Some(_), None) => out.push(a.next().unwrap()),
            (None, Some(_)) => out.push(b.next().unwrap()),
            (None, None) => break,
        }
    }
    out
}

/// Inner join of two tables on their common key space: an output entry exists
/// only when both sides have an entry for the key.
pub fn inner_join<K, A, B>(left: &BTreeMap<K, A>, right: &BTreeMap<K, B>) -> BTreeMap<K, (A, B)>
where
    K: Ord + Clone,
    A: Clone,
    B: Clone,
{
    left.iter()
        .filter_map(|(key, a)| {
            right
                .get(key)
                .map(|b| (key.clone(), (a.clone(), b.clone())))
        })
        .collect()
}

/// Groups table entries into one bucket per extracted key, preserving the
/// original keys inside each bucket.
pub fn group_by<K, G, V, F>(entries: &BTreeMap<K, V>, extract: F) -> BTreeMap<G, Vec<(K, V)>>
where
    K: Ord + Clone,
    G: Ord,
    V: Clone,
    F: Fn(&K) -> G,
{
    let mut buckets: BTreeMap<G, Vec<(K, V)>> = BTreeMap::new();
    for (key, value) in entries {
        buckets
            .entry(extract(key))
            .or_default()
            .push((key.clone(), value.clone()));
    }
    buckets
}
