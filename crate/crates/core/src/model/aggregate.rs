//! Incremental add/subtract aggregation over grouped tables.

use std::collections::BTreeMap;

use super::table::ChangelogEvent;

/// An aggregate function expressed as an add/subtract pair.
///
/// `add` and `subtract` must be inverses over the payload domain: updating a
/// member first subtracts its previous value, then adds the new one, so a
/// group aggregate never has to be recomputed from scratch. Aggregates
/// without an efficient subtract inverse (min, max) do not fit this contract.
pub trait AggregateSpec {
    type Input;
    type Acc: Clone;

    fn init() -> Self::Acc;
    fn add(acc: Self::Acc, value: &Self::Input) -> Self::Acc;
    fn subtract(acc: Self::Acc, value: &Self::Input) -> Self::Acc;
}

/// Sum of `f64` payloads, accumulated in double precision.
pub struct SumSpec;

impl AggregateSpec for SumSpec {
    type Input = f64;
    type Acc = f64;

    fn init() -> f64 {
        0.0
    }

    fn add(acc: f64, value: &f64) -> f64 {
        acc + value
    }

    fn subtract(acc: f64, value: &f64) -> f64 {
        acc - value
    }
}

/// Per-group aggregate state.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAggregate<A> {
    pub value: A,
    /// Number of member entries currently contributing to the aggregate.
    pub count: u64,
}

/// Maintains one incremental aggregate per group, driven by the changelog of
/// a grouped table.
///
/// Every processed input event yields exactly one result carrying the
/// post-add (or, for deletes, post-subtract) value; the transient
/// post-subtract value of an update is never exposed.
pub struct GroupedAggregate<S: AggregateSpec> {
    groups: BTreeMap<String, GroupAggregate<S::Acc>>,
    _spec: std::marker::PhantomData<fn() -> S>,
}

impl<S: AggregateSpec> Default for GroupedAggregate<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: AggregateSpec> GroupedAggregate<S> {
    pub fn new() -> Self {
        GroupedAggregate {
            groups: BTreeMap::new(),
            _spec: std::marker::PhantomData,
        }
    }

    /// Applies one member-level changelog event to the group it belongs to
    /// and returns the updated aggregate.
    ///
    /// Inserts call `add`, updates call `subtract` for the previous value
    /// followed by `add` for the new one, deletes solely call `subtract`.
    /// When the last member leaves, the accumulator is reset to `init()` so
    /// an empty group reports the exact identity value rather than floating
    /// point residue.
    pub fn apply<K>(&mut self, group: &str, event: &ChangelogEvent<K, S::Input>) -> GroupAggregate<S::Acc> {
        let state = self
            .groups
            .entry(group.to_owned())
            .or_insert_with(|| GroupAggregate {
                value: S::init(),
                count: 0,
            });
        match event {
            ChangelogEvent::Insert { new, .. } => {
                state.value = S::add(state.value.clone(), new);
                state.count += 1;
            }
            ChangelogEvent::Update { old, new, .. } => {
                state.value = S::add(S::subtract(state.value.clone(), old), new);
            }
            ChangelogEvent::Delete { old, .. } => {
                state.value = S::subtract(state.value.clone(), old);
                state.count = state.count.saturating_sub(1);
                if state.count == 0 {
                    state.value = S::init();
                }
            }
        }
        state.clone()
    }

    pub fn get(&self, group: &str) -> Option<&GroupAggregate<S::Acc>> {
        self.groups.get(group)
    }

    pub fn groups(&self) -> &BTreeMap<String, GroupAggregate<S::Acc>> {
        &self.groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Sum = GroupedAggregate<SumSpec>;

    fn insert(v: f64) -> ChangelogEvent<&'static str, f64> {
        ChangelogEvent::Insert { key: "k", new: v }
    }

    #[test]
    fn insert_into_empty_group_adds_to_init() {
        let mut agg = Sum::new();
        let out = agg.apply("g1", &insert(5.0));
        assert_eq!(out.value, 5.0);
        assert_eq!(out.count, 1);
    }

    #[test]
    fn update_subtracts_previous_then_adds_new() {
        // Group sum 12 built from entries 5 and 7; updating the 5 to 7
        // yields 12 - 5 + 7 = 14. Cross-checked by refolding the final
        // member values.
        let mut agg = Sum::new();
        agg.apply("g1", &ChangelogEvent::Insert { key: "s1", new: 5.0 });
        agg.apply("g1", &ChangelogEvent::Insert { key: "s2", new: 7.0 });
        let out = agg.apply(
            "g1",
            &ChangelogEvent::Update {
                key: "s1",
                old: 5.0,
                new: 7.0,
            },
        );
        assert_eq!(out.value, 14.0);
        assert_eq!(out.count, 2);
        let refold: f64 = [7.0, 7.0].iter().sum();
        assert_eq!(out.value, refold);
    }

    #[test]
    fn delete_solely_subtracts() {
        let mut agg = Sum::new();
        agg.apply("g1", &ChangelogEvent::Insert { key: "s1", new: 7.0 });
        agg.apply("g1", &ChangelogEvent::Insert { key: "s2", new: 7.0 });
        let out = agg.apply(
            "g1",
            &ChangelogEvent::Delete {
                key: "s1",
                old: 7.0,
            },
        );
        assert_eq!(out.value, 7.0);
        assert_eq!(out.count, 1);
    }

    #[test]
    fn emptied_group_reports_exact_zero() {
        let mut agg = Sum::new();
        agg.apply("g1", &ChangelogEvent::Insert { key: "s1", new: 5.3 });
        agg.apply("g1", &ChangelogEvent::Insert { key: "s2", new: 2.1 });
        agg.apply("g1", &ChangelogEvent::Delete { key: "s1", old: 5.3 });
        let out = agg.apply(
            "g1",
            &ChangelogEvent::Delete {
                key: "s2",
                old: 2.1,
            },
        );
        assert_eq!(out.value, 0.0, "empty group must report exactly zero");
        assert_eq!(out.count, 0);
    }

    #[test]
    fn one_result_per_input_event_carries_the_final_value() {
        // An update never exposes the intermediate post-subtract value.
        let mut agg = Sum::new();
        agg.apply("g1", &ChangelogEvent::Insert { key: "s1", new: 5.0 });
        let out = agg.apply(
            "g1",
            &ChangelogEvent::Update {
                key: "s1",
                old: 5.0,
                new: 9.0,
            },
        );
        assert_eq!(out.value, 9.0);
    }
}
