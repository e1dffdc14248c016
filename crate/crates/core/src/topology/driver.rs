//! Single-process topology driver.
//!
//! Runs the whole pipeline in memory with one partition, draining all
//! internal records (including feedback) after every input event. The
//! partitioned simulation runtime wires the same stage functions across
//! partitions instead.

use std::collections::VecDeque;

use crate::hierarchy::{MembershipEvent, MembershipTable};
use crate::model::{Id, Record};

use super::stages::{
    convert_result, GroupStageState, InputStageState, PairStageState, PairValue,
};
use super::types::{AggregateKind, AggregationResult, Measurement, TopologyError};

/// Driver configuration.
#[derive(Debug, Clone)]
pub struct TopologyConfig {
    pub aggregate: AggregateKind,
    /// Upper bound on internal records processed per input event. A cascade
    /// longer than this indicates a membership cycle that slipped past
    /// validation; the driver aborts with a diagnostic instead of looping.
    pub feedback_bound: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            aggregate: AggregateKind::Sum,
            feedback_bound: 1_000_000,
        }
    }
}

/// An input event for [`Topology::process_to_quiescence`].
#[derive(Debug, Clone, PartialEq)]
pub enum InputRecord {
    Measurement(Measurement),
    Membership(MembershipEvent),
}

/// Everything a finished run exposes: the emitted results in emission order
/// and the rejection counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub outputs: Vec<AggregationResult>,
    pub late_rejected: u64,
    pub cycle_rejected: u64,
    /// Feedback records processed over the run.
    pub feedback_processed: u64,
}

/// The executable dataflow: all three stage states plus the feedback loop.
pub struct Topology {
    config: TopologyConfig,
    input: InputStageState,
    pairs: PairStageState,
    groups: GroupStageState,
    cycle_rejected: u64,
    feedback_processed: u64,
}

/// Builds the executable dataflow for the selected aggregate function over an
/// initially empty membership table.
pub fn build_topology(config: TopologyConfig) -> Result<Topology, TopologyError> {
    Topology::new(config, MembershipTable::new())
}

impl Topology {
    pub fn new(config: TopologyConfig, membership: MembershipTable) -> Result<Self, TopologyError> {
        membership.validate()?;
        let AggregateKind::Sum = config.aggregate;
        Ok(Topology {
            config,
            input: InputStageState::new(membership),
            pairs: PairStageState::new(),
            groups: GroupStageState::new(),
            cycle_rejected: 0,
            feedback_processed: 0,
        })
    }

    pub fn membership(&self) -> &MembershipTable {
        &self.input.membership
    }

    pub fn input_stage(&self) -> &InputStageState {
        &self.input
    }

    pub fn pair_stage(&self) -> &PairStageState {
        &self.pairs
    }

    pub fn group_stage(&self) -> &GroupStageState {
        &self.groups
    }

    pub fn late_rejected(&self) -> u64 {
        self.input.late_rejected
    }

    pub fn cycle_rejected(&self) -> u64 {
        self.cycle_rejected
    }

    /// Processes one external measurement and drains the cascade it causes,
    /// returning every aggregation result emitted, in emission order.
    pub fn handle_measurement(
        &mut self,
        measurement: &Measurement,
    ) -> Result<Vec<AggregationResult>, TopologyError> {
        let pairs = self
            .input
            .handle_measurement(measurement, true, measurement.timestamp);
        self.drain(pairs)
    }

    /// Applies a membership change and drains the cascade. Cycle-creating
    /// events are rejected without touching any state; the rejection is
    /// counted and reported as an error.
    pub fn handle_membership_event(
        &mut self,
        event: &MembershipEvent,
    ) -> Result<Vec<AggregationResult>, TopologyError> {
        if let Err(err) = self.input.membership.apply_event(event) {
            self.cycle_rejected += 1;
            return Err(err.into());
        }
        let pairs = self
            .input
            .handle_membership_change(&event.child, event.timestamp);
        self.drain(pairs)
    }

    /// Drives a whole event sequence to quiescence: after every input event
    /// all queues, including feedback records, are drained. Rejected events
    /// (late measurements, cycle-creating membership changes) are counted and
    /// skipped.
    pub fn process_to_quiescence(
        &mut self,
        events: impl IntoIterator<Item = InputRecord>,
    ) -> Result<RunLog, TopologyError> {
        let mut log = RunLog::default();
        for event in events {
            let outputs = match event {
                InputRecord::Measurement(m) => self.handle_measurement(&m)?,
                InputRecord::Membership(ev) => match self.handle_membership_event(&ev) {
                    Ok(outputs) => outputs,
                    Err(TopologyError::Hierarchy(_)) => Vec::new(),
                    Err(fatal) => return Err(fatal),
                },
            };
            log.outputs.extend(outputs);
        }
        log.late_rejected = self.input.late_rejected;
        log.cycle_rejected = self.cycle_rejected;
        log.feedback_processed = self.feedback_processed;
        Ok(log)
    }

    /// Final (sum, count) per group.
    pub fn aggregates(&self) -> impl Iterator<Item = (&Id, f64, u64)> {
        self.groups.aggregates()
    }

    fn drain(
        &mut self,
        seed: Vec<Record<PairValue>>,
    ) -> Result<Vec<AggregationResult>, TopologyError> {
        enum Work {
            Pair(Record<PairValue>),
            Feedback(Measurement),
        }
        let mut queue: VecDeque<Work> = seed.into_iter().map(Work::Pair).collect();
        let mut outputs = Vec::new();
        let mut processed = 0usize;
        while let Some(item) = queue.pop_front() {
            processed += 1;
            if processed > self.config.feedback_bound {
                return Err(TopologyError::FeedbackBoundExceeded {
                    processed,
                    bound: self.config.feedback_bound,
                });
            }
            match item {
                Work::Pair(record) => {
                    if let Some(update) = self.pairs.handle_pair_record(&record) {
                        let result = self.groups.handle_group_update(&update);
                        queue.push_back(Work::Feedback(convert_result(&result)));
                        outputs.push(result);
                    }
                }
                Work::Feedback(measurement) => {
                    self.feedback_processed += 1;
                    let pairs =
                        self.input
                            .handle_measurement(&measurement, false, measurement.timestamp);
                    queue.extend(pairs.into_iter().map(Work::Pair));
                }
            }
        }
        Ok(outputs)
    }
}

/// Static description of the dataflow: the seven processing stages and the
/// edges between them, including the feedback edge from output back to merge.
#[derive(Debug, Clone)]
pub struct StageGraph {
    pub stages: Vec<&'static str>,
    /// Directed edges as (from, to) indices into `stages`.
    pub edges: Vec<(usize, usize)>,
    /// Index into `edges` of the feedback edge.
    pub feedback_edge: usize,
}

impl StageGraph {
    pub fn is_acyclic(&self) -> bool {
        self.is_acyclic_without(usize::MAX)
    }

    /// Cycle check with one edge excluded (pass `usize::MAX` to keep all).
    pub fn is_acyclic_without(&self, skip_edge: usize) -> bool {
        let n = self.stages.len();
        let mut adjacency = vec![Vec::new(); n];
        for (index, (from, to)) in self.edges.iter().enumerate() {
            if index != skip_edge {
                adjacency[*from].push(*to);
            }
        }
        // Kahn's algorithm: the graph is acyclic iff every node drains.
        let mut indegree = vec![0usize; n];
        for targets in &adjacency {
            for &t in targets {
                indegree[t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut drained = 0;
        while let Some(node) = ready.pop() {
            drained += 1;
            for &t in &adjacency[node] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(t);
                }
            }
        }
        drained == n
    }
}

impl Topology {
    /// The stage graph of this topology. Independent of the membership
    /// contents; the dataflow shape is fixed.
    pub fn stage_graph() -> StageGraph {
        let stages = vec![
            "sources",
            "merge",
            "join",
            "duplicate",
            "last_value",
            "aggregate",
            "output",
        ];
        let edges = vec![
            (0, 1), // measurement stream and membership table into merge
            (1, 2), // merged stream into the join
            (2, 3), // join results into duplication
            (3, 4), // duplicated records into the last-value table
            (4, 5), // last-value changelog into the group aggregate
            (5, 6), // aggregation results onto the output stream
            (6, 1), // feedback: converted results re-enter the merge
        ];
        StageGraph {
            stages,
            edges,
            feedback_edge: 6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    fn membership(entries: &[(&str, &[&str])]) -> MembershipTable {
        let mut table = MembershipTable::new();
        for (child, parents) in entries {
            table
                .apply_event(&MembershipEvent {
                    child: (*child).to_owned(),
                    parents: parents.iter().map(|p| (*p).to_owned()).collect(),
                    timestamp: 0,
                })
                .unwrap();
        }
        table
    }

    fn topology(entries: &[(&str, &[&str])]) -> Topology {
        Topology::new(TopologyConfig::default(), membership(entries)).unwrap()
    }

    fn meas(sensor: &str, value: f64, ts: i64) -> Measurement {
        Measurement::new(sensor, value, ts)
    }

    #[test]
    fn stage_graph_has_seven_stages_and_exactly_the_feedback_cycle() {
        let graph = Topology::stage_graph();
        assert_eq!(graph.stages.len(), 7);
        assert!(!graph.is_acyclic(), "the feedback edge closes a cycle");
        assert!(
            graph.is_acyclic_without(graph.feedback_edge),
            "removing the feedback edge must break the only cycle"
        );
        // The single cycle runs merge -> ... -> output -> merge: removing any
        // edge on it breaks the cycle, and only the source edge is off it.
        for edge in 0..graph.edges.len() {
            let on_cycle = graph.is_acyclic_without(edge);
            assert_eq!(
                on_cycle,
                edge != 0,
                "unexpected cycle membership for edge {edge}"
            );
        }
    }

    #[test]
    fn no_memberships_means_no_outputs() {
        let mut t = topology(&[]);
        let out = t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn no_measurements_means_no_outputs() {
        let mut t = topology(&[("s1", &["g1"])]);
        let log = t.process_to_quiescence(std::iter::empty()).unwrap();
        assert!(log.outputs.is_empty());
    }

    #[test]
    fn flat_group_sums_its_sensors() {
        let mut t = topology(&[("s1", &["g1"]), ("s2", &["g1"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        let out = t.handle_measurement(&meas("s2", 7.0, 2)).unwrap();
        assert!(out
            .iter()
            .any(|r| r.group == "g1" && r.sum == 12.0 && r.count == 2));
    }

    #[test]
    fn two_level_tree_folds_to_the_root() {
        // Fan-out 2, depth 2: leaves 1, 2 under a; 3, 4 under b; a, b under root.
        let mut t = topology(&[
            ("l1", &["a"]),
            ("l2", &["a"]),
            ("l3", &["b"]),
            ("l4", &["b"]),
            ("a", &["root"]),
            ("b", &["root"]),
        ]);
        let events = [
            meas("l1", 1.0, 1),
            meas("l2", 2.0, 2),
            meas("l3", 3.0, 3),
            meas("l4", 4.0, 4),
        ];
        for m in &events {
            t.handle_measurement(m).unwrap();
        }
        let aggregates: BTreeMap<&str, (f64, u64)> = t
            .aggregates()
            .map(|(g, sum, count)| (g.as_str(), (sum, count)))
            .collect();
        // Brute-force fold of the tree: a = 1 + 2, b = 3 + 4, root = a + b.
        assert_eq!(aggregates["a"], (3.0, 2));
        assert_eq!(aggregates["b"], (7.0, 2));
        assert_eq!(aggregates["root"], (10.0, 2));
    }

    #[test]
    fn feedback_converts_and_re_aggregates_one_level_up() {
        let mut t = topology(&[("g1", &["G"]), ("g2", &["G"]), ("s1", &["g1"]), ("s2", &["g2"])]);
        t.handle_measurement(&meas("s1", 14.0, 1)).unwrap();
        let out = t.handle_measurement(&meas("s2", 6.0, 2)).unwrap();
        let root = out.iter().rfind(|r| r.group == "G").unwrap();
        assert_eq!(root.sum, 20.0);
    }

    #[test]
    fn warm_up_yields_partial_sums_until_all_members_reported() {
        let mut t = topology(&[("s1", &["g1"]), ("s2", &["g1"]), ("s3", &["g1"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        let out = t.handle_measurement(&meas("s2", 7.0, 2)).unwrap();
        let last = out.iter().rfind(|r| r.group == "g1").unwrap();
        assert_eq!(last.sum, 12.0, "two of three members reported: partial sum");
        assert_eq!(last.count, 2);
    }

    #[test]
    fn revoking_a_membership_removes_the_contribution() {
        let mut t = topology(&[("s1", &["g1"]), ("s2", &["g1"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        t.handle_measurement(&meas("s2", 7.0, 2)).unwrap();
        let out = t
            .handle_membership_event(&MembershipEvent {
                child: "s1".to_owned(),
                parents: BTreeSet::new(),
                timestamp: 3,
            })
            .unwrap();
        let last = out.iter().rfind(|r| r.group == "g1").unwrap();
        assert_eq!(last.sum, 7.0);
        assert_eq!(last.count, 1);
    }

    #[test]
    fn granting_a_membership_uses_the_stored_measurement() {
        let mut t = topology(&[("s1", &["g1"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        t.handle_measurement(&meas("s2", 9.0, 2)).unwrap();
        // s2 joins g1 without sending a new measurement.
        let out = t
            .handle_membership_event(&MembershipEvent {
                child: "s2".to_owned(),
                parents: std::iter::once("g1".to_owned()).collect(),
                timestamp: 3,
            })
            .unwrap();
        let last = out.iter().rfind(|r| r.group == "g1").unwrap();
        assert_eq!(last.sum, 14.0);
        assert_eq!(last.count, 2);
    }

    #[test]
    fn emptied_group_emits_a_final_zero_and_is_retained() {
        let mut t = topology(&[("s1", &["g1"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        let out = t
            .handle_membership_event(&MembershipEvent {
                child: "s1".to_owned(),
                parents: BTreeSet::new(),
                timestamp: 2,
            })
            .unwrap();
        let last = out.iter().rfind(|r| r.group == "g1").unwrap();
        assert_eq!((last.sum, last.count), (0.0, 0));
        let aggregates: BTreeMap<&str, (f64, u64)> = t
            .aggregates()
            .map(|(g, sum, count)| (g.as_str(), (sum, count)))
            .collect();
        assert_eq!(aggregates.get("g1"), Some(&(0.0, 0)));
    }

    #[test]
    fn duplicate_delivery_is_idempotent() {
        let mut a = topology(&[("s1", &["g1"]), ("g1", &["G"])]);
        let mut b = topology(&[("s1", &["g1"]), ("g1", &["G"])]);
        a.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        b.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        b.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        let left: Vec<_> = a.aggregates().collect();
        let right: Vec<_> = b.aggregates().collect();
        assert_eq!(left, right);
        assert_eq!(
            a.pair_stage().last_value().entries(),
            b.pair_stage().last_value().entries()
        );
    }

    #[test]
    fn result_timestamps_follow_the_triggering_record() {
        let mut t = topology(&[("s1", &["g1"]), ("g1", &["G"])]);
        let out = t.handle_measurement(&meas("s1", 5.0, 123)).unwrap();
        assert!(out.iter().all(|r| r.timestamp == 123));
        // A membership-triggered update carries the membership event's time.
        let out = t
            .handle_membership_event(&MembershipEvent {
                child: "s1".to_owned(),
                parents: BTreeSet::new(),
                timestamp: 456,
            })
            .unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|r| r.timestamp == 456));
    }

    #[test]
    fn single_measurement_triggers_at_most_depth_feedback_traversals() {
        // Chain hierarchy of depth 4: s -> c1 -> c2 -> c3 -> c4.
        let mut t = topology(&[
            ("s", &["c1"]),
            ("c1", &["c2"]),
            ("c2", &["c3"]),
            ("c3", &["c4"]),
        ]);
        let log = t
            .process_to_quiescence([InputRecord::Measurement(meas("s", 1.0, 1))])
            .unwrap();
        assert_eq!(log.outputs.len(), 4, "one result per level");
        assert!(
            log.feedback_processed <= 4,
            "depth-4 chain may traverse the feedback edge at most 4 times, saw {}",
            log.feedback_processed
        );
    }

    #[test]
    fn cycle_that_slipped_past_validation_hits_the_feedback_bound() {
        let mut entries = BTreeMap::new();
        entries.insert("g1".to_owned(), std::iter::once("g2".to_owned()).collect());
        entries.insert("g2".to_owned(), std::iter::once("g1".to_owned()).collect());
        let broken = MembershipTable::from_entries_unchecked(entries);
        let mut t = Topology {
            config: TopologyConfig {
                aggregate: AggregateKind::Sum,
                feedback_bound: 1000,
            },
            input: InputStageState::new(broken),
            pairs: PairStageState::new(),
            groups: GroupStageState::new(),
            cycle_rejected: 0,
            feedback_processed: 0,
        };
        let err = t.handle_measurement(&meas("g1", 1.0, 1)).unwrap_err();
        assert!(matches!(err, TopologyError::FeedbackBoundExceeded { .. }));
    }

    #[test]
    fn cycle_creating_membership_events_are_rejected_and_counted() {
        let mut t = topology(&[("g1", &["g2"])]);
        let err = t.handle_membership_event(&MembershipEvent {
            child: "g2".to_owned(),
            parents: std::iter::once("g1".to_owned()).collect(),
            timestamp: 1,
        });
        assert!(err.is_err());
        assert_eq!(t.cycle_rejected(), 1);
        assert!(!t.membership().contains_child("g2"));
    }

    /// Random event soup on a small universe; values produced by `value_of`.
    fn run_random_events(seed: u64, value_of: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64) -> Topology {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sensors: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let groups: Vec<String> = (0..4).map(|i| format!("g{i}")).collect();
        let mut t = Topology::new(TopologyConfig::default(), MembershipTable::new()).unwrap();
        for step in 0..400i64 {
            if rng.random_range(0..100) < 70 {
                let sensor = sensors[rng.random_range(0..sensors.len())].clone();
                let value = value_of(&mut rng);
                let _ = t.handle_measurement(&meas(&sensor, value, step));
            } else {
                // Children may be sensors or groups; group children only
                // attach to lower-index groups, keeping the graph acyclic.
                let (child, allowed): (String, &[String]) = if rng.random_range(0..100) < 60 {
                    (sensors[rng.random_range(0..sensors.len())].clone(), &groups)
                } else {
                    let g = rng.random_range(0..groups.len());
                    (groups[g].clone(), &groups[..g])
                };
                let mut parents = BTreeSet::new();
                for _ in 0..rng.random_range(0..=2usize.min(allowed.len())) {
                    parents.insert(allowed[rng.random_range(0..allowed.len())].clone());
                }
                let _ = t.handle_membership_event(&MembershipEvent {
                    child,
                    parents,
                    timestamp: step,
                });
            }
        }
        t
    }

    // After any event sequence, every group aggregate equals the fold of the
    // live last-value entries for that group, recomputed independently.
    #[test]
    fn aggregate_equals_fold_over_last_value_entries() {
        use rand::Rng;
        // Integer payloads: exact equality.
        let t = run_random_events(41, |rng| f64::from(rng.random_range(0..100)));
        for (group, sum, count) in t.aggregates() {
            let entries: Vec<f64> = t
                .pair_stage()
                .last_value()
                .entries()
                .iter()
                .filter(|((_, g), _)| g == group)
                .map(|(_, m)| m.value)
                .collect();
            assert_eq!(count as usize, entries.len(), "count mirrors the table");
            assert_eq!(sum, entries.iter().sum::<f64>(), "integer sums are exact");
        }
        // Floating point payloads: relative 1e-9.
        let t = run_random_events(42, |rng| rng.random_range(0.0..100.0));
        for (group, sum, count) in t.aggregates() {
            let entries: Vec<f64> = t
                .pair_stage()
                .last_value()
                .entries()
                .iter()
                .filter(|((_, g), _)| g == group)
                .map(|(_, m)| m.value)
                .collect();
            let fold: f64 = entries.iter().sum();
            assert_eq!(count as usize, entries.len());
            assert!(
                (sum - fold).abs() <= 1e-9 * fold.abs().max(1.0),
                "group {group}: aggregate {sum} vs fold {fold}"
            );
        }
    }

    // The live (child, group) keys equal the pairs where the child currently
    // belongs to the group and has a joined measurement.
    #[test]
    fn live_pair_keys_match_memberships_with_joined_measurements() {
        let t = run_random_events(43, |rng| {
            use rand::Rng;
            rng.random_range(0.0..100.0)
        });
        let mut expected = BTreeSet::new();
        for (child, parents) in t.membership().entries() {
            if t.input_stage().last_measurement(child).is_some() {
                for group in parents {
                    expected.insert((child.clone(), group.clone()));
                }
            }
        }
        let live: BTreeSet<(Id, Id)> = t
            .pair_stage()
            .last_value()
            .entries()
            .keys()
            .cloned()
            .collect();
        assert_eq!(live, expected);
        assert!(!live.is_empty(), "the scenario must exercise real traffic");
    }

    #[test]
    fn overlapping_hierarchies_aggregate_independently() {
        // s1 belongs to a purpose group and a location group at once.
        let mut t = topology(&[("s1", &["by_type", "by_site"]), ("s2", &["by_type"])]);
        t.handle_measurement(&meas("s1", 5.0, 1)).unwrap();
        t.handle_measurement(&meas("s2", 7.0, 2)).unwrap();
        let aggregates: BTreeMap<&str, f64> =
            t.aggregates().map(|(g, sum, _)| (g.as_str(), sum)).collect();
        assert_eq!(aggregates["by_type"], 12.0);
        assert_eq!(aggregates["by_site"], 5.0);
    }
}
