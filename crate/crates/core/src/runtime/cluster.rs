//! The simulated cluster: instances, assignment, offsets and processing.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hierarchy::{HierarchyError, MembershipTable};
use crate::model::{Id, Partitioner};
use crate::topology::{
    convert_result, AggregationResult, GroupStageState, InputStageState, Measurement,
    PairStageState,
};

use super::log::PartitionedLog;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("instance list must not be empty")]
    EmptyInstanceList,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot stop {requested} instances, only {running} running")]
    StopCountExceedsRunning { requested: usize, running: usize },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Simulation parameters. Together with the membership table they fully
/// determine a run: identical configs produce bit-identical metrics.
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub num_partitions: usize,
    /// Per-instance capacity in source records per simulated second: how many
    /// external input records an instance can carry through the whole
    /// pipeline per second. Internal repartition and feedback hops ride along
    /// with the source record that caused them.
    pub capacities: Vec<f64>,
    /// Seed for the partitioning hash.
    pub seed: u64,
    pub tick_ms: u64,
    pub commit_interval_ms: u64,
    /// Processing pause for partitions whose owner changes in a rebalance.
    pub rebalance_pause_ms: u64,
}

impl ClusterConfig {
    pub fn new(num_partitions: usize, capacities: Vec<f64>, seed: u64) -> Self {
        ClusterConfig {
            num_partitions,
            capacities,
            seed,
            tick_ms: 100,
            commit_interval_ms: 1000,
            rebalance_pause_ms: 1000,
        }
    }

    fn validate(&self) -> Result<(), RuntimeError> {
        if self.capacities.is_empty() {
            return Err(RuntimeError::EmptyInstanceList);
        }
        if self.num_partitions < 1 {
            return Err(RuntimeError::InvalidConfig(
                "need at least one partition".into(),
            ));
        }
        if self.tick_ms == 0 || 1000 % self.tick_ms != 0 {
            return Err(RuntimeError::InvalidConfig(format!(
                "tick_ms must divide 1000, got {}",
                self.tick_ms
            )));
        }
        if self.commit_interval_ms == 0 || self.commit_interval_ms % self.tick_ms != 0 {
            return Err(RuntimeError::InvalidConfig(format!(
                "commit_interval_ms ({}) must be a positive multiple of tick_ms ({})",
                self.commit_interval_ms, self.tick_ms
            )));
        }
        if self.capacities.iter().any(|c| *c <= 0.0 || !c.is_finite()) {
            return Err(RuntimeError::InvalidConfig(
                "capacities must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceState {
    Running,
    Stopped,
}

/// A simulated worker instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: usize,
    pub capacity: f64,
    pub state: InstanceState,
    owned: Vec<usize>,
    budget_carry: f64,
    /// Round-robin position over `owned`, persisted across ticks so service
    /// stays fair when the per-tick budget is smaller than the partition
    /// count.
    rr_cursor: usize,
}

impl Instance {
    pub fn owned_partitions(&self) -> &[usize] {
        &self.owned
    }

    pub fn is_running(&self) -> bool {
        self.state == InstanceState::Running
    }
}

/// The two consumed topics. The output stream is not consumed by the
/// cluster; results leave through [`TickMetrics::results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topic {
    Measurements,
    Feedback,
}

const TOPICS: [Topic; 2] = [Topic::Measurements, Topic::Feedback];

/// Consumer-side offsets of one (topic, partition).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionCursor {
    /// Offset up to which processing is durable; redelivery restarts here.
    pub committed: u64,
    /// Next offset the current owner will read.
    pub next_read: u64,
    /// Highest offset ever read; the unique-consumption watermark.
    pub max_read: u64,
}

/// Latency between source record generation and emission of the aggregation
/// result it triggered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    /// Simulated seconds since start at emission time.
    pub t: f64,
    /// Milliseconds from generation to emission; never negative.
    pub latency_ms: f64,
}

/// What one `advance` call observed.
#[derive(Debug, Clone, Default)]
pub struct TickMetrics {
    /// Source records appended since the previous advance.
    pub records_in: u64,
    /// Source records consumed for the first time (unique offsets).
    pub records_out: u64,
    pub latency: Vec<LatencySample>,
    /// Aggregation results emitted during the tick, in emission order.
    pub results: Vec<AggregationResult>,
    pub running_instances: usize,
}

/// The simulated execution fabric: partitioned logs, worker instances, the
/// partition assignment and the partition-local topology state slices.
pub struct Cluster {
    config: ClusterConfig,
    partitioner: Partitioner,
    clock_ms: u64,
    instances: Vec<Instance>,
    assignment: BTreeMap<usize, usize>,
    measurements: PartitionedLog<Measurement>,
    feedback: PartitionedLog<Measurement>,
    /// Cursors indexed `[topic][partition]`.
    cursors: [Vec<PartitionCursor>; 2],
    paused_until: Vec<u64>,
    input_slices: Vec<InputStageState>,
    pair_slices: Vec<PairStageState>,
    group_slices: Vec<GroupStageState>,
    appended_since_advance: u64,
    total_generated: u64,
    total_results: u64,
}

impl Cluster {
    /// Creates logs and instances, loads the (pre-validated) membership table
    /// into partition-local slices and assigns partitions by the range rule.
    pub fn new(config: ClusterConfig, membership: &MembershipTable) -> Result<Self, RuntimeError> {
        config.validate()?;
        membership.validate()?;
        let partitioner = Partitioner::new(config.seed, config.num_partitions);

        let mut slices: Vec<MembershipTable> = vec![MembershipTable::new(); config.num_partitions];
        let mut entries: Vec<BTreeMap<Id, std::collections::BTreeSet<Id>>> =
            vec![BTreeMap::new(); config.num_partitions];
        for (child, parents) in membership.entries() {
            entries[partitioner.partition_id(child)].insert(child.clone(), parents.clone());
        }
        for (slice, slice_entries) in slices.iter_mut().zip(entries) {
            *slice = MembershipTable::from_entries_unchecked(slice_entries);
        }

        let instances = config
            .capacities
            .iter()
            .enumerate()
            .map(|(id, &capacity)| Instance {
                id,
                capacity,
                state: InstanceState::Running,
                owned: Vec::new(),
                budget_carry: 0.0,
                rr_cursor: 0,
            })
            .collect();

        let mut cluster = Cluster {
            partitioner,
            clock_ms: 0,
            instances,
            assignment: BTreeMap::new(),
            measurements: PartitionedLog::new("measurements", config.num_partitions),
            feedback: PartitionedLog::new("feedback", config.num_partitions),
            cursors: [
                vec![PartitionCursor::default(); config.num_partitions],
                vec![PartitionCursor::default(); config.num_partitions],
            ],
            paused_until: vec![0; config.num_partitions],
            input_slices: slices.into_iter().map(InputStageState::new).collect(),
            pair_slices: (0..config.num_partitions)
                .map(|_| PairStageState::new())
                .collect(),
            group_slices: (0..config.num_partitions)
                .map(|_| GroupStageState::new())
                .collect(),
            appended_since_advance: 0,
            total_generated: 0,
            total_results: 0,
            config,
        };
        cluster.rebalance();
        // Initial assignment is not a move; nothing starts paused.
        cluster.paused_until.fill(0);
        Ok(cluster)
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn running_instances(&self) -> usize {
        self.instances.iter().filter(|i| i.is_running()).count()
    }

    /// Current partition → instance assignment.
    pub fn assignment(&self) -> &BTreeMap<usize, usize> {
        &self.assignment
    }

    pub fn cursor(&self, topic: Topic, partition: usize) -> PartitionCursor {
        self.cursors[topic_index(topic)][partition]
    }

    pub fn high_water_mark(&self, topic: Topic, partition: usize) -> u64 {
        match topic {
            Topic::Measurements => self.measurements.high_water_mark(partition),
            Topic::Feedback => self.feedback.high_water_mark(partition),
        }
    }

    pub fn total_generated(&self) -> u64 {
        self.total_generated
    }

    pub fn total_results(&self) -> u64 {
        self.total_results
    }

    pub fn late_rejected(&self) -> u64 {
        self.input_slices.iter().map(|s| s.late_rejected).sum()
    }

    /// Merged view of all group aggregates: group → (sum, count).
    pub fn aggregates(&self) -> BTreeMap<Id, (f64, u64)> {
        let mut out = BTreeMap::new();
        for slice in &self.group_slices {
            for (group, sum, count) in slice.aggregates() {
                out.insert(group.clone(), (sum, count));
            }
        }
        out
    }

    /// Appends an external measurement to its partition of the input topic.
    pub fn append_measurement(&mut self, measurement: Measurement) {
        debug_assert!(measurement.timestamp >= 0);
        let partition = self.partitioner.partition_id(&measurement.sensor);
        self.measurements.append(partition, measurement);
        self.appended_since_advance += 1;
        self.total_generated += 1;
    }

    /// Reassigns partitions contiguously (range assignment) across running
    /// instances in id order; owned counts differ by at most one. Moved
    /// partitions pause for the configured delay; when the previous owner is
    /// still running it commits its progress on handoff, otherwise the new
    /// owner resumes from the last committed offset.
    pub fn rebalance(&mut self) {
        let running: Vec<usize> = self
            .instances
            .iter()
            .filter(|i| i.is_running())
            .map(|i| i.id)
            .collect();
        for instance in &mut self.instances {
            instance.owned.clear();
        }
        if running.is_empty() {
            // Processing halts; lag grows until instances return.
            self.assignment.clear();
            return;
        }

        let partitions = self.config.num_partitions;
        let chunk = partitions / running.len();
        let extra = partitions % running.len();
        let mut new_assignment = BTreeMap::new();
        let mut next_partition = 0usize;
        for (rank, &id) in running.iter().enumerate() {
            let span = chunk + usize::from(rank < extra);
            for partition in next_partition..next_partition + span {
                new_assignment.insert(partition, id);
            }
            next_partition += span;
        }

        for (&partition, &new_owner) in &new_assignment {
            let old_owner = self.assignment.get(&partition).copied();
            if old_owner != Some(new_owner) {
                if let Some(old) = old_owner {
                    if self.instances[old].is_running() {
                        // Graceful handoff: commit progress before moving.
                        for topic in TOPICS {
                            let cursor = &mut self.cursors[topic_index(topic)][partition];
                            cursor.committed = cursor.next_read;
                        }
                    }
                }
                // New owners resume from the committed offset.
                for topic in TOPICS {
                    let cursor = &mut self.cursors[topic_index(topic)][partition];
                    cursor.next_read = cursor.committed;
                }
                self.paused_until[partition] = self.clock_ms + self.config.rebalance_pause_ms;
            }
        }

        self.assignment = new_assignment;
        for (&partition, &owner) in &self.assignment {
            self.instances[owner].owned.push(partition);
        }
    }

    /// Stops the `count` highest-id running instances. Their uncommitted
    /// in-flight records become redeliverable and a rebalance redistributes
    /// their partitions to the survivors.
    pub fn fail_instances(&mut self, count: usize) -> Result<(), RuntimeError> {
        let running = self.running_instances();
        if count > running {
            return Err(RuntimeError::StopCountExceedsRunning {
                requested: count,
                running,
            });
        }
        if count == 0 {
            return Ok(());
        }
        let victims: Vec<usize> = self
            .instances
            .iter()
            .filter(|i| i.is_running())
            .map(|i| i.id)
            .rev()
            .take(count)
            .collect();
        for id in victims {
            let owned = std::mem::take(&mut self.instances[id].owned);
            self.instances[id].state = InstanceState::Stopped;
            self.instances[id].budget_carry = 0.0;
            // A stop is a crash: nothing is committed on the way out.
            for partition in owned {
                for topic in TOPICS {
                    let cursor = &mut self.cursors[topic_index(topic)][partition];
                    cursor.next_read = cursor.committed;
                }
            }
        }
        self.rebalance();
        Ok(())
    }

    /// Restarts all stopped instances and rebalances.
    pub fn recover_all(&mut self) {
        for instance in &mut self.instances {
            if instance.state == InstanceState::Stopped {
                instance.state = InstanceState::Running;
                instance.budget_carry = 0.0;
            }
        }
        self.rebalance();
    }

    /// Advances the virtual clock by `dt_ms` and processes records.
    ///
    /// Every running instance first drains the feedback available in its
    /// partitions at tick start, then consumes up to `capacity * dt / 1000`
    /// source records (plus fractional budget carried while backlogged) in
    /// offset order, round-robin across its partitions. Offsets are committed
    /// on every commit-interval boundary and committed prefixes pruned.
    pub fn advance(&mut self, dt_ms: u64) -> TickMetrics {
        assert!(dt_ms > 0, "advance requires dt > 0");
        let tick_start = self.clock_ms;
        let tick_end = tick_start + dt_ms;

        let meas_hwm: Vec<u64> = (0..self.config.num_partitions)
            .map(|p| self.measurements.high_water_mark(p))
            .collect();
        let feedback_hwm: Vec<u64> = (0..self.config.num_partitions)
            .map(|p| self.feedback.high_water_mark(p))
            .collect();

        let mut metrics = TickMetrics {
            records_in: std::mem::take(&mut self.appended_since_advance),
            ..TickMetrics::default()
        };

        for index in 0..self.instances.len() {
            if !self.instances[index].is_running() {
                continue;
            }

            // Feedback records ride along with the source records that caused
            // them; consuming them costs no separate budget.
            for oi in 0..self.instances[index].owned.len() {
                let partition = self.instances[index].owned[oi];
                if self.paused_until[partition] > tick_start {
                    continue;
                }
                loop {
                    let cursor = self.cursors[topic_index(Topic::Feedback)][partition];
                    if cursor.next_read >= feedback_hwm[partition] {
                        break;
                    }
                    let record = self
                        .feedback
                        .get(partition, cursor.next_read)
                        .expect("offset below high water mark and not pruned")
                        .clone();
                    {
                        let cursor =
                            &mut self.cursors[topic_index(Topic::Feedback)][partition];
                        cursor.next_read += 1;
                        cursor.max_read = cursor.max_read.max(cursor.next_read);
                    }
                    self.process_merged(&record, false, tick_end, &mut metrics);
                }
            }

            // Source records, throttled by capacity. Partitions are served
            // round-robin from a cursor that survives tick boundaries.
            let instance = &self.instances[index];
            let owned_len = instance.owned.len();
            let mut budget = instance.budget_carry + instance.capacity * dt_ms as f64 / 1000.0;
            let mut idle_rounds = 0usize;
            while budget >= 1.0 && owned_len > 0 && idle_rounds < owned_len {
                let oi = self.instances[index].rr_cursor % owned_len;
                self.instances[index].rr_cursor = (oi + 1) % owned_len;
                let partition = self.instances[index].owned[oi];
                if self.paused_until[partition] > tick_start {
                    idle_rounds += 1;
                    continue;
                }
                let cursor = self.cursors[topic_index(Topic::Measurements)][partition];
                if cursor.next_read >= meas_hwm[partition] {
                    idle_rounds += 1;
                    continue;
                }
                idle_rounds = 0;
                let record = self
                    .measurements
                    .get(partition, cursor.next_read)
                    .expect("offset below high water mark and not pruned")
                    .clone();
                {
                    let cursor = &mut self.cursors[topic_index(Topic::Measurements)][partition];
                    cursor.next_read += 1;
                    if cursor.next_read > cursor.max_read {
                        cursor.max_read = cursor.next_read;
                        metrics.records_out += 1;
                    }
                }
                budget -= 1.0;
                self.process_merged(&record, true, tick_end, &mut metrics);
            }
            let consumable_backlog = self.instances[index].owned.iter().any(|&p| {
                self.paused_until[p] <= tick_start
                    && self.cursors[topic_index(Topic::Measurements)][p].next_read < meas_hwm[p]
            });
            // Unused capacity evaporates when idle; only fractional budget in
            // front of a backlog carries over.
            self.instances[index].budget_carry = if consumable_backlog { budget } else { 0.0 };
        }

        self.clock_ms = tick_end;
        if self.clock_ms.is_multiple_of(self.config.commit_interval_ms) {
            self.commit_owned();
        }
        metrics.running_instances = self.running_instances();
        metrics
    }

    /// One merged-stream record enters the input stage of its partition and
    /// cascades through the pair and group stages of whichever partitions its
    /// derived records hash to. Results are appended to the feedback topic of
    /// the group's partition.
    fn process_merged(
        &mut self,
        measurement: &Measurement,
        external: bool,
        emission_ms: u64,
        metrics: &mut TickMetrics,
    ) {
        let partition = self.partitioner.partition_id(&measurement.sensor);
        let pairs = self.input_slices[partition].handle_measurement(
            measurement,
            external,
            measurement.timestamp,
        );
        for pair_record in pairs {
            let pair_partition = self.partitioner.partition(&pair_record.key);
            let Some(update) = self.pair_slices[pair_partition].handle_pair_record(&pair_record)
            else {
                continue;
            };
            let group_partition = self.partitioner.partition_id(&update.group);
            let result = self.group_slices[group_partition].handle_group_update(&update);
            self.total_results += 1;
            metrics.latency.push(LatencySample {
                t: emission_ms as f64 / 1000.0,
                latency_ms: (emission_ms as i64 - result.timestamp).max(0) as f64,
            });
            self.feedback
                .append(group_partition, convert_result(&result));
            metrics.results.push(result);
        }
    }

    fn commit_owned(&mut self) {
        for instance in &self.instances {
            if !instance.is_running() {
                continue;
            }
            for &partition in &instance.owned {
                for topic in TOPICS {
                    let cursor = &mut self.cursors[topic_index(topic)][partition];
                    cursor.committed = cursor.next_read;
                }
                self.measurements
                    .prune_to(partition, self.cursors[0][partition].committed);
                self.feedback
                    .prune_to(partition, self.cursors[1][partition].committed);
            }
        }
    }

    /// Commits everything owned by running instances, regardless of the
    /// commit interval. Called once at the end of a run.
    pub fn final_commit(&mut self) {
        self.commit_owned();
    }

    /// True when every record of every topic has been consumed.
    pub fn drained(&self) -> bool {
        (0..self.config.num_partitions).all(|p| {
            self.cursors[0][p].next_read == self.measurements.high_water_mark(p)
                && self.cursors[1][p].next_read == self.feedback.high_water_mark(p)
        })
    }
}

fn topic_index(topic: Topic) -> usize {
    match topic {
        Topic::Measurements => 0,
        Topic::Feedback => 1,
    }
}
