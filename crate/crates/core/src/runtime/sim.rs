//! Tick-loop driver for whole simulation runs.

use std::collections::BTreeMap;

use crate::hierarchy::MembershipTable;
use crate::model::Id;
use crate::topology::{AggregationResult, Measurement};

use super::cluster::{Cluster, ClusterConfig, RuntimeError};
use super::metrics::MetricsRow;

/// A scheduled fault action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleCommand {
    /// Stop the given number of highest-id running instances.
    Fail { count: usize },
    /// Restart every stopped instance.
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleAction {
    pub at_s: u64,
    pub command: ScheduleCommand,
}

/// A full run description: cluster configuration, hierarchy, generation
/// duration and the fault schedule.
#[derive(Debug, Clone)]
pub struct SimSpec<'a> {
    pub cluster: ClusterConfig,
    pub membership: &'a MembershipTable,
    /// Seconds during which the source closure is asked for measurements.
    pub duration_s: u64,
    pub schedule: Vec<ScheduleAction>,
    /// Keep ticking after generation stops until all logs are drained.
    pub drain: bool,
    /// Upper bound on extra drain seconds.
    pub max_drain_s: u64,
}

impl<'a> SimSpec<'a> {
    pub fn new(cluster: ClusterConfig, membership: &'a MembershipTable, duration_s: u64) -> Self {
        SimSpec {
            cluster,
            membership,
            duration_s,
            schedule: Vec::new(),
            drain: true,
            max_drain_s: 3600,
        }
    }
}

/// Outcome of a run.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub rows: Vec<MetricsRow>,
    pub total_generated: u64,
    pub total_processed: u64,
    /// Aggregation results emitted over the whole run.
    pub total_results: u64,
    pub late_rejected: u64,
    /// Final group → (sum, count) view.
    pub aggregates: BTreeMap<Id, (f64, u64)>,
    /// Whether all logs were fully consumed by the end.
    pub drained: bool,
}

/// Runs a simulation to completion.
///
/// `source(t)` must return the measurements of simulated second `t` in
/// non-decreasing timestamp order, with timestamps inside `[t, t+1)` seconds.
/// `on_result` observes every emitted aggregation result in emission order.
pub fn run_sim(
    spec: SimSpec<'_>,
    source: &mut dyn FnMut(u64) -> Vec<Measurement>,
    mut on_result: Option<&mut dyn FnMut(&AggregationResult)>,
) -> Result<SimReport, RuntimeError> {
    let mut cluster = Cluster::new(spec.cluster.clone(), spec.membership)?;
    let tick_ms = spec.cluster.tick_ms;
    let mut schedule = spec.schedule.clone();
    schedule.sort_by_key(|action| action.at_s);
    let mut next_action = 0usize;

    let mut rows = Vec::new();
    let mut second = 0u64;
    loop {
        let generating = second < spec.duration_s;
        if !generating {
            let done = !spec.drain
                || cluster.drained()
                || second >= spec.duration_s + spec.max_drain_s;
            if done {
                break;
            }
        }

        while next_action < schedule.len() && schedule[next_action].at_s == second {
            match schedule[next_action].command {
                ScheduleCommand::Fail { count } => cluster.fail_instances(count)?,
                ScheduleCommand::Recover => cluster.recover_all(),
            }
            next_action += 1;
        }

        let batch = if generating { source(second) } else { Vec::new() };
        debug_assert!(batch.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        let mut batch = batch.into_iter().peekable();

        let mut records_in = 0u64;
        let mut records_out = 0u64;
        let mut latency_sum = 0.0f64;
        let mut latency_count = 0u64;
        let mut running = cluster.running_instances();
        for tick in 0..1000 / tick_ms {
            let tick_end_ms = (second * 1000 + (tick + 1) * tick_ms) as i64;
            while batch
                .peek()
                .is_some_and(|m| m.timestamp < tick_end_ms)
            {
                cluster.append_measurement(batch.next().expect("peeked"));
            }
            let metrics = cluster.advance(tick_ms);
            records_in += metrics.records_in;
            records_out += metrics.records_out;
            for sample in &metrics.latency {
                latency_sum += sample.latency_ms;
                latency_count += 1;
            }
            if let Some(callback) = on_result.as_deref_mut() {
                for result in &metrics.results {
                    callback(result);
                }
            }
            running = metrics.running_instances;
        }
        // Anything stamped at the very end of the second belongs to the next
        // one; the workload generator never produces such records.
        debug_assert!(batch.peek().is_none(), "source produced out-of-second records");

        rows.push(MetricsRow {
            t_sec: second,
            records_in,
            records_out,
            avg_latency_ms: (latency_count > 0).then(|| latency_sum / latency_count as f64),
            running_instances: running,
        });
        second += 1;
    }

    cluster.final_commit();
    Ok(SimReport {
        total_generated: cluster.total_generated(),
        total_processed: rows.iter().map(|r| r.records_out).sum(),
        total_results: cluster.total_results(),
        late_rejected: cluster.late_rejected(),
        aggregates: cluster.aggregates(),
        drained: cluster.drained(),
        rows,
    })
}
