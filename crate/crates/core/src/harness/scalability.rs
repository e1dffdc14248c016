//! Scalability sweep: minimum sufficient instances per workload.

use std::io::Write;

use crate::runtime::{run_sim, ClusterConfig, LatencySample, SimSpec};
use crate::workload::WorkloadSpec;

use super::stats::{latency_trend, median_lower, TrendResult};
use super::HarnessError;

/// Shared per-run simulation parameters for the sweep.
#[derive(Debug, Clone)]
pub struct RunParameters {
    pub partitions: usize,
    pub capacity_per_instance: f64,
    /// Simulated seconds per trial run.
    pub duration_s: u64,
    /// Leading seconds excluded from the regression.
    pub warmup_s: u64,
    pub threshold_ms_per_s: f64,
    pub tick_ms: u64,
}

impl Default for RunParameters {
    fn default() -> Self {
        RunParameters {
            partitions: 128,
            capacity_per_instance: 5000.0,
            duration_s: 120,
            warmup_s: 60,
            threshold_ms_per_s: super::stats::DEFAULT_SLOPE_THRESHOLD_MS,
            tick_ms: 100,
        }
    }
}

/// Result of one workload's sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityResult {
    /// Input rate in records per second.
    pub workload_rps: u64,
    /// Smallest sufficient candidate per repetition; `None` when no candidate
    /// was sufficient (recorded as exceeding the maximum).
    pub required: Vec<Option<usize>>,
    /// Median over repetitions, lower of two middles; `None` when the median
    /// repetition exceeded the maximum.
    pub median: Option<usize>,
}

/// Whole-sweep configuration.
#[derive(Debug, Clone)]
pub struct ScalabilityConfig {
    pub fan_out: u32,
    pub depths: Vec<u32>,
    /// Measurements per sensor per second.
    pub rate: u32,
    pub reps: u32,
    pub max_instances: usize,
    pub base_seed: u64,
    pub run: RunParameters,
}

/// Runs one fixed-size trial and fits the latency trend over the per-second
/// average latencies after warm-up. Runs that never produce two regressable
/// seconds are insufficient by definition.
pub fn run_latency_trial(
    workload: &WorkloadSpec,
    instances: usize,
    params: &RunParameters,
    seed: u64,
) -> Result<Option<TrendResult>, HarnessError> {
    let membership = workload.hierarchy().table();
    let mut cluster = ClusterConfig::new(
        params.partitions,
        vec![params.capacity_per_instance; instances],
        seed,
    );
    cluster.tick_ms = params.tick_ms;
    let mut spec = SimSpec::new(cluster, &membership, params.duration_s);
    spec.drain = false;
    let report = run_sim(spec, &mut |t| workload.generate_tick(t), None)?;

    let samples: Vec<LatencySample> = report
        .rows
        .iter()
        .filter(|row| row.t_sec >= params.warmup_s)
        .filter_map(|row| {
            row.avg_latency_ms.map(|avg| LatencySample {
                t: row.t_sec as f64,
                latency_ms: avg,
            })
        })
        .collect();
    Ok(latency_trend(&samples, params.threshold_ms_per_s).ok())
}

/// Determines, per repetition, the smallest candidate instance count whose
/// run is sufficient, plus the median over repetitions.
///
/// Candidates must be ascending. Sufficiency is monotone in the instance
/// count under the capacity model (more instances never shrink capacity), so
/// the smallest sufficient candidate is found by binary search.
pub fn min_sufficient_instances(
    workload: &WorkloadSpec,
    candidates: &[usize],
    reps: u32,
    params: &RunParameters,
) -> Result<ScalabilityResult, HarnessError> {
    if candidates.is_empty() {
        return Err(HarnessError::InvalidConfig("no candidate counts".into()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::InvalidConfig(
            "candidates must be strictly ascending".into(),
        ));
    }
    if reps == 0 {
        return Err(HarnessError::InvalidConfig("reps must be positive".into()));
    }

    let mut required = Vec::with_capacity(reps as usize);
    for rep in 0..u64::from(reps) {
        let seed = workload.seed.wrapping_add(rep);
        let rep_workload = WorkloadSpec {
            seed,
            duration_s: params.duration_s,
            ..workload.clone()
        };
        let sufficient = |instances: usize| -> Result<bool, HarnessError> {
            Ok(run_latency_trial(&rep_workload, instances, params, seed)?
                .is_some_and(|trend| trend.sufficient))
        };
        // Binary search for the first sufficient candidate.
        let mut lo = 0usize;
        let mut hi = candidates.len();
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if sufficient(candidates[mid])? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        required.push(candidates.get(lo).copied());
    }

    let as_ord: Vec<usize> = required
        .iter()
        .map(|r| r.unwrap_or(usize::MAX))
        .collect();
    let median = median_lower(&as_ord).filter(|&m| m != usize::MAX);
    Ok(ScalabilityResult {
        workload_rps: workload.records_per_second(),
        required,
        median,
    })
}

/// Runs the full sweep: one [`ScalabilityResult`] per configured depth.
pub fn run_scalability(config: &ScalabilityConfig) -> Result<Vec<ScalabilityResult>, HarnessError> {
    if config.depths.is_empty() {
        return Err(HarnessError::InvalidConfig("no depths configured".into()));
    }
    if config.max_instances == 0 {
        return Err(HarnessError::InvalidConfig(
            "max_instances must be positive".into(),
        ));
    }
    let candidates: Vec<usize> = (1..=config.max_instances).collect();
    let mut results = Vec::with_capacity(config.depths.len());
    for &depth in &config.depths {
        let workload = WorkloadSpec::new(
            config.fan_out,
            depth,
            config.rate,
            config.run.duration_s,
            config.base_seed,
        );
        results.push(min_sufficient_instances(
            &workload,
            &candidates,
            config.reps,
            &config.run,
        )?);
    }
    Ok(results)
}

/// One row per (workload, repetition):
/// `input_rps,rep,required_instances,median_required`, with `exceeds_max`
/// marking repetitions where no candidate sufficed.
pub fn write_scalability_csv(
    results: &[ScalabilityResult],
    mut writer: impl Write,
) -> std::io::Result<()> {
    writeln!(writer, "input_rps,rep,required_instances,median_required")?;
    for result in results {
        let median = result
            .median
            .map_or_else(|| "exceeds_max".to_owned(), |m| m.to_string());
        for (rep, required) in result.required.iter().enumerate() {
            let required = required.map_or_else(|| "exceeds_max".to_owned(), |r| r.to_string());
            writeln!(
                writer,
                "{},{},{},{}",
                result.workload_rps, rep, required, median
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_params(capacity: f64) -> RunParameters {
        RunParameters {
            partitions: 16,
            capacity_per_instance: capacity,
            duration_s: 40,
            warmup_s: 10,
            tick_ms: 100,
            ..RunParameters::default()
        }
    }

    #[test]
    fn tiny_workload_far_below_capacity_needs_one_instance() {
        // 64 records/s against 5000 records/s per instance.
        let workload = WorkloadSpec::new(8, 2, 1, 40, 5);
        let result =
            min_sufficient_instances(&workload, &[1, 2, 4], 2, &quick_params(5000.0)).unwrap();
        assert_eq!(result.median, Some(1));
        assert!(result.required.iter().all(|r| *r == Some(1)));
    }

    #[test]
    fn identical_repetitions_agree_under_a_fixed_seed() {
        let workload = WorkloadSpec::new(4, 1, 4, 40, 5);
        let params = quick_params(10.0);
        let a = min_sufficient_instances(&workload, &[1, 2, 3, 4, 5, 6], 3, &params).unwrap();
        let b = min_sufficient_instances(&workload, &[1, 2, 3, 4, 5, 6], 3, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn workload_doubling_roughly_doubles_the_requirement() {
        // Fixed-seed linear-scaling check: the same 256-sensor layout at
        // rates 1, 2 and 4 records/s/sensor, so the partition load pattern
        // scales exactly with the workload.
        let params = RunParameters {
            partitions: 256,
            capacity_per_instance: 64.0,
            duration_s: 60,
            warmup_s: 15,
            tick_ms: 100,
            ..RunParameters::default()
        };
        let candidates: Vec<usize> = (1..=40).collect();
        let required = |rate: u32| {
            let workload = WorkloadSpec::new(16, 2, rate, 60, 7);
            min_sufficient_instances(&workload, &candidates, 1, &params)
                .unwrap()
                .median
                .expect("a sufficient candidate exists")
        };
        let r1 = required(1);
        let r2 = required(2);
        let r4 = required(4);
        assert!(r1 >= 2);
        assert!(
            (2 * r1).abs_diff(r2) <= 1,
            "2x workload: expected about {} instances, required {r2}",
            2 * r1
        );
        assert!(
            (4 * r1).abs_diff(r4) <= 1,
            "4x workload: expected about {} instances, required {r4}",
            4 * r1
        );
    }

    #[test]
    fn exceeding_every_candidate_is_recorded_as_a_sentinel() {
        // 256 records/s against at most two instances of 1 record/s.
        let workload = WorkloadSpec::new(8, 1, 32, 30, 5);
        let params = RunParameters {
            partitions: 8,
            capacity_per_instance: 1.0,
            duration_s: 30,
            warmup_s: 10,
            tick_ms: 100,
            ..RunParameters::default()
        };
        let result = min_sufficient_instances(&workload, &[1, 2], 2, &params).unwrap();
        assert_eq!(result.median, None);
        assert!(result.required.iter().all(Option::is_none));
        let mut csv = Vec::new();
        write_scalability_csv(std::slice::from_ref(&result), &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("exceeds_max"));
    }
}
