//! Reliability run: instance outage, recovery and backlog drain.

use std::io::Write;

use crate::runtime::{run_sim, ClusterConfig, MetricsRow, ScheduleAction, ScheduleCommand, SimSpec};
use crate::workload::WorkloadSpec;

use super::stats::moving_average;
use super::HarnessError;

#[derive(Debug, Clone)]
pub struct ReliabilityConfig {
    pub fan_out: u32,
    pub depth: u32,
    /// Measurements per sensor per second.
    pub rate: u32,
    pub instances: usize,
    /// Instances stopped at `fail_at_s` (the highest ids).
    pub kill: usize,
    pub fail_at_s: u64,
    pub recover_at_s: u64,
    /// Moving average window in seconds.
    pub window_s: usize,
    /// Seconds of workload generation.
    pub duration_s: u64,
    /// Per-instance capacity in records/s; `None` provisions the cluster at
    /// twice the input rate.
    pub capacity_per_instance: Option<f64>,
    pub partitions: usize,
    pub seed: u64,
    pub tick_ms: u64,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig {
            fan_out: 8,
            depth: 3,
            rate: 1,
            instances: 24,
            kill: 18,
            fail_at_s: 600,
            recover_at_s: 900,
            window_s: 60,
            duration_s: 1200,
            capacity_per_instance: None,
            partitions: 128,
            seed: 1,
            tick_ms: 100,
        }
    }
}

impl ReliabilityConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.kill >= self.instances {
            return Err(HarnessError::InvalidConfig(format!(
                "kill ({}) must be smaller than instances ({})",
                self.kill, self.instances
            )));
        }
        if self.fail_at_s >= self.recover_at_s {
            return Err(HarnessError::InvalidConfig(
                "recovery must come after the failure".into(),
            ));
        }
        if self.window_s == 0 {
            return Err(HarnessError::InvalidConfig("window must be positive".into()));
        }
        Ok(())
    }

    /// Effective per-instance capacity: explicit, or 2x provisioning.
    pub fn capacity(&self) -> f64 {
        self.capacity_per_instance.unwrap_or_else(|| {
            let workload = WorkloadSpec::new(self.fan_out, self.depth, self.rate, 1, self.seed);
            2.0 * workload.records_per_second() as f64 / self.instances as f64
        })
    }
}

/// Per-second generated and processed counts plus their smoothed series.
/// The smoothed vectors hold one value per second from `window_s` onward.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputSeries {
    pub generated: Vec<u64>,
    pub processed: Vec<u64>,
    pub generated_smoothed: Vec<f64>,
    pub processed_smoothed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReliabilityReport {
    pub series: ThroughputSeries,
    pub rows: Vec<MetricsRow>,
    pub total_generated: u64,
    pub total_processed: u64,
    /// Nominal input rate in records per second.
    pub input_rate: f64,
    pub window_s: usize,
    pub fail_at_s: u64,
    pub recover_at_s: u64,
}

/// Runs the failure-injection schedule to completion, including the drain of
/// whatever piled up during the outage.
pub fn run_reliability(config: &ReliabilityConfig) -> Result<ReliabilityReport, HarnessError> {
    config.validate()?;
    let workload = WorkloadSpec::new(
        config.fan_out,
        config.depth,
        config.rate,
        config.duration_s,
        config.seed,
    );
    let membership = workload.hierarchy().table();
    let mut cluster = ClusterConfig::new(
        config.partitions,
        vec![config.capacity(); config.instances],
        config.seed,
    );
    cluster.tick_ms = config.tick_ms;
    let mut spec = SimSpec::new(cluster, &membership, config.duration_s);
    spec.schedule = vec![
        ScheduleAction {
            at_s: config.fail_at_s,
            command: ScheduleCommand::Fail { count: config.kill },
        },
        ScheduleAction {
            at_s: config.recover_at_s,
            command: ScheduleCommand::Recover,
        },
    ];
    let report = run_sim(spec, &mut |t| workload.generate_tick(t), None)?;

    let generated: Vec<u64> = report.rows.iter().map(|r| r.records_in).collect();
    let processed: Vec<u64> = report.rows.iter().map(|r| r.records_out).collect();
    let as_f64 = |xs: &[u64]| xs.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let series = ThroughputSeries {
        generated_smoothed: moving_average(&as_f64(&generated), config.window_s),
        processed_smoothed: moving_average(&as_f64(&processed), config.window_s),
        generated,
        processed,
    };
    Ok(ReliabilityReport {
        series,
        total_generated: report.total_generated,
        total_processed: report.total_processed,
        input_rate: workload.records_per_second() as f64,
        window_s: config.window_s,
        fail_at_s: config.fail_at_s,
        recover_at_s: config.recover_at_s,
        rows: report.rows,
    })
}

/// One row per second: `t_sec,generated,processed,generated_ma,processed_ma`,
/// with the moving-average columns empty until a full window is available.
pub fn write_reliability_csv(
    report: &ReliabilityReport,
    mut writer: impl Write,
) -> std::io::Result<()> {
    writeln!(writer, "t_sec,generated,processed,generated_ma,processed_ma")?;
    let series = &report.series;
    for (t, (generated, processed)) in series
        .generated
        .iter()
        .zip(&series.processed)
        .enumerate()
    {
        let ma_index = (t + 1).checked_sub(report.window_s);
        let (generated_ma, processed_ma) = match ma_index {
            Some(i) if i < series.generated_smoothed.len() => (
                format!("{:.3}", series.generated_smoothed[i]),
                format!("{:.3}", series.processed_smoothed[i]),
            ),
            _ => (String::new(), String::new()),
        };
        writeln!(
            writer,
            "{t},{generated},{processed},{generated_ma},{processed_ma}"
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kill_before_instances_is_required() {
        let config = ReliabilityConfig {
            instances: 4,
            kill: 4,
            ..ReliabilityConfig::default()
        };
        assert!(run_reliability(&config).is_err());
    }

    #[test]
    fn no_failure_means_flat_throughput_at_the_input_rate() {
        let config = ReliabilityConfig {
            fan_out: 4,
            depth: 2,
            instances: 4,
            kill: 0,
            fail_at_s: 30,
            recover_at_s: 31,
            window_s: 10,
            duration_s: 60,
            partitions: 16,
            ..ReliabilityConfig::default()
        };
        let report = run_reliability(&config).unwrap();
        assert_eq!(report.total_generated, report.total_processed);
        // After warm-up the smoothed series sits at the input rate; the last
        // windows overlap the drain seconds after generation stops and are
        // excluded.
        let rate = report.input_rate;
        let full_windows = (config.duration_s as usize).saturating_sub(config.window_s - 1);
        for &v in report.series.processed_smoothed[..full_windows]
            .iter()
            .skip(10)
        {
            assert!(
                (v - rate).abs() < 0.5,
                "smoothed throughput {v} should match the input rate {rate}"
            );
        }
    }

    #[test]
    fn capacity_defaults_to_twice_the_input_rate() {
        let config = ReliabilityConfig::default();
        let rate = 512.0;
        assert!((config.capacity() * 24.0 - 2.0 * rate).abs() < 1e-9);
    }
}
