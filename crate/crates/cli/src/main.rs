//! `cascade` — hierarchical stream aggregation at the command line.
//!
//! Exit codes: 0 on success, 1 for validation errors (bad hierarchy or input
//! files), 2 for experiment configuration errors (including flag parsing).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cascade_core::harness::{
    fit_through_origin, run_reliability, run_scalability, write_reliability_csv,
    write_scalability_csv, HarnessError, ReliabilityConfig, RunParameters, ScalabilityConfig,
};
use cascade_core::hierarchy::{load_membership_table, MembershipTable};
use cascade_core::model::Id;
use cascade_core::runtime::{run_sim, write_metrics_csv, ClusterConfig, SimSpec};
use cascade_core::topology::{load_measurements, Measurement};
use cascade_core::workload::generate_tick_for;

#[derive(Parser)]
#[command(name = "cascade", version, about = "Continuous hierarchical aggregation of sensor streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the aggregation pipeline on the simulated cluster.
    Run(RunArgs),
    /// Check a hierarchy file for cycles and duplicate identifiers.
    Validate {
        /// Hierarchy file (one {"child", "parents"} object per line).
        #[arg(long)]
        hierarchy: PathBuf,
    },
    /// Scalability and reliability experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Hierarchy file defining the sensor groups.
    #[arg(long)]
    hierarchy: PathBuf,
    /// Measurement source: a file in the input format, or "synthetic" to
    /// simulate every leaf sensor of the hierarchy.
    #[arg(long)]
    input: String,
    /// Number of worker instances.
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Number of partitions per topic.
    #[arg(long, default_value_t = 8)]
    partitions: usize,
    /// Per-instance capacity in records per second.
    #[arg(long, default_value_t = 5000.0)]
    capacity: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Metrics CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Synthetic workload duration in seconds.
    #[arg(long, default_value_t = 60)]
    duration: u64,
    /// Synthetic measurements per sensor per second.
    #[arg(long, default_value_t = 1)]
    rate: u32,
    /// Optional aggregation result stream (one JSON object per line).
    #[arg(long)]
    results: Option<PathBuf>,
    /// Virtual clock tick in milliseconds (must divide 1000).
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Minimum sufficient instances per workload size.
    Scalability(ScalabilityArgs),
    /// Failure injection with moving-average throughput.
    Reliability(ReliabilityArgs),
}

#[derive(Args)]
struct ScalabilityArgs {
    #[arg(long, default_value_t = 8)]
    fanout: u32,
    /// Hierarchy depths to sweep, e.g. "1..3" (inclusive) or "2".
    #[arg(long, default_value = "1..3")]
    depths: String,
    /// Repetitions per workload (distinct seeds).
    #[arg(long, default_value_t = 10)]
    reps: u32,
    #[arg(long, default_value_t = 128)]
    max_instances: usize,
    /// Latency slope threshold in ms per second of run time.
    #[arg(long, default_value_t = 100.0)]
    threshold_ms: f64,
    #[arg(long)]
    out: PathBuf,
    /// Per-instance capacity in records per second; the default is sized so
    /// the smallest workload already needs more than one instance.
    #[arg(long, default_value_t = 6.0)]
    capacity: f64,
    #[arg(long, default_value_t = 128)]
    partitions: usize,
    /// Simulated seconds per trial run.
    #[arg(long, default_value_t = 120)]
    duration: u64,
    /// Leading seconds excluded from the trend regression.
    #[arg(long, default_value_t = 60)]
    warmup: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReliabilityArgs {
    #[arg(long, default_value_t = 8)]
    fanout: u32,
    #[arg(long, default_value_t = 3)]
    depth: u32,
    #[arg(long, default_value_t = 24)]
    instances: usize,
    /// Instances stopped at the failure point.
    #[arg(long, default_value_t = 18)]
    kill: usize,
    /// Failure time in simulated seconds.
    #[arg(long, default_value_t = 600)]
    fail_at: u64,
    /// Recovery time in simulated seconds.
    #[arg(long, default_value_t = 900)]
    recover_at: u64,
    /// Moving average window in seconds.
    #[arg(long, default_value_t = 60)]
    window: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-instance capacity; the default provisions twice the input rate.
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long, default_value_t = 128)]
    partitions: usize,
    /// Seconds of workload generation.
    #[arg(long, default_value_t = 1200)]
    duration: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Failures that should exit 1 (bad inputs) vs 2 (bad experiment setup).
enum CliError {
    Validation(anyhow::Error),
    Config(anyhow::Error),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Validation(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
            CliError::Config(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(2)
            }
        }
    }
}

fn validation(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Validation(err.into())
}

fn config_error(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(err.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { hierarchy } => cmd_validate(&hierarchy),
        Command::Experiment(ExperimentCommand::Scalability(args)) => cmd_scalability(args),
        Command::Experiment(ExperimentCommand::Reliability(args)) => cmd_reliability(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => err.report(),
    }
}

fn load_hierarchy(path: &Path) -> Result<MembershipTable, CliError> {
    let file = File::open(path)
        .with_context(|| format!("cannot open hierarchy file {}", path.display()))
        .map_err(CliError::Validation)?;
    load_membership_table(BufReader::new(file)).map_err(validation)
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let table = load_hierarchy(path)?;
    table.validate().map_err(validation)?;
    println!(
        "ok: {} children, {} groups, {} sensors",
        table.len(),
        table.group_ids().len(),
        table.leaf_ids().len()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let membership = load_hierarchy(&args.hierarchy)?;
    membership.validate().map_err(validation)?;

    // Per-second source batches: synthetic generation over the hierarchy's
    // leaf sensors, or a replayed input file bucketed by second.
    let mut synthetic_sensors: Vec<Id> = Vec::new();
    let mut replay: BTreeMap<u64, Vec<Measurement>> = BTreeMap::new();
    let duration_s;
    if args.input == "synthetic" {
        synthetic_sensors = membership.leaf_ids().into_iter().collect();
        if synthetic_sensors.is_empty() {
            return Err(config_error(anyhow::anyhow!(
                "hierarchy has no leaf sensors to simulate"
            )));
        }
        duration_s = args.duration;
    } else {
        let file = File::open(&args.input)
            .with_context(|| format!("cannot open input file {}", args.input))
            .map_err(CliError::Validation)?;
        let mut measurements = load_measurements(BufReader::new(file)).map_err(validation)?;
        if measurements.is_empty() {
            return Err(validation(anyhow::anyhow!("input file has no measurements")));
        }
        // Replay preserves relative timing, shifted to start at zero.
        let t0 = measurements.iter().map(|m| m.timestamp).min().unwrap_or(0);
        for m in &mut measurements {
            m.timestamp -= t0;
        }
        measurements.sort_by_key(|m| m.timestamp);
        duration_s = measurements.last().map_or(0, |m| m.timestamp as u64 / 1000) + 1;
        for m in measurements {
            replay.entry(m.timestamp as u64 / 1000).or_default().push(m);
        }
    }

    let rate = args.rate;
    let seed = args.seed;
    let mut source = move |t: u64| -> Vec<Measurement> {
        if synthetic_sensors.is_empty() {
            replay.remove(&t).unwrap_or_default()
        } else {
            generate_tick_for(&synthetic_sensors, rate, seed, t)
        }
    };

    let mut cluster = ClusterConfig::new(
        args.partitions,
        vec![args.capacity; args.instances],
        args.seed,
    );
    cluster.tick_ms = args.tick_ms;
    let spec = SimSpec::new(cluster, &membership, duration_s);

    let mut results_writer = match &args.results {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("cannot create results file {}", path.display()))
                .map_err(CliError::Validation)?;
            Some(BufWriter::new(file))
        }
        None => None,
    };
    let mut sink = |result: &cascade_core::topology::AggregationResult| {
        if let Some(writer) = results_writer.as_mut() {
            serde_json_line(writer, result);
        }
    };

    let report = run_sim(spec, &mut source, Some(&mut sink)).map_err(config_error)?;

    let out = File::create(&args.out)
        .with_context(|| format!("cannot create metrics file {}", args.out.display()))
        .map_err(CliError::Validation)?;
    write_metrics_csv(&report.rows, BufWriter::new(out)).map_err(validation)?;

    println!(
        "generated {} records, processed {}, emitted {} results ({} late records rejected)",
        report.total_generated, report.total_processed, report.total_results, report.late_rejected
    );
    if !report.drained {
        println!("warning: backlog was not fully drained before the run ended");
    }
    Ok(())
}

fn serde_json_line(writer: &mut impl Write, result: &cascade_core::topology::AggregationResult) {
    if let Ok(line) = serde_json::to_string(result) {
        let _ = writeln!(writer, "{line}");
    }
}

fn parse_depths(text: &str) -> Result<Vec<u32>, CliError> {
    let parse_one = |s: &str| -> Result<u32, CliError> {
        s.trim()
            .parse::<u32>()
            .map_err(|_| config_error(anyhow::anyhow!("invalid depth: {s:?}")))
    };
    let depths = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo = parse_one(lo)?;
            let hi = parse_one(hi.trim_start_matches('='))?;
            if lo > hi || lo == 0 {
                return Err(config_error(anyhow::anyhow!("invalid depth range {text:?}")));
            }
            (lo..=hi).collect()
        }
        None => vec![parse_one(text)?],
    };
    if depths.contains(&0) {
        return Err(config_error(anyhow::anyhow!("depths must be positive")));
    }
    Ok(depths)
}

fn cmd_scalability(args: ScalabilityArgs) -> Result<(), CliError> {
    let config = ScalabilityConfig {
        fan_out: args.fanout,
        depths: parse_depths(&args.depths)?,
        rate: 1,
        reps: args.reps,
        max_instances: args.max_instances,
        base_seed: args.seed,
        run: RunParameters {
            partitions: args.partitions,
            capacity_per_instance: args.capacity,
            duration_s: args.duration,
            warmup_s: args.warmup,
            threshold_ms_per_s: args.threshold_ms,
            tick_ms: 100,
        },
    };
    let results = run_scalability(&config).map_err(map_harness_error)?;

    let out = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(CliError::Validation)?;
    write_scalability_csv(&results, BufWriter::new(out)).map_err(validation)?;

    for result in &results {
        match result.median {
            Some(median) => println!(
                "workload {:>6} records/s: median required instances = {median}",
                result.workload_rps
            ),
            None => println!(
                "workload {:>6} records/s: exceeds {} instances",
                result.workload_rps, args.max_instances
            ),
        }
    }
    let fitted: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|r| r.median.map(|m| (r.workload_rps as f64, m as f64)))
        .collect();
    if fitted.len() >= 2 {
        let xs: Vec<f64> = fitted.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fitted.iter().map(|p| p.1).collect();
        let (k, r2) = fit_through_origin(&xs, &ys);
        println!("through-origin fit: required = {k:.5} * records/s (R^2 = {r2:.4})");
    }
    Ok(())
}

fn cmd_reliability(args: ReliabilityArgs) -> Result<(), CliError> {
    let config = ReliabilityConfig {
        fan_out: args.fanout,
        depth: args.depth,
        rate: 1,
        instances: args.instances,
        kill: args.kill,
        fail_at_s: args.fail_at,
        recover_at_s: args.recover_at,
        window_s: args.window as usize,
        duration_s: args.duration,
        capacity_per_instance: args.capacity,
        partitions: args.partitions,
        seed: args.seed,
        tick_ms: 100,
    };
    let report = run_reliability(&config).map_err(map_harness_error)?;

    let out = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(CliError::Validation)?;
    write_reliability_csv(&report, BufWriter::new(out)).map_err(validation)?;

    println!(
        "input rate {} records/s, capacity {:.1} records/s per instance",
        report.input_rate,
        config.capacity()
    );
    println!(
        "generated {} records, processed {} ({} rows written)",
        report.total_generated,
        report.total_processed,
        report.rows.len()
    );
    Ok(())
}

fn map_harness_error(err: HarnessError) -> CliError {
    config_error(err)
}
