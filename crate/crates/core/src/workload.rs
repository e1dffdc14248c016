//! Synthetic sensor workloads for the evaluation runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hierarchy::NestedHierarchy;
use crate::model::Id;
use crate::topology::Measurement;

/// A nested-hierarchy workload: `fan_out^depth` sensors, each emitting `rate`
/// measurements per simulated second for `duration_s` seconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub fan_out: u32,
    pub depth: u32,
    /// Measurements per sensor per second.
    pub rate: u32,
    pub duration_s: u64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(fan_out: u32, depth: u32, rate: u32, duration_s: u64, seed: u64) -> Self {
        assert!(rate >= 1, "rate must be positive");
        WorkloadSpec {
            fan_out,
            depth,
            rate,
            duration_s,
            seed,
        }
    }

    pub fn hierarchy(&self) -> NestedHierarchy {
        NestedHierarchy::new(self.fan_out, self.depth)
    }

    pub fn sensor_count(&self) -> u64 {
        self.hierarchy().sensor_count()
    }

    /// Total input rate in records per second.
    pub fn records_per_second(&self) -> u64 {
        self.sensor_count() * u64::from(self.rate)
    }

    /// The measurements of simulated second `t`, in emission order.
    ///
    /// A pure function of `(spec, t)`: safe to call from any worker, and two
    /// calls with the same arguments return identical lists.
    pub fn generate_tick(&self, t: u64) -> Vec<Measurement> {
        debug_assert!(t < self.duration_s, "tick {t} outside of run duration");
        let sensors: Vec<Id> = self.hierarchy().sensor_ids().collect();
        generate_tick_for(&sensors, self.rate, self.seed, t)
    }
}

/// Measurements of second `t` for an arbitrary set of sensors.
///
/// Each sensor emits `rate` times per second; emissions are phase-shifted so
/// the batch spreads over the whole second instead of bursting at its start:
/// sensor `i` of `n` emits at `k * 1000/rate + i * 1000/(n*rate)` milliseconds
/// into the second, for `k` in `0..rate`. Values are drawn uniformly from
/// [0, 100) by a generator seeded from `(seed, t)`.
pub fn generate_tick_for(sensors: &[Id], rate: u32, seed: u64, t: u64) -> Vec<Measurement> {
    let n = sensors.len() as u64;
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, t));
    let base = (t * 1000) as i64;
    let slot = 1000 / u64::from(rate);
    let mut out = Vec::with_capacity((n * u64::from(rate)) as usize);
    for k in 0..u64::from(rate) {
        for (i, sensor) in sensors.iter().enumerate() {
            let phase = k * slot + (i as u64) * slot / n;
            let value = rng.random_range(0.0..100.0);
            out.push(Measurement::new(
                sensor.clone(),
                value,
                base + phase as i64,
            ));
        }
    }
    out
}

/// splitmix64-style mixer deriving a per-tick stream seed from (seed, t).
fn mix(seed: u64, t: u64) -> u64 {
    let mut z = seed ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
