//! Slot-level Monte Carlo for the two MAC protocols.
//!
//! Generator: ChaCha8 (`rand_chacha::ChaCha8Rng`). Trials are grouped into
//! fixed chunks of [`CHUNK_TRIALS`]; chunk `k` uses the key derived from
//! `seed` via `seed_from_u64` and ChaCha stream number `k`. Chunks run in
//! parallel and are aggregated in chunk order, so results depend only on the
//! configuration, never on thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHUNK_TRIALS: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),
    #[error("{n_vehicles} vehicles cannot drain through {n_slots} reserved slots")]
    QueueOverflow { n_vehicles: u64, n_slots: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: u64,
    pub seed: u64,
    pub n_vehicles: u64,
    pub n_slots: u64,
    pub slot_time_s: f64,
}

impl TrialConfig {
    fn validate(&self) -> Result<(), McError> {
        if self.trials == 0 {
            return Err(McError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.n_slots == 0 {
            return Err(McError::InvalidConfig("n_slots must be >= 1".into()));
        }
        if self.n_vehicles == 0 {
            return Err(McError::InvalidConfig("n_vehicles must be >= 1".into()));
        }
        if !(self.slot_time_s > 0.0 && self.slot_time_s.is_finite()) {
            return Err(McError::InvalidConfig("slot_time_s must be > 0".into()));
        }
        Ok(())
    }

    /// Length of one packet generation interval (`n_slots` slots).
    pub fn interval_s(&self) -> f64 {
        self.n_slots as f64 * self.slot_time_s
    }

    fn chunks(&self) -> impl ParallelIterator<Item = (ChaCha8Rng, u64)> + '_ {
        let n_chunks = self.trials.div_ceil(CHUNK_TRIALS);
        (0..n_chunks).into_par_iter().map(move |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(k);
            let start = k * CHUNK_TRIALS;
            (rng, CHUNK_TRIALS.min(self.trials - start))
        })
    }
}

/// Bernoulli frequency estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    fn from_count(hits: u64, trials: u64) -> Self {
        let mean = hits as f64 / trials as f64;
        Self {
            mean,
            std_error: (mean * (1.0 - mean) / trials as f64).sqrt(),
            trials,
        }
    }

    /// Distance from `expected` in units of the standard error; infinite if
    /// the estimate is degenerate but off target.
    pub fn z_score(&self, expected: f64) -> f64 {
        let diff = (self.mean - expected).abs();
        if diff == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            diff / self.std_error
        }
    }
}

/// Collision frequency of the tagged vehicle (index 0) when every vehicle
/// picks one of `n_slots` slots uniformly at random.
pub fn simulate_aloha_collision(cfg: &TrialConfig) -> Result<McEstimate, McError> {
    cfg.validate()?;
    let hits: u64 = cfg
        .chunks()
        .map(|(mut rng, trials)| {
            let mut hits = 0;
            for _ in 0..trials {
                let tagged = rng.random_range(0..cfg.n_slots);
                let mut collided = false;
                for _ in 1..cfg.n_vehicles {
                    collided |= rng.random_range(0..cfg.n_slots) == tagged;
                }
                hits += collided as u64;
            }
            hits
        })
        .sum();
    Ok(McEstimate::from_count(hits, cfg.trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    /// Every vehicle generates its packet at the start of the interval.
    Synchronized,
    /// Generation offsets uniform over the interval.
    UniformInInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
    pub samples: u64,
    /// Slots that carried more than one packet. Zero by construction.
    pub collisions: u64,
}

/// Nearest-rank percentile of a sorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// One interval of the reservation queue: FCFS, one packet per slot, ties
/// broken by a uniform random permutation. Pushes per-packet latencies and
/// returns the number of multiply-occupied slots.
fn reservation_trial(
    cfg: &TrialConfig,
    arrival: Arrival,
    rng: &mut ChaCha8Rng,
    order: &mut Vec<(f64, u64)>,
    latencies: &mut Vec<f64>,
) -> u64 {
    order.clear();
    let interval = cfg.interval_s();
    for v in 0..cfg.n_vehicles {
        let t = match arrival {
            Arrival::Synchronized => 0.0,
            Arrival::UniformInInterval => rng.random::<f64>() * interval,
        };
        order.push((t, v));
    }
    order.shuffle(rng);
    // Stable sort keeps the random permutation as the tie-break.
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut collisions = 0;
    let mut last_slot: Option<u64> = None;
    for &(t, _) in order.iter() {
        let earliest = (t / cfg.slot_time_s).ceil() as u64;
        let slot = last_slot.map_or(earliest, |prev| earliest.max(prev + 1));
        if last_slot.is_some_and(|prev| prev >= slot) {
            collisions += 1;
        }
        last_slot = Some(slot);
        let done = (slot + 1) as f64 * cfg.slot_time_s;
        latencies.push(done - t);
    }
    collisions
}

/// Queueing latency of the reservation MAC by simulation.
pub fn simulate_reservation_latency(
    cfg: &TrialConfig,
    arrival: Arrival,
) -> Result<LatencyStats, McError> {
    cfg.validate()?;
    if cfg.n_vehicles > cfg.n_slots {
        return Err(McError::QueueOverflow {
            n_vehicles: cfg.n_vehicles,
            n_slots: cfg.n_slots,
        });
    }
    let parts: Vec<(Vec<f64>, u64)> = cfg
        .chunks()
        .map(|(mut rng, trials)| {
            let mut order = Vec::with_capacity(cfg.n_vehicles as usize);
            let mut lat = Vec::with_capacity((trials * cfg.n_vehicles) as usize);
            let mut collisions = 0;
            for _ in 0..trials {
                collisions += reservation_trial(cfg, arrival, &mut rng, &mut order, &mut lat);
            }
            (lat, collisions)
        })
        .collect();

    let collisions = parts.iter().map(|(_, c)| c).sum();
    let mut all: Vec<f64> = parts.into_iter().flat_map(|(l, _)| l).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    all.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        mean,
        p50: percentile(&all, 0.5),
        p99: percentile(&all, 0.99),
        max: *all.last().expect("at least one packet"),
        samples: all.len() as u64,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_vehicles: u64, n_slots: u64, trials: u64) -> TrialConfig {
        TrialConfig {
            trials,
            seed: 7,
            n_vehicles,
            n_slots,
            slot_time_s: 20e-6,
        }
    }

    #[test]
    fn lone_vehicle_never_collides() {
        let est = simulate_aloha_collision(&cfg(1, 5000, 10_000)).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn single_slot_always_collides() {
        let est = simulate_aloha_collision(&cfg(2, 1, 10_000)).unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn std_error_is_bernoulli() {
        let est = simulate_aloha_collision(&cfg(20, 50, 20_000)).unwrap();
        let expected = (est.mean * (1.0 - est.mean) / 20_000.0).sqrt();
        assert_eq!(est.std_error, expected);
    }

    #[test]
    fn reproducible_and_chunk_independent() {
        let c = cfg(6, 100, 3 * CHUNK_TRIALS + 17);
        assert_eq!(simulate_aloha_collision(&c), simulate_aloha_collision(&c));
        let other = TrialConfig { seed: 8, ..c };
        assert_ne!(
            simulate_aloha_collision(&c),
            simulate_aloha_collision(&other)
        );
    }

    #[test]
    fn reservation_single_packet_takes_one_slot() {
        let stats =
            simulate_reservation_latency(&cfg(1, 5000, 100), Arrival::Synchronized).unwrap();
        assert!((stats.mean - 20e-6).abs() < 1e-15);
        assert!((stats.max - 20e-6).abs() < 1e-15);
        assert_eq!(stats.collisions, 0);
    }

    #[test]
    fn reservation_full_queue_drains_in_interval() {
        let c = cfg(50, 50, 200);
        let stats = simulate_reservation_latency(&c, Arrival::Synchronized).unwrap();
        assert!((stats.max - 50.0 * 20e-6).abs() < 1e-15);
        assert_eq!(stats.collisions, 0);
    }

    #[test]
    fn reservation_synchronized_mean_is_mid_queue() {
        // Every trial serves queue positions 1..n exactly once.
        let n = 394;
        let stats = simulate_reservation_latency(&cfg(n, 5000, 50), Arrival::Synchronized).unwrap();
        let brute: f64 = (1..=n).map(|k| k as f64 * 20e-6).sum::<f64>() / n as f64;
        assert!((stats.mean - brute).abs() < 1e-12);
        assert!((stats.mean - 3.95e-3).abs() < 1e-12);
    }

    #[test]
    fn reservation_uniform_arrivals_are_collision_free() {
        let c = cfg(394, 5000, 500);
        let stats = simulate_reservation_latency(&c, Arrival::UniformInInterval).unwrap();
        assert_eq!(stats.collisions, 0);
        assert!(stats.mean > 0.0 && stats.mean <= stats.max);
        assert!(stats.p50 <= stats.p99 && stats.p99 <= stats.max);
    }

    #[test]
    fn reservation_rejects_overflow() {
        assert_eq!(
            simulate_reservation_latency(&cfg(11, 10, 1), Arrival::Synchronized),
            Err(McError::QueueOverflow {
                n_vehicles: 11,
                n_slots: 10
            })
        );
    }

    #[test]
    fn rejects_degenerate_config() {
        assert!(simulate_aloha_collision(&cfg(2, 10, 0)).is_err());
        assert!(simulate_aloha_collision(&cfg(2, 0, 10)).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[3.0], 0.99), 3.0);
    }
}
