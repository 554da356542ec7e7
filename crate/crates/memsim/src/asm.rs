//! Slowdown estimation from cache access rates, plus per-way-count
//! slowdown curves for cache partitioning.
//!
//! The model observes each app's shared-cache access rate over a quantum
//! (CAR_shared) and estimates the rate it would achieve running alone
//! (CAR_alone) from epochs in which the app has highest priority at the
//! memory controller. The alone-run epoch time is reconstructed by
//! subtracting cycles attributable to other apps:
//!
//!   - excess cycles: contention misses (auxiliary-tag-store hits that
//!     missed in the real cache) times the hit/miss latency difference,
//!   - memory queueing: misses that would remain misses alone, times the
//!     average queueing delay behind other apps' commands.
//!
//!   slowdown = CAR_alone / CAR_shared
//!
//! For partitioning, the auxiliary tag store's LRU stack distances give the
//! hit count the app would see with any smaller (or larger) way count; the
//! cycle cost of the hit-count delta converts that into a per-way slowdown
//! curve.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AsmParams {
    /// Estimation quantum in cycles.
    pub quantum_cycles: u64,
    /// High-priority epoch length in cycles.
    pub epoch_cycles: u64,
    /// Cache sets covered by the auxiliary tag store.
    pub sampled_sets: u32,
}

impl Default for AsmParams {
    fn default() -> Self {
        Self { quantum_cycles: 5_000_000, epoch_cycles: 10_000, sampled_sets: 64 }
    }
}

pub const FLAG_CONTENTION_CLAMPED: &str = "contention_clamped";
pub const FLAG_NO_EPOCHS: &str = "no_epochs";
pub const FLAG_DEGENERATE_DENOMINATOR: &str = "degenerate_denominator";
pub const FLAG_NO_PROGRESS: &str = "no_progress";
pub const FLAG_CARRIED_FORWARD: &str = "carried_forward";
pub const FLAG_NO_SAMPLED_ACCESSES: &str = "no_sampled_accesses";
pub const FLAG_MISSING_MISS_LATENCY: &str = "missing_miss_latency";
pub const FLAG_INVALID_WAY_EVALUATION: &str = "invalid_way_evaluation";

/// Shared cache access rate over the quantum.
pub fn car_shared(shared_accesses: u64, quantum_cycles: u64) -> f64 {
    shared_accesses as f64 / quantum_cycles as f64
}

/// Scales sampled-set tag-store counts up to the app's full access count
/// with round-half-even, preserving hits + misses = accesses.
/// Returns None when no sampled-set access was seen.
pub fn scale_sampled(
    sampled_hits: u64,
    sampled_accesses: u64,
    target_accesses: u64,
) -> Option<(u64, u64)> {
    if sampled_accesses == 0 {
        return None;
    }
    let fraction = sampled_hits as f64 / sampled_accesses as f64;
    let hits = (fraction * target_accesses as f64).round_ties_even() as u64;
    let hits = hits.min(target_accesses);
    Some((hits, target_accesses - hits))
}

/// Cycles the app lost to shared-cache contention during its epochs:
/// contention misses (tag-store hits not mirrored by real-cache hits) times
/// the miss/hit latency difference. Returns the cycle count and whether a
/// negative contention count was clamped to zero.
pub fn excess_cycles(
    epoch_ats_hits: u64,
    epoch_hits: u64,
    epoch_misses: u64,
    epoch_hit_time: u64,
    epoch_miss_time: u64,
    hit_latency: u64,
) -> (f64, bool) {
    let clamped = epoch_ats_hits < epoch_hits;
    if epoch_misses == 0 {
        // No misses means no contention misses.
        return (0.0, clamped);
    }
    let contention = epoch_ats_hits.saturating_sub(epoch_hits);
    let avg_miss = epoch_miss_time as f64 / epoch_misses as f64;
    let avg_hit = if epoch_hits > 0 {
        epoch_hit_time as f64 / epoch_hits as f64
    } else {
        hit_latency as f64
    };
    (contention as f64 * (avg_miss - avg_hit), clamped)
}

/// Average cycles a miss spent queued behind other apps' commands.
pub fn avg_queueing_delay(queueing_cycles: u64, epoch_misses: u64) -> f64 {
    if epoch_misses == 0 {
        0.0
    } else {
        queueing_cycles as f64 / epoch_misses as f64
    }
}

/// Alone-run cache access rate over the app's high-priority epochs, with
/// contention and queueing time removed from the denominator. None when the
/// corrected time is not positive.
pub fn car_alone(
    epoch_hits: u64,
    epoch_misses: u64,
    epoch_count: u64,
    epoch_cycles: u64,
    excess: f64,
    epoch_ats_misses: u64,
    avg_queueing: f64,
) -> Option<f64> {
    let denom = (epoch_count * epoch_cycles) as f64 - excess - epoch_ats_misses as f64 * avg_queueing;
    if denom > 0.0 {
        Some((epoch_hits + epoch_misses) as f64 / denom)
    } else {
        None
    }
}

/// One way count's evaluation for partitioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WayEvaluation {
    pub ways: u32,
    pub hits_n: u64,
    pub delta_hits: i64,
    pub cycles_n: f64,
    pub car_n: f64,
    pub slowdown_n: f64,
    pub valid: bool,
}

/// Evaluates the app's slowdown if it held `ways` cache ways: the
/// hit-count delta (from tag-store stack distances) shortens or lengthens
/// the quantum by the hit/miss latency difference, which changes the access
/// rate. Invalid when the adjusted cycle count is not positive; such
/// evaluations carry an infinite slowdown so partitioning never picks them.
pub fn evaluate_ways(
    ways: u32,
    hits_n: u64,
    quantum_hits: u64,
    quantum_misses: u64,
    quantum_cycles: u64,
    avg_miss: f64,
    avg_hit: f64,
    car_alone: f64,
) -> WayEvaluation {
    let delta_hits = hits_n as i64 - quantum_hits as i64;
    let cycles_n = quantum_cycles as f64 - delta_hits as f64 * (avg_miss - avg_hit);
    let accesses = quantum_hits + quantum_misses;
    if cycles_n > 0.0 {
        let car_n = accesses as f64 / cycles_n;
        WayEvaluation {
            ways,
            hits_n,
            delta_hits,
            cycles_n,
            car_n,
            slowdown_n: car_alone / car_n,
            valid: true,
        }
    } else {
        WayEvaluation {
            ways,
            hits_n,
            delta_hits,
            cycles_n,
            car_n: 0.0,
            slowdown_n: f64::INFINITY,
            valid: false,
        }
    }
}

/// Clamps a slowdown-per-way-count curve to be nonincreasing (more ways
/// never hurt); measurement noise in the scaled counts can otherwise
/// produce small inversions.
pub fn enforce_monotone(curve: &mut [f64]) {
    for i in 1..curve.len() {
        if curve[i] > curve[i - 1] {
            curve[i] = curve[i - 1];
        }
    }
}

/// Per-app accumulator for one quantum. The simulation loop increments the
/// counters; `finish_quantum` turns them into estimates and resets them.
#[derive(Debug, Clone)]
pub struct AsmApp {
    /// Number of high-priority epochs this quantum.
    pub epoch_count: u64,
    pub epoch_hits: u64,
    pub epoch_misses: u64,
    /// Cycles with at least one outstanding shared-cache hit during own
    /// epochs (hits and misses may overlap-count the same cycle).
    pub epoch_hit_time: u64,
    pub epoch_miss_time: u64,
    /// Sampled-set tag-store counts during own epochs, before scaling.
    pub epoch_ats_hits_sampled: u64,
    pub epoch_ats_accesses_sampled: u64,
    /// Cycles during own epochs where a request waited behind another
    /// app's command.
    pub queueing_cycles: u64,
    /// Whole-quantum counters.
    pub shared_accesses: u64,
    pub quantum_hits: u64,
    pub quantum_misses: u64,
    pub quantum_hit_time: u64,
    pub quantum_miss_time: u64,
    /// Stack-distance histogram from sampled sets: hist[d-1] counts
    /// tag-store hits at LRU depth d.
    pub stack_hist: Vec<u64>,
    pub quantum_ats_accesses_sampled: u64,
    last_estimate: f64,
    last_way_slowdowns: Vec<f64>,
}

/// One quantum's model output for one app.
#[derive(Debug, Clone, PartialEq)]
pub struct AsmQuantum {
    pub car_shared: f64,
    pub car_alone: f64,
    pub estimate: f64,
    /// Slowdown at each way count 1..=associativity (empty when
    /// partitioning curves were not requested).
    pub way_slowdowns: Vec<f64>,
    pub flags: Vec<&'static str>,
}

impl AsmApp {
    pub fn new(associativity: u32) -> Self {
        Self {
            epoch_count: 0,
            epoch_hits: 0,
            epoch_misses: 0,
            epoch_hit_time: 0,
            epoch_miss_time: 0,
            epoch_ats_hits_sampled: 0,
            epoch_ats_accesses_sampled: 0,
            queueing_cycles: 0,
            shared_accesses: 0,
            quantum_hits: 0,
            quantum_misses: 0,
            quantum_hit_time: 0,
            quantum_miss_time: 0,
            stack_hist: vec![0; associativity as usize],
            quantum_ats_accesses_sampled: 0,
            last_estimate: 1.0,
            last_way_slowdowns: vec![1.0; associativity as usize],
        }
    }

    pub fn record_stack_hit(&mut self, depth: usize) {
        self.stack_hist[depth - 1] += 1;
        self.quantum_ats_accesses_sampled += 1;
    }

    pub fn record_stack_miss(&mut self) {
        self.quantum_ats_accesses_sampled += 1;
    }

    /// Closes the quantum. `hit_latency` backstops the average-hit time
    /// when no hit was observed; `with_curves` controls whether the per-way
    /// slowdown curve is produced.
    pub fn finish_quantum(
        &mut self,
        params: &AsmParams,
        hit_latency: u64,
        with_curves: bool,
    ) -> AsmQuantum {
        let mut flags = Vec::new();
        let shared = car_shared(self.shared_accesses, params.quantum_cycles);
        if self.shared_accesses == 0 {
            flags.push(FLAG_NO_PROGRESS);
        }
        if self.epoch_count == 0 {
            flags.push(FLAG_NO_EPOCHS);
        }

        // Scale the sampled epoch tag-store counts up to the epoch access
        // count; with no sampled access, mirror the real cache (zero
        // contention, zero extra-miss queueing correction).
        let epoch_accesses = self.epoch_hits + self.epoch_misses;
        let (ats_hits, ats_misses) = match scale_sampled(
            self.epoch_ats_hits_sampled,
            self.epoch_ats_accesses_sampled,
            epoch_accesses,
        ) {
            Some(pair) => pair,
            None => {
                flags.push(FLAG_NO_SAMPLED_ACCESSES);
                (self.epoch_hits, self.epoch_misses)
            }
        };
        let (excess, clamped) = excess_cycles(
            ats_hits,
            self.epoch_hits,
            self.epoch_misses,
            self.epoch_hit_time,
            self.epoch_miss_time,
            hit_latency,
        );
        if clamped {
            flags.push(FLAG_CONTENTION_CLAMPED);
        }
        let avg_q = avg_queueing_delay(self.queueing_cycles, self.epoch_misses);
        let alone = if self.epoch_count > 0 {
            match car_alone(
                self.epoch_hits,
                self.epoch_misses,
                self.epoch_count,
                params.epoch_cycles,
                excess,
                ats_misses,
                avg_q,
            ) {
                Some(a) => Some(a),
                None => {
                    flags.push(FLAG_DEGENERATE_DENOMINATOR);
                    None
                }
            }
        } else {
            None
        };

        let degenerate = self.shared_accesses == 0 || alone.is_none();
        let estimate = if degenerate {
            flags.push(FLAG_CARRIED_FORWARD);
            self.last_estimate
        } else {
            alone.unwrap() / shared
        };

        let way_slowdowns = if with_curves {
            if degenerate {
                self.last_way_slowdowns.clone()
            } else {
                match self.way_curve(params, hit_latency, alone.unwrap(), &mut flags) {
                    Some(curve) => curve,
                    None => self.last_way_slowdowns.clone(),
                }
            }
        } else {
            Vec::new()
        };

        self.last_estimate = estimate;
        if with_curves {
            self.last_way_slowdowns = way_slowdowns.clone();
        }
        let assoc = self.stack_hist.len() as u32;
        *self = Self {
            last_estimate: self.last_estimate,
            last_way_slowdowns: std::mem::take(&mut self.last_way_slowdowns),
            ..Self::new(assoc)
        };
        AsmQuantum { car_shared: shared, car_alone: alone.unwrap_or(0.0), estimate, way_slowdowns, flags }
    }

    fn way_curve(
        &self,
        params: &AsmParams,
        hit_latency: u64,
        alone: f64,
        flags: &mut Vec<&'static str>,
    ) -> Option<Vec<f64>> {
        let accesses = self.quantum_hits + self.quantum_misses;
        let avg_hit = if self.quantum_hits > 0 {
            self.quantum_hit_time as f64 / self.quantum_hits as f64
        } else {
            hit_latency as f64
        };
        let avg_miss = if self.quantum_misses > 0 {
            self.quantum_miss_time as f64 / self.quantum_misses as f64
        } else {
            flags.push(FLAG_MISSING_MISS_LATENCY);
            avg_hit
        };
        if self.quantum_ats_accesses_sampled == 0 {
            if !flags.contains(&FLAG_NO_SAMPLED_ACCESSES) {
                flags.push(FLAG_NO_SAMPLED_ACCESSES);
            }
            return None;
        }
        let mut curve = Vec::with_capacity(self.stack_hist.len());
        let mut cum = 0u64;
        let mut any_invalid = false;
        for (i, h) in self.stack_hist.iter().enumerate() {
            cum += h;
            let (hits_n, _) = scale_sampled(cum, self.quantum_ats_accesses_sampled, accesses)
                .expect("sampled accesses checked above");
            let eval = evaluate_ways(
                i as u32 + 1,
                hits_n,
                self.quantum_hits,
                self.quantum_misses,
                params.quantum_cycles,
                avg_miss,
                avg_hit,
                alone,
            );
            any_invalid |= !eval.valid;
            curve.push(eval.slowdown_n);
        }
        if any_invalid {
            flags.push(FLAG_INVALID_WAY_EVALUATION);
        }
        enforce_monotone(&mut curve);
        Some(curve)
    }
}
