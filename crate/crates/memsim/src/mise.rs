//! Slowdown estimation from memory request service rates.
//!
//! The model samples each app's shared-run request service rate over a long
//! interval and estimates its alone-run service rate from short epochs in
//! which the app's requests get highest priority at the memory controller.
//! Cycles inside those epochs where the app still waited behind another
//! app's command are subtracted from the epoch time as interference.
//!
//! For memory-bound apps the slowdown is the service-rate ratio; for less
//! memory-bound apps the ratio is blended with the fraction of cycles the
//! core was stalled on memory:
//!
//!   alpha < threshold:  slowdown = (1 - alpha) + alpha * arsr / srsr
//!   alpha >= threshold: slowdown = arsr / srsr

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MiseParams {
    /// Estimation interval in cycles.
    pub interval_cycles: u64,
    /// High-priority epoch length in cycles.
    pub epoch_cycles: u64,
    /// Stall-fraction threshold above which an app counts as memory bound.
    pub alpha_threshold: f64,
}

impl Default for MiseParams {
    fn default() -> Self {
        Self { interval_cycles: 5_000_000, epoch_cycles: 10_000, alpha_threshold: 0.7 }
    }
}

pub const FLAG_NO_HPE: &str = "no_high_priority_epochs";
pub const FLAG_DEGENERATE_DENOMINATOR: &str = "degenerate_denominator";
pub const FLAG_NO_PROGRESS: &str = "no_progress";
pub const FLAG_CARRIED_FORWARD: &str = "carried_forward";

/// One interval's worth of model output for one app.
#[derive(Debug, Clone, PartialEq)]
pub struct MiseInterval {
    pub srsr: f64,
    pub arsr: f64,
    pub alpha: f64,
    pub estimate: f64,
    pub flags: Vec<&'static str>,
}

/// Shared-run service rate: requests served per cycle over the interval.
pub fn shared_rate(served: u64, interval_cycles: u64) -> f64 {
    served as f64 / interval_cycles as f64
}

/// Alone-run service rate estimated from the app's high-priority epochs.
/// `interference_cycles` is the portion of that epoch time the app spent
/// waiting behind another app's in-flight command.
pub fn alone_rate(
    hpe_served: u64,
    hpe_count: u64,
    epoch_cycles: u64,
    interference_cycles: u64,
) -> Option<f64> {
    let total = hpe_count * epoch_cycles;
    if interference_cycles >= total {
        return None;
    }
    Some(hpe_served as f64 / (total - interference_cycles) as f64)
}

/// Blends the service-rate ratio with the memory stall fraction.
pub fn slowdown_estimate(alpha: f64, arsr: f64, srsr: f64, threshold: f64) -> f64 {
    let ratio = arsr / srsr;
    if alpha < threshold {
        (1.0 - alpha) + alpha * ratio
    } else {
        ratio
    }
}

/// Picks the epoch's high-priority app by lottery: one uniform draw in
/// [0, 1) lands in the cumulative weight ranges laid out in app-id order.
/// Non-positive and non-finite weights count as zero; if nothing remains,
/// every app gets an equal share.
pub fn assign_epoch(weights: &[f64], draw: f64) -> crate::AppId {
    assert!(!weights.is_empty(), "lottery needs at least one app");
    let clean: Vec<f64> =
        weights.iter().map(|w| if w.is_finite() && *w > 0.0 { *w } else { 0.0 }).collect();
    let total: f64 = clean.iter().sum();
    if total <= 0.0 {
        let idx = (draw * weights.len() as f64) as usize;
        return idx.min(weights.len() - 1);
    }
    let target = draw * total;
    let mut acc = 0.0;
    for (app, w) in clean.iter().enumerate() {
        acc += w;
        if target < acc {
            return app;
        }
    }
    weights.len() - 1
}

/// Per-app accumulator; the simulation increments the counters and calls
/// `finish_interval` at each interval boundary.
#[derive(Debug, Clone)]
pub struct MiseApp {
    pub served: u64,
    pub hpe_count: u64,
    pub hpe_served: u64,
    pub interference_cycles: u64,
    last_estimate: f64,
}

impl MiseApp {
    pub fn new() -> Self {
        Self { served: 0, hpe_count: 0, hpe_served: 0, interference_cycles: 0, last_estimate: 1.0 }
    }

    /// Closes the interval: computes rates and the slowdown estimate, then
    /// resets the counters. Degenerate intervals (no progress, no
    /// high-priority epochs, or interference swallowing the whole epoch
    /// time) carry the previous estimate forward and say so in the flags.
    pub fn finish_interval(&mut self, alpha: f64, params: &MiseParams) -> MiseInterval {
        let mut flags = Vec::new();
        let srsr = shared_rate(self.served, params.interval_cycles);
        if self.served == 0 {
            flags.push(FLAG_NO_PROGRESS);
        }
        if self.hpe_count == 0 {
            flags.push(FLAG_NO_HPE);
        }
        let arsr = if self.hpe_count > 0 {
            match alone_rate(
                self.hpe_served,
                self.hpe_count,
                params.epoch_cycles,
                self.interference_cycles,
            ) {
                Some(a) => a,
                None => {
                    flags.push(FLAG_DEGENERATE_DENOMINATOR);
                    0.0
                }
            }
        } else {
            0.0
        };
        let estimate = if flags.is_empty() {
            slowdown_estimate(alpha, arsr, srsr, params.alpha_threshold)
        } else {
            flags.push(FLAG_CARRIED_FORWARD);
            self.last_estimate
        };
        self.last_estimate = estimate;
        self.served = 0;
        self.hpe_count = 0;
        self.hpe_served = 0;
        self.interference_cycles = 0;
        MiseInterval { srsr, arsr, alpha, estimate, flags }
    }
}

impl Default for MiseApp {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_rate_is_served_over_interval() {
        assert_eq!(shared_rate(5_000, 5_000_000), 0.001);
    }

    #[test]
    fn alone_rate_subtracts_interference_from_epoch_time() {
        // 1200 requests over 10 epochs of 10k cycles with 20k interference
        // cycles: 1200 / 80000.
        assert_eq!(alone_rate(1_200, 10, 10_000, 20_000), Some(0.015));
        assert_eq!(alone_rate(1, 1, 100, 100), None);
        // 50 requests in one clean 10k-cycle epoch, then the same epoch with
        // 2000 interference cycles removed from the denominator.
        assert_eq!(alone_rate(50, 1, 10_000, 0), Some(0.005));
        assert_eq!(alone_rate(50, 1, 10_000, 2_000), Some(0.00625));
    }

    #[test]
    fn lottery_respects_cumulative_weight_order() {
        // Weights {0.75, 0.25}: draws below 0.75 pick app 0.
        assert_eq!(assign_epoch(&[0.75, 0.25], 0.0), 0);
        assert_eq!(assign_epoch(&[0.75, 0.25], 0.7499), 0);
        assert_eq!(assign_epoch(&[0.75, 0.25], 0.75), 1);
        assert_eq!(assign_epoch(&[0.75, 0.25], 0.9999), 1);
        // Unnormalized weights behave like their normalized form.
        assert_eq!(assign_epoch(&[3.0, 1.0], 0.74), 0);
        assert_eq!(assign_epoch(&[3.0, 1.0], 0.76), 1);
    }

    #[test]
    fn degenerate_lottery_weights_fall_back_to_equal_shares() {
        assert_eq!(assign_epoch(&[0.0, 0.0, 0.0], 0.5), 1);
        assert_eq!(assign_epoch(&[0.0, 0.0], 0.99), 1);
        assert_eq!(assign_epoch(&[f64::NAN, 1.0], 0.5), 1);
        assert_eq!(assign_epoch(&[-1.0, 1.0], 0.2), 1);
    }

    #[test]
    fn estimate_blends_with_stall_fraction_below_threshold() {
        // alpha 0.2, rate ratio 3: 0.8 + 0.2 * 3 = 1.4.
        let est = slowdown_estimate(0.2, 0.003, 0.001, 0.7);
        assert!((est - 1.4).abs() < 1e-12);
    }

    #[test]
    fn estimate_is_the_rate_ratio_at_or_above_threshold() {
        let est = slowdown_estimate(0.9, 0.002, 0.001, 0.7);
        assert!((est - 2.0).abs() < 1e-12);
        // The threshold itself takes the memory-bound branch.
        let est = slowdown_estimate(0.7, 0.002, 0.001, 0.7);
        assert!((est - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_interval_computation() {
        let mut app = MiseApp::new();
        app.served = 5_000;
        app.hpe_count = 10;
        app.hpe_served = 1_200;
        app.interference_cycles = 20_000;
        let params = MiseParams::default();
        let out = app.finish_interval(0.2, &params);
        assert_eq!(out.srsr, 0.001);
        assert_eq!(out.arsr, 0.015);
        assert!(out.flags.is_empty());
        // ratio 15: 0.8 + 0.2 * 15 = 3.8.
        assert!((out.estimate - 3.8).abs() < 1e-12);
        // Counters reset for the next interval.
        assert_eq!(app.served, 0);
        assert_eq!(app.hpe_count, 0);
    }

    #[test]
    fn no_progress_carries_the_previous_estimate() {
        let mut app = MiseApp::new();
        app.served = 5_000;
        app.hpe_count = 10;
        app.hpe_served = 1_200;
        app.interference_cycles = 20_000;
        let params = MiseParams::default();
        let first = app.finish_interval(0.9, &params).estimate;
        let out = app.finish_interval(0.9, &params);
        assert!(out.flags.contains(&FLAG_NO_PROGRESS));
        assert!(out.flags.contains(&FLAG_CARRIED_FORWARD));
        assert_eq!(out.estimate, first);
    }

    #[test]
    fn missing_epochs_and_degenerate_denominators_are_flagged() {
        let params = MiseParams::default();
        let mut app = MiseApp::new();
        app.served = 10;
        let out = app.finish_interval(0.5, &params);
        assert!(out.flags.contains(&FLAG_NO_HPE));
        assert_eq!(out.estimate, 1.0, "initial carry-forward value");

        let mut app = MiseApp::new();
        app.served = 10;
        app.hpe_count = 1;
        app.interference_cycles = params.epoch_cycles;
        let out = app.finish_interval(0.5, &params);
        assert!(out.flags.contains(&FLAG_DEGENERATE_DENOMINATOR));
        assert!(out.flags.contains(&FLAG_CARRIED_FORWARD));
    }
}
