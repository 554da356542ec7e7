//! Slowdown-driven resource allocation: bandwidth-probability control for
//! apps of interest, fairness-oriented bandwidth redistribution, and cache
//! way partitioning from per-way slowdown curves.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const FLAG_MISSING_ESTIMATE: &str = "missing_estimate";
pub const FLAG_INFEASIBLE: &str = "infeasible";

/// An app whose slowdown must stay under a bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AoiSpec {
    pub app: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QosParams {
    /// Bandwidth-probability adjustment per interval.
    pub step: f64,
    /// Consecutive missed intervals at full allocation before a bound is
    /// declared infeasible.
    pub patience: u32,
}

impl Default for QosParams {
    fn default() -> Self {
        Self { step: 0.02, patience: 10 }
    }
}

/// Bandwidth-probability controller that walks each app of interest toward
/// its slowdown bound and leaves the residual to everyone else equally.
#[derive(Debug, Clone)]
pub struct MiseQos {
    pub aois: Vec<AoiSpec>,
    pub params: QosParams,
    aoi_alloc: Vec<f64>,
    miss_streak: Vec<u32>,
    pub infeasible: Vec<bool>,
}

impl MiseQos {
    pub fn new(aois: Vec<AoiSpec>, apps: usize, params: QosParams) -> Self {
        let n = aois.len();
        Self {
            aois,
            params,
            aoi_alloc: vec![1.0 / apps as f64; n],
            miss_streak: vec![0; n],
            infeasible: vec![false; n],
        }
    }

    /// One interval step: nudge each app of interest's allocation by the
    /// configured step (down when comfortably under its bound, up when
    /// over), clip to [0, 1], scale down if the bounds together demand more
    /// than everything, and share the remainder equally among the other
    /// apps. Returns the full per-app weight vector.
    pub fn update(&mut self, estimates: &[f64]) -> Vec<f64> {
        let apps = estimates.len();
        for (i, aoi) in self.aois.iter().enumerate() {
            let est = estimates[aoi.app];
            if est < aoi.bound {
                self.aoi_alloc[i] -= self.params.step;
            } else if est > aoi.bound {
                self.aoi_alloc[i] += self.params.step;
            }
            self.aoi_alloc[i] = self.aoi_alloc[i].clamp(0.0, 1.0);
            if est > aoi.bound {
                self.miss_streak[i] += 1;
            } else {
                self.miss_streak[i] = 0;
            }
        }
        let total: f64 = self.aoi_alloc.iter().sum();
        if total > 1.0 {
            for a in &mut self.aoi_alloc {
                *a /= total;
            }
        }
        let residual = (1.0 - self.aoi_alloc.iter().sum::<f64>()).max(0.0);
        for (i, _) in self.aois.iter().enumerate() {
            self.infeasible[i] = residual <= f64::EPSILON && self.miss_streak[i] >= self.params.patience;
        }
        let others = apps - self.aois.len();
        let share = if others > 0 { residual / others as f64 } else { 0.0 };
        let mut weights = vec![share; apps];
        for (i, aoi) in self.aois.iter().enumerate() {
            weights[aoi.app] = self.aoi_alloc[i];
        }
        weights
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FairParams {
    /// Bandwidth stolen per interval from each app under the bound.
    pub step: f64,
    /// Intervals of uniform history required before the bound moves.
    pub history_len: usize,
    /// Bound multipliers when every app met it / most apps missed it.
    pub tighten: f64,
    pub loosen: f64,
    pub initial_bound: f64,
    /// The bound never drops to 1.0 or below (a bound of 1 is unreachable
    /// under any sharing).
    pub bound_floor: f64,
}

impl Default for FairParams {
    fn default() -> Self {
        Self {
            step: 0.02,
            history_len: 3,
            tighten: 0.95,
            loosen: 1.05,
            initial_bound: 3.0,
            bound_floor: 1.001,
        }
    }
}

/// Redistributes bandwidth from apps under the bound to apps over it; the
/// bound itself chases the worst measured slowdown.
#[derive(Debug, Clone)]
pub struct MiseFair {
    pub params: FairParams,
    pub bound: f64,
    pub alloc: Vec<f64>,
    /// Per interval: (every app met the bound, more than half missed it).
    history: VecDeque<(bool, bool)>,
}

impl MiseFair {
    pub fn new(apps: usize, params: FairParams) -> Self {
        Self {
            bound: params.initial_bound,
            alloc: vec![1.0 / apps as f64; apps],
            history: VecDeque::new(),
            params,
        }
    }

    /// One interval step: steal from the comfortable cluster, give to the
    /// slowed-down cluster, then let the bound track the measured maximum
    /// slowdown once the trailing history is uniform.
    pub fn update(&mut self, estimates: &[f64]) -> Vec<f64> {
        self.redistribute(estimates);
        self.record_and_adjust(estimates);
        self.alloc.clone()
    }

    fn redistribute(&mut self, estimates: &[f64]) {
        let over: Vec<usize> =
            (0..estimates.len()).filter(|&i| estimates[i] >= self.bound).collect();
        if over.is_empty() {
            return;
        }
        let mut stolen = 0.0;
        for i in 0..estimates.len() {
            if estimates[i] < self.bound {
                let d = self.params.step.min(self.alloc[i]);
                self.alloc[i] -= d;
                stolen += d;
            }
        }
        let gain = stolen / over.len() as f64;
        for &i in &over {
            self.alloc[i] += gain;
        }
        let sum: f64 = self.alloc.iter().sum();
        if sum > 0.0 {
            for a in &mut self.alloc {
                *a /= sum;
            }
        }
    }

    fn record_and_adjust(&mut self, estimates: &[f64]) {
        let missed = estimates.iter().filter(|&&e| e > self.bound).count();
        let all_met = missed == 0;
        let over_half_missed = missed * 2 > estimates.len();
        self.history.push_back((all_met, over_half_missed));
        if self.history.len() < self.params.history_len {
            return;
        }
        while self.history.len() > self.params.history_len {
            self.history.pop_front();
        }
        let max_est = estimates.iter().cloned().fold(f64::MIN, f64::max);
        if self.history.iter().all(|h| h.0) {
            self.bound = (self.params.tighten * max_est).max(self.params.bound_floor);
            self.history.clear();
        } else if self.history.iter().all(|h| h.1) {
            self.bound = (self.params.loosen * max_est).max(self.params.bound_floor);
            self.history.clear();
        }
    }
}

/// Epoch-probability weights proportional to estimated slowdowns. Missing
/// estimates weigh in as neutral 1.0 and are flagged.
pub fn asm_mem_weights(estimates: &[Option<f64>]) -> (Vec<f64>, Vec<&'static str>) {
    let mut flags = Vec::new();
    let vals: Vec<f64> = estimates
        .iter()
        .map(|e| match e {
            Some(v) if v.is_finite() && *v > 0.0 => *v,
            _ => {
                if !flags.contains(&FLAG_MISSING_ESTIMATE) {
                    flags.push(FLAG_MISSING_ESTIMATE);
                }
                1.0
            }
        })
        .collect();
    let total: f64 = vals.iter().sum();
    (vals.iter().map(|v| v / total).collect(), flags)
}

/// One granting step of the partitioning search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grant {
    pub app: usize,
    pub ways: u32,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDecision {
    /// Ways per app; sums to the associativity, each at least 1.
    pub ways: Vec<u32>,
    /// The granting steps that produced the allocation.
    pub grants: Vec<Grant>,
}

/// Way partitioning by marginal slowdown utility: every app starts at a
/// 1-way floor; each round grants the (app, k) step with the largest
/// slowdown reduction per way, ties to the smaller step then the lower app
/// id, until all ways are allocated.
///
/// `curves[app][n-1]` is the app's estimated slowdown with n ways,
/// nonincreasing in n.
pub fn asm_cache_partition(curves: &[Vec<f64>], total_ways: u32) -> PartitionDecision {
    let apps = curves.len();
    assert!(
        apps > 0 && total_ways as usize >= apps,
        "cannot give each of {apps} apps a 1-way floor out of {total_ways} ways"
    );
    let mut ways = vec![1u32; apps];
    let mut remaining = total_ways - apps as u32;
    let mut grants = Vec::new();
    while remaining > 0 {
        let mut best: Option<(f64, u32, usize)> = None;
        for (app, curve) in curves.iter().enumerate() {
            let cur = ways[app];
            for k in 1..=remaining {
                let target = cur + k;
                if target as usize > curve.len() {
                    break;
                }
                let mut u = (curve[cur as usize - 1] - curve[target as usize - 1]) / k as f64;
                if u.is_nan() {
                    u = f64::NEG_INFINITY;
                }
                let better = match best {
                    None => true,
                    Some((bu, bk, _)) => u > bu || (u == bu && k < bk),
                };
                if better {
                    best = Some((u, k, app));
                }
            }
        }
        match best {
            Some((u, k, app)) => {
                ways[app] += k;
                remaining -= k;
                grants.push(Grant { app, ways: k, utility: u });
            }
            // Every app is already at full curve length; put the leftovers
            // on the first app (unreachable when curves span the full
            // associativity).
            None => {
                ways[0] += remaining;
                remaining = 0;
            }
        }
    }
    PartitionDecision { ways, grants }
}

/// Gives the app of interest the fewest ways whose estimated slowdown meets
/// the bound (capped so every other app keeps its floor) and partitions the
/// rest among the other apps. Returns the decision and whether the bound
/// was infeasible.
pub fn asm_qos_allocate(
    aoi: usize,
    bound: f64,
    curves: &[Vec<f64>],
    total_ways: u32,
) -> (PartitionDecision, bool) {
    let apps = curves.len();
    if apps == 1 {
        let infeasible = !curves[0].iter().any(|s| *s <= bound);
        return (PartitionDecision { ways: vec![total_ways], grants: Vec::new() }, infeasible);
    }
    let max_aoi = total_ways - (apps as u32 - 1);
    let wanted = curves[aoi].iter().position(|s| *s <= bound).map(|i| i as u32 + 1);
    let (aoi_ways, infeasible) = match wanted {
        Some(n) if n <= max_aoi => (n, false),
        _ => (max_aoi, true),
    };
    let rest_curves: Vec<Vec<f64>> =
        curves.iter().enumerate().filter(|(i, _)| *i != aoi).map(|(_, c)| c.clone()).collect();
    let rest = asm_cache_partition(&rest_curves, total_ways - aoi_ways);
    let mut ways = vec![0u32; apps];
    ways[aoi] = aoi_ways;
    let mut it = rest.ways.iter();
    for (i, w) in ways.iter_mut().enumerate() {
        if i != aoi {
            *w = *it.next().expect("one allocation per non-aoi app");
        }
    }
    (PartitionDecision { ways, grants: rest.grants }, infeasible)
}

/// Combined cache-and-memory step: partition the ways, then weight epoch
/// probabilities by each app's estimated slowdown at its granted way count.
pub fn asm_cache_mem_step(
    curves: &[Vec<f64>],
    total_ways: u32,
) -> (PartitionDecision, Vec<f64>, Vec<&'static str>) {
    let decision = asm_cache_partition(curves, total_ways);
    let at_alloc: Vec<Option<f64>> = decision
        .ways
        .iter()
        .enumerate()
        .map(|(app, &w)| Some(curves[app][w as usize - 1]))
        .collect();
    let (weights, flags) = asm_mem_weights(&at_alloc);
    (decision, weights, flags)
}
