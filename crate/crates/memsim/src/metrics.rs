//! Ground-truth slowdown measurement and evaluation metrics.
//!
//! The actual slowdown of an app is IPC_alone / IPC_shared **for the same
//! work**: the shared run records, at every estimation-window boundary, how
//! many instructions the app had retired; the alone run records
//! (cycle, retired) samples every [`crate::sim::SAMPLE_PERIOD`] cycles plus
//! at window boundaries and at finish. `cycles_for_retired` inverts those
//! samples — the first cycle at which the app had completed a given amount
//! of work — with linear interpolation between the bracketing samples
//! (exact whenever the target falls on a sample).
//!
//! The first window of every run is treated as warmup and excluded from
//! aggregate error and speedup figures: both runs start with cold caches,
//! but the distortion is asymmetric.

use crate::sim::AppStats;
use crate::AppId;

/// One aligned window of a shared run versus the app's alone run.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowdownRecord {
    pub app: AppId,
    /// 1-indexed window number.
    pub window: u64,
    pub ipc_alone: f64,
    pub ipc_shared: f64,
    /// ipc_alone / ipc_shared.
    pub actual: f64,
    pub estimated: Option<f64>,
    pub error_pct: Option<f64>,
}

/// Whole-run (post-warmup) slowdown for one app.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpan {
    pub app: AppId,
    pub ipc_alone: f64,
    pub ipc_shared: f64,
    pub actual: f64,
    /// The alone run retired less work than the shared run; the span was
    /// clipped to the common amount.
    pub truncated: bool,
}

/// |estimated − actual| / actual × 100.
pub fn estimation_error(estimated: f64, actual: f64) -> f64 {
    debug_assert!(actual > 0.0);
    (estimated - actual).abs() / actual * 100.0
}

/// Σ over apps of ipc_shared / ipc_alone.
pub fn weighted_speedup(spans: &[RunSpan]) -> f64 {
    spans
        .iter()
        .map(|s| if s.ipc_alone > 0.0 { s.ipc_shared / s.ipc_alone } else { 1.0 })
        .sum()
}

/// App count divided by the sum of actual slowdowns.
pub fn harmonic_speedup(spans: &[RunSpan]) -> f64 {
    spans.len() as f64 / spans.iter().map(|s| s.actual).sum::<f64>()
}

/// The worst actual slowdown across apps (unfairness).
pub fn maximum_slowdown(spans: &[RunSpan]) -> f64 {
    spans.iter().map(|s| s.actual).fold(f64::NEG_INFINITY, f64::max)
}

/// Mean service-run length from a bucketed histogram; the overflow bucket
/// counts as its lower edge. 0.0 when the app was never served.
pub fn mean_streak(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let weighted: u64 = hist.iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum();
    weighted as f64 / total as f64
}

/// The first cycle by which `target` instructions had retired, linearly
/// interpolated between the bracketing samples (r_{i-1} < target ≤ r_i).
/// `None` when the run never retired that much work.
pub fn cycles_for_retired(samples: &[(u64, u64)], target: u64) -> Option<f64> {
    if target == 0 {
        return Some(0.0);
    }
    let i = samples.iter().position(|&(_, r)| r >= target)?;
    debug_assert!(i > 0, "samples must start at (0, 0)");
    let (c0, r0) = samples[i - 1];
    let (c1, r1) = samples[i];
    debug_assert!(r0 < target && target <= r1);
    let frac = (target - r0) as f64 / (r1 - r0) as f64;
    Some(c0 as f64 + frac * (c1 - c0) as f64)
}

/// One window's work interval in the shared run, with the cycle span the
/// app actually needed for it (first-reach interpolation on the run's own
/// samples). Windows with no retirement are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpan {
    /// 1-indexed window number.
    pub window: u64,
    pub retired_begin: u64,
    pub retired_end: u64,
    pub shared_span: f64,
}

/// Decomposes a shared run into per-window work intervals. The span is
/// measured between the first cycles reaching the interval's endpoints, so
/// an app that finishes (or stalls) inside a window is charged only for the
/// cycles it needed, symmetrically with the alone-run measurement.
pub fn window_spans(shared: &AppStats) -> Vec<WindowSpan> {
    let mut out = Vec::new();
    let mut prev = 0u64;
    for (i, &retired) in shared.window_retired.iter().enumerate() {
        if retired == prev {
            continue;
        }
        let c0 = cycles_for_retired(&shared.samples, prev).expect("own work is reachable");
        let c1 = cycles_for_retired(&shared.samples, retired).expect("own work is reachable");
        debug_assert!(c1 > c0);
        out.push(WindowSpan {
            window: i as u64 + 1,
            retired_begin: prev,
            retired_end: retired,
            shared_span: c1 - c0,
        });
        prev = retired;
    }
    out
}

/// Builds one `SlowdownRecord` per full shared-run window, stopping early
/// (with the truncation flag) if the alone run never reached the window's
/// work. Windows where the app retired nothing are skipped — there is no
/// work to compare. Both runs are measured over the first-reach span for
/// the same work, so a run compared against itself yields exactly 1.0.
pub fn align_windows(
    app: AppId,
    shared: &AppStats,
    alone_samples: &[(u64, u64)],
) -> (Vec<SlowdownRecord>, bool) {
    let mut out = Vec::new();
    for span in window_spans(shared) {
        let (Some(c0), Some(c1)) = (
            cycles_for_retired(alone_samples, span.retired_begin),
            cycles_for_retired(alone_samples, span.retired_end),
        ) else {
            return (out, true);
        };
        let alone_span = c1 - c0;
        debug_assert!(alone_span > 0.0);
        let delta = (span.retired_end - span.retired_begin) as f64;
        let ipc_alone = delta / alone_span;
        let ipc_shared = delta / span.shared_span;
        let actual = ipc_alone / ipc_shared;
        let estimated = shared.window_estimates.get(span.window as usize - 1).copied();
        let error_pct = estimated.map(|e| estimation_error(e, actual));
        out.push(SlowdownRecord {
            app,
            window: span.window,
            ipc_alone,
            ipc_shared,
            actual,
            estimated,
            error_pct,
        });
    }
    (out, false)
}

/// Whole-run actual slowdown over the post-warmup span: from the first
/// window boundary (when at least two full windows exist, else from cycle
/// 0) to the end of the run, clipped to work both runs completed. Cycle
/// positions come from first-reach interpolation on each run's own samples,
/// so idle tails after an app finishes cancel out of both sides.
pub fn run_span(
    app: AppId,
    shared: &AppStats,
    alone_samples: &[(u64, u64)],
) -> RunSpan {
    let shared_final = shared.samples.last().map(|&(_, r)| r).unwrap_or(0);
    let alone_final = alone_samples.last().map(|&(_, r)| r).unwrap_or(0);
    let truncated = alone_final < shared_final;
    let end = shared_final.min(alone_final);
    let mut start = if shared.window_retired.len() >= 2 { shared.window_retired[0] } else { 0 };
    if start >= end {
        start = 0;
    }
    if end == 0 {
        return RunSpan { app, ipc_alone: 0.0, ipc_shared: 0.0, actual: 1.0, truncated };
    }
    let work = (end - start) as f64;
    let shared_span = cycles_for_retired(&shared.samples, end).expect("own work is reachable")
        - cycles_for_retired(&shared.samples, start).expect("own work is reachable");
    let alone_span = cycles_for_retired(alone_samples, end).expect("clipped to alone work")
        - cycles_for_retired(alone_samples, start).expect("clipped to alone work");
    debug_assert!(shared_span > 0.0 && alone_span > 0.0);
    let ipc_shared = work / shared_span;
    let ipc_alone = work / alone_span;
    RunSpan { app, ipc_alone, ipc_shared, actual: ipc_alone / ipc_shared, truncated }
}

/// Mean |error| over post-warmup windows that carry an estimate. `None`
/// when no window qualifies.
pub fn mean_error(records: &[SlowdownRecord]) -> Option<f64> {
    let errs: Vec<f64> =
        records.iter().filter(|r| r.window >= 2).filter_map(|r| r.error_pct).collect();
    if errs.is_empty() {
        None
    } else {
        Some(errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(window_retired: Vec<u64>, window_estimates: Vec<f64>, samples: Vec<(u64, u64)>) -> AppStats {
        AppStats {
            retired: samples.last().map(|&(_, r)| r).unwrap_or(0),
            total_cycles: samples.last().map(|&(c, _)| c).unwrap_or(0),
            stall_cycles: 0,
            finished: true,
            finish_cycle: 0,
            dram_requests: 0,
            requests_issued: 0,
            requests_completed: 0,
            samples,
            window_retired,
            window_estimates,
            streaks: [0; 16],
        }
    }

    #[test]
    fn error_examples() {
        assert!((estimation_error(2.2, 2.0) - 10.0).abs() < 1e-9);
        assert_eq!(estimation_error(3.0, 3.0), 0.0);
        assert_eq!(estimation_error(1.0, 2.0), 50.0);
        // Scale-free.
        assert_eq!(estimation_error(1.3, 1.1), estimation_error(2.6, 2.2));
    }

    fn span(ipc_alone: f64, ipc_shared: f64) -> RunSpan {
        RunSpan { app: 0, ipc_alone, ipc_shared, actual: ipc_alone / ipc_shared, truncated: false }
    }

    #[test]
    fn speedup_examples() {
        let halved = vec![span(2.0, 1.0), span(4.0, 2.0)];
        assert_eq!(weighted_speedup(&halved), 1.0);
        let unslowed = vec![span(1.0, 1.0); 4];
        assert_eq!(weighted_speedup(&unslowed), 4.0);
        assert_eq!(harmonic_speedup(&halved), 0.5);
        assert_eq!(harmonic_speedup(&unslowed[..3]), 1.0);
        assert_eq!(harmonic_speedup(&[span(1.0, 1.0), span(3.0, 1.0)]), 0.5);
        assert_eq!(maximum_slowdown(&[span(1.2, 1.0), span(3.4, 1.0)]), 3.4);
        assert_eq!(maximum_slowdown(&[span(1.7, 1.0)]), 1.7);
        assert_eq!(
            maximum_slowdown(&[span(3.4, 1.0), span(1.2, 1.0)]),
            maximum_slowdown(&[span(1.2, 1.0), span(3.4, 1.0)])
        );
    }

    #[test]
    fn weighted_speedup_is_additive_over_apps() {
        let a = vec![span(2.0, 1.5)];
        let b = vec![span(3.0, 1.0)];
        let both = vec![a[0].clone(), b[0].clone()];
        assert_eq!(weighted_speedup(&both), weighted_speedup(&a) + weighted_speedup(&b));
    }

    #[test]
    fn interpolation_is_exact_at_samples_and_linear_between() {
        let samples = vec![(0, 0), (100, 50), (200, 150)];
        assert_eq!(cycles_for_retired(&samples, 0), Some(0.0));
        assert_eq!(cycles_for_retired(&samples, 50), Some(100.0));
        assert_eq!(cycles_for_retired(&samples, 150), Some(200.0));
        assert_eq!(cycles_for_retired(&samples, 100), Some(150.0));
        assert_eq!(cycles_for_retired(&samples, 25), Some(50.0));
        assert_eq!(cycles_for_retired(&samples, 151), None);
    }

    #[test]
    fn interpolation_takes_the_first_time_work_was_reached() {
        // Retirement plateaus after cycle 100 (app finished); asking for the
        // final work count must return the finish point, not a later sample.
        let samples = vec![(0, 0), (100, 80), (200, 80), (300, 80)];
        assert_eq!(cycles_for_retired(&samples, 80), Some(100.0));
        assert_eq!(cycles_for_retired(&samples, 81), None);
    }

    #[test]
    fn aligns_each_window_against_the_alone_run() {
        // Shared run: two 1000-cycle windows retiring 100 each. Alone run
        // needed only 500 cycles per 100 instructions → slowdown 2.0.
        let shared = stats(
            vec![100, 200],
            vec![3.0, 2.2],
            vec![(0, 0), (1000, 100), (2000, 200)],
        );
        let alone = vec![(0, 0), (500, 100), (1000, 200)];
        let (recs, truncated) = align_windows(7, &shared, &alone);
        assert!(!truncated);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].app, 7);
        assert_eq!(recs[0].window, 1);
        assert!((recs[0].ipc_alone - 0.2).abs() < 1e-12);
        assert!((recs[0].ipc_shared - 0.1).abs() < 1e-12);
        assert!((recs[0].actual - 2.0).abs() < 1e-12);
        assert_eq!(recs[0].estimated, Some(3.0));
        assert!((recs[0].error_pct.unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(recs[1].window, 2);
        assert!((recs[1].error_pct.unwrap() - 10.0).abs() < 1e-9);
        // Warmup exclusion keeps only window 2.
        assert!((mean_error(&recs).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn a_window_where_the_app_finishes_is_measured_over_its_real_span() {
        // The app retires its last 40 instructions 200 cycles into window 2
        // and then sits idle until the run ends. Charging it the full window
        // would invent a 5x slowdown; the first-reach span does not.
        let shared = stats(
            vec![100, 140],
            vec![],
            vec![(0, 0), (1000, 100), (1200, 140), (2000, 140)],
        );
        let alone = vec![(0, 0), (1000, 100), (1200, 140), (2000, 140)];
        let (recs, truncated) = align_windows(1, &shared, &alone);
        assert!(!truncated);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].actual, 1.0, "a run compared with itself shows no slowdown");
        assert!((recs[1].ipc_shared - 0.2).abs() < 1e-12, "40 instructions over 200 cycles");
    }

    #[test]
    fn idle_windows_are_skipped_and_truncation_is_flagged() {
        let shared = stats(
            vec![100, 100, 300],
            vec![],
            vec![(0, 0), (1000, 100), (2000, 100), (3000, 300)],
        );
        // Alone run only ever retired 150 instructions.
        let alone = vec![(0, 0), (400, 150)];
        let (recs, truncated) = align_windows(0, &shared, &alone);
        assert!(truncated);
        assert_eq!(recs.len(), 1, "window 2 skipped (no work), window 3 truncated");
        assert_eq!(recs[0].window, 1);
        assert_eq!(mean_error(&recs), None);
    }

    #[test]
    fn run_span_excludes_the_first_window_when_it_can() {
        // Window 1 is slow in the shared run (cold caches): 50 retired in
        // 1000 cycles; window 2 retires 150 more. Alone: uniform 0.2 IPC.
        let shared = stats(
            vec![50, 200],
            vec![],
            vec![(0, 0), (1000, 50), (2000, 200)],
        );
        let alone = vec![(0, 0), (250, 50), (1000, 200)];
        let s = run_span(3, &shared, &alone);
        assert!(!s.truncated);
        assert_eq!(s.app, 3);
        // Post-warmup span: work 150, shared cycles 1000, alone cycles 750.
        assert!((s.ipc_shared - 0.15).abs() < 1e-12);
        assert!((s.ipc_alone - 0.2).abs() < 1e-12);
        assert!((s.actual - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn run_span_of_identical_runs_is_exactly_one() {
        let samples = vec![(0, 0), (1000, 123), (2000, 456), (2500, 500)];
        let shared = stats(vec![123, 456], vec![], samples.clone());
        let s = run_span(0, &shared, &samples);
        assert_eq!(s.actual, 1.0);
        assert!(!s.truncated);
    }

    #[test]
    fn run_span_with_no_work_is_neutral() {
        let shared = stats(vec![], vec![], vec![(0, 0)]);
        let s = run_span(0, &shared, &[(0, 0)]);
        assert_eq!(s.actual, 1.0);
        assert_eq!(s.ipc_shared, 0.0);
    }

    #[test]
    fn streak_means() {
        // Service log [A, A, B]: A has one run of 2, B one run of 1.
        let mut a = [0u64; 16];
        a[1] = 1;
        assert_eq!(mean_streak(&a), 2.0);
        let mut b = [0u64; 16];
        b[0] = 1;
        assert_eq!(mean_streak(&b), 1.0);
        // 20 consecutive services land in the overflow bucket, counted as 16.
        let mut long = [0u64; 16];
        long[15] = 1;
        assert_eq!(mean_streak(&long), 16.0);
        assert_eq!(mean_streak(&[0; 16]), 0.0);
    }
}
