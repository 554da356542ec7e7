//! Trace-driven core model.
//!
//! Each core retires up to `issue_width` instructions per cycle from a
//! fixed-size instruction window fed by its trace. Compute instructions are
//! always ready; a memory instruction retires only once its access has
//! completed. Memory accesses issue in trace order whenever an MSHR is free,
//! so up to `mshr_count` accesses overlap. Runs of compute instructions are
//! stored as single window segments, which keeps the per-cycle work constant
//! even for very sparse traces.
//!
//! The window is primed from the trace at construction, and a tick runs
//! retire, then refill, then issue. Under that order a pure-compute stream
//! of 3k instructions retires in exactly k cycles at width 3.

use crate::trace::TraceRecord;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct CoreConfig {
    pub issue_width: u32,
    pub window_size: u32,
    pub mshr_count: u32,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self { issue_width: 3, window_size: 128, mshr_count: 8 }
    }
}

/// A memory access leaving the core. `seq` identifies the window slot and
/// comes back through `Core::deliver`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessToken {
    pub seq: u64,
    pub addr: u64,
    pub is_write: bool,
}

/// Where the core hands accesses off to. The simulator routes them through
/// the cache hierarchy; tests plug in fixed-latency stubs.
pub trait MemoryPort {
    fn start_access(&mut self, now: u64, token: AccessToken);
}

#[derive(Debug)]
enum Seg {
    Compute(u32),
    Mem { seq: u64 },
}

#[derive(Debug)]
pub struct Core {
    cfg: CoreConfig,
    trace: Arc<Vec<TraceRecord>>,
    rec_idx: usize,
    gap_left: u32,
    next_seq: u64,
    window: VecDeque<Seg>,
    occupancy: u32,
    pending_issue: VecDeque<AccessToken>,
    // Completed-but-unretired access seqs; bounded by mshr_count.
    completed: Vec<u64>,
    pub in_flight: u32,
    pub retired: u64,
    pub mem_retired: u64,
    pub total_cycles: u64,
    pub stall_cycles: u64,
    pub finished: bool,
    pub finish_cycle: u64,
}

impl Core {
    pub fn new(cfg: CoreConfig, trace: Arc<Vec<TraceRecord>>) -> Self {
        let gap_left = trace.first().map(|r| r.gap).unwrap_or(0);
        let mut c = Self {
            cfg,
            trace,
            rec_idx: 0,
            gap_left,
            next_seq: 0,
            window: VecDeque::new(),
            occupancy: 0,
            pending_issue: VecDeque::new(),
            completed: Vec::new(),
            in_flight: 0,
            retired: 0,
            mem_retired: 0,
            total_cycles: 0,
            stall_cycles: 0,
            finished: false,
            finish_cycle: 0,
        };
        c.refill();
        c.update_finished(0);
        c
    }

    fn trace_done(&self) -> bool {
        self.rec_idx >= self.trace.len()
    }

    fn refill(&mut self) {
        while self.occupancy < self.cfg.window_size && !self.trace_done() {
            if self.gap_left > 0 {
                let k = self.gap_left.min(self.cfg.window_size - self.occupancy);
                self.gap_left -= k;
                self.occupancy += k;
                if let Some(Seg::Compute(n)) = self.window.back_mut() {
                    *n += k;
                } else {
                    self.window.push_back(Seg::Compute(k));
                }
            } else {
                let rec = self.trace[self.rec_idx];
                self.next_seq += 1;
                let seq = self.next_seq;
                self.window.push_back(Seg::Mem { seq });
                self.occupancy += 1;
                self.pending_issue.push_back(AccessToken {
                    seq,
                    addr: rec.addr,
                    is_write: rec.is_write,
                });
                self.rec_idx += 1;
                self.gap_left = self.trace.get(self.rec_idx).map(|r| r.gap).unwrap_or(0);
            }
        }
    }

    /// Marks an in-flight access complete. Must be called before the tick of
    /// the cycle in which the instruction may retire.
    pub fn deliver(&mut self, seq: u64) {
        debug_assert!(self.in_flight > 0);
        self.in_flight -= 1;
        self.completed.push(seq);
    }

    fn update_finished(&mut self, now: u64) {
        if !self.finished && self.trace_done() && self.window.is_empty() {
            self.finished = true;
            self.finish_cycle = now;
        }
    }

    /// One cycle: retire, refill, issue. Callers skip finished cores.
    pub fn tick(&mut self, now: u64, port: &mut impl MemoryPort) {
        debug_assert!(!self.finished);
        let mut budget = self.cfg.issue_width;
        let mut retired_now = 0u32;
        while budget > 0 {
            match self.window.front_mut() {
                None => break,
                Some(Seg::Compute(n)) => {
                    let k = (*n).min(budget);
                    *n -= k;
                    budget -= k;
                    retired_now += k;
                    if *n == 0 {
                        self.window.pop_front();
                    }
                }
                Some(Seg::Mem { seq }) => {
                    let seq = *seq;
                    match self.completed.iter().position(|&s| s == seq) {
                        Some(i) => {
                            self.completed.swap_remove(i);
                            self.window.pop_front();
                            budget -= 1;
                            retired_now += 1;
                            self.mem_retired += 1;
                        }
                        None => break,
                    }
                }
            }
        }
        self.occupancy -= retired_now;
        self.retired += retired_now as u64;
        // A stall cycle: nothing retired while an unfinished memory access
        // blocks the window head.
        if retired_now == 0 && matches!(self.window.front(), Some(Seg::Mem { .. })) {
            self.stall_cycles += 1;
        }

        self.refill();

        while self.in_flight < self.cfg.mshr_count {
            match self.pending_issue.pop_front() {
                Some(tok) => {
                    self.in_flight += 1;
                    port.start_access(now, tok);
                }
                None => break,
            }
        }

        self.total_cycles += 1;
        self.update_finished(now);
    }

    pub fn ipc(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.retired as f64 / self.total_cycles as f64
        }
    }
}

/// Stall fraction over an observation span.
pub fn compute_alpha(stall_cycles: u64, total_cycles: u64) -> f64 {
    if total_cycles == 0 {
        0.0
    } else {
        stall_cycles as f64 / total_cycles as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed-latency memory stub; `None` latency never completes.
    struct StubPort {
        latency: u64,
        pending: Vec<(u64, u64)>, // (done_cycle, seq)
        issue_log: Vec<(u64, u64)>, // (cycle, seq)
    }

    impl StubPort {
        fn new(latency: u64) -> Self {
            Self { latency, pending: Vec::new(), issue_log: Vec::new() }
        }
        fn deliver_due(&mut self, now: u64, core: &mut Core) {
            let mut i = 0;
            while i < self.pending.len() {
                if self.pending[i].0 == now {
                    let (_, seq) = self.pending.swap_remove(i);
                    core.deliver(seq);
                } else {
                    i += 1;
                }
            }
        }
    }

    impl MemoryPort for StubPort {
        fn start_access(&mut self, now: u64, token: AccessToken) {
            self.issue_log.push((now, token.seq));
            self.pending.push((now + self.latency, token.seq));
        }
    }

    fn run(core: &mut Core, port: &mut StubPort, cycles: u64) {
        for now in 1..=cycles {
            if core.finished {
                break;
            }
            port.deliver_due(now, core);
            core.tick(now, port);
        }
    }

    fn rec(gap: u32, addr: u64) -> TraceRecord {
        TraceRecord { gap, addr, is_write: false }
    }

    #[test]
    fn pure_compute_retires_at_full_width() {
        // 300 compute instructions at width 3: exactly 100 cycles, IPC 3.0,
        // no access retired yet.
        let core_cfg = CoreConfig::default();
        let trace = Arc::new(vec![rec(300, 0x40)]);
        let mut core = Core::new(core_cfg, trace);
        let mut port = StubPort::new(1_000_000);
        run(&mut core, &mut port, 100);
        assert_eq!(core.retired, 300);
        assert_eq!(core.total_cycles, 100);
        assert_eq!(core.mem_retired, 0);
        assert!((core.ipc() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn blocked_access_counts_stall_cycles() {
        // One access, 10-cycle memory: retirement blocked 10 cycles.
        let trace = Arc::new(vec![rec(0, 0x80)]);
        let mut core = Core::new(CoreConfig::default(), trace);
        let mut port = StubPort::new(10);
        run(&mut core, &mut port, 50);
        assert!(core.finished);
        assert_eq!(core.retired, 1);
        assert_eq!(core.stall_cycles, 10);
        assert_eq!(core.total_cycles, 11);
    }

    #[test]
    fn single_mshr_serializes_accesses() {
        let trace = Arc::new(vec![rec(0, 0x0), rec(0, 0x40)]);
        let cfg = CoreConfig { mshr_count: 1, ..CoreConfig::default() };
        let mut core = Core::new(cfg, trace);
        let mut port = StubPort::new(10);
        run(&mut core, &mut port, 100);
        assert!(core.finished);
        // First access issues on cycle 1 and completes at 11; only then may
        // the second issue.
        assert_eq!(port.issue_log[0].0, 1);
        assert_eq!(port.issue_log[1].0, 11);
    }

    #[test]
    fn wide_mshrs_overlap_accesses() {
        let trace = Arc::new(vec![rec(0, 0x0), rec(0, 0x40), rec(0, 0x80)]);
        let cfg = CoreConfig { mshr_count: 8, ..CoreConfig::default() };
        let mut core = Core::new(cfg, trace);
        let mut port = StubPort::new(10);
        run(&mut core, &mut port, 100);
        // All three issue in cycle 1.
        assert!(port.issue_log.iter().all(|&(c, _)| c == 1));
        assert_eq!(core.total_cycles, 11);
    }

    #[test]
    fn fast_memory_keeps_ipc_at_width_for_gap_traces() {
        // Gap-dominated trace with 1-cycle memory: the window hides the
        // latency entirely and IPC equals the issue width.
        let trace = Arc::new(vec![rec(29, (0..100u64).sum::<u64>()); 100]);
        let mut core = Core::new(CoreConfig::default(), trace);
        let mut port = StubPort::new(1);
        run(&mut core, &mut port, 10_000);
        assert!(core.finished);
        assert_eq!(core.retired, 3000);
        assert_eq!(core.total_cycles, 1000);
        assert_eq!(core.stall_cycles, 0);
    }

    #[test]
    fn finishes_only_when_trace_and_window_drain() {
        let trace = Arc::new(vec![rec(1, 0x0)]);
        let mut core = Core::new(CoreConfig::default(), trace);
        let mut port = StubPort::new(2);
        assert!(!core.finished);
        run(&mut core, &mut port, 100);
        assert!(core.finished);
        assert_eq!(core.retired, 2);
        assert_eq!(core.in_flight, 0);
    }

    #[test]
    fn empty_trace_is_finished_immediately() {
        let core = Core::new(CoreConfig::default(), Arc::new(vec![]));
        assert!(core.finished);
    }

    #[test]
    fn alpha_is_the_stall_fraction() {
        assert_eq!(compute_alpha(2_500_000, 5_000_000), 0.5);
        assert_eq!(compute_alpha(0, 0), 0.0);
    }
}
