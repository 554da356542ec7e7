//! The cycle-stepped integration kernel.
//!
//! Each cycle advances in a fixed order:
//!
//!   1. deliver memory-system completions due this cycle (cache fills and
//!      served requests, in event order),
//!   2. (folded into 1 — each completion event performs its fills and core
//!      deliveries in one step),
//!   3. tick every unfinished core in ascending app order (may look up
//!      caches and enqueue controller requests),
//!   4. boundary events: interval/quantum end runs model estimation then the
//!      policy update, an epoch end then reassigns the priority app (so a
//!      fresh allocation takes effect at the epoch that starts here), then
//!      blacklist clearing, then intensity regrouping,
//!   5. the scheduler selects and issues at most one request per channel,
//!   6. per-cycle model counters (interference/queueing cycles, outstanding
//!      hit/miss time).
//!
//! Determinism: for a fixed config and seed the whole run is reproducible —
//! events are ordered by (cycle, sequence number), all tie-breaks are
//! explicit, and the only randomness is the seeded epoch lottery.

use crate::asm::AsmApp;
use crate::cache::{AccessOutcome, AtsOutcome, AuxTagStore, Cache};
use crate::config::{ModelKind, PolicyKind, SchedPolicyKind, SimConfig, TraceSource};
use crate::cpu::{compute_alpha, AccessToken, Core, MemoryPort};
use crate::dram::{map_address, BankState, ChannelState, ServiceKind, TimingMonitor};
use crate::mise::{assign_epoch, MiseApp};
use crate::policy::{
    asm_cache_mem_step, asm_cache_partition, asm_mem_weights, asm_qos_allocate, MiseFair, MiseQos,
};
use crate::rng::SplitMix64;
use crate::sched::{
    select, BasePolicy, BlissState, CapState, QueuedRequest, SelectionCtx, StreakLog,
    STREAK_BUCKETS,
};
use crate::trace::TraceRecord;
use crate::AppId;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

/// Trace addresses live below this bit; the app id is folded in above it so
/// apps never alias in shared structures.
pub const APP_ADDRESS_SHIFT: u32 = 48;

/// Cycle-sampling period for the work-alignment samples.
pub const SAMPLE_PERIOD: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// L1 hit completes; deliver the slot.
    L1Done { app: AppId, slot: u64 },
    /// LLC hit completes; optionally fill the L1, then deliver.
    LlcDone { app: AppId, slot: u64, paddr: u64, fill_l1: bool },
    /// Memory request completes; optionally fill LLC and L1, release
    /// waiters, deliver.
    MemDone { app: AppId, slot: u64, paddr: u64, fill_l1: bool, fill_llc: bool },
}

/// Per-app results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AppStats {
    pub retired: u64,
    pub total_cycles: u64,
    pub stall_cycles: u64,
    pub finished: bool,
    pub finish_cycle: u64,
    /// Requests entering the controller queues (LLC misses).
    pub dram_requests: u64,
    /// Requests the scheduler issued to a bank.
    pub requests_issued: u64,
    /// Requests whose data came back.
    pub requests_completed: u64,
    /// (cycle, cumulative retired) pairs for work alignment: cycle 0, every
    /// SAMPLE_PERIOD cycles, window boundaries, finish, and run end.
    pub samples: Vec<(u64, u64)>,
    /// Cumulative retired count at each full window boundary.
    pub window_retired: Vec<u64>,
    /// Model slowdown estimate per full window (empty without a model).
    pub window_estimates: Vec<f64>,
    /// Consecutive-service run lengths at the controller, bucketed 1..=16+.
    pub streaks: [u64; STREAK_BUCKETS],
}

/// One model estimation record (per app, per interval or quantum).
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub app: AppId,
    pub window: u64,
    pub model: &'static str,
    pub srsr: Option<f64>,
    pub arsr: Option<f64>,
    pub alpha: Option<f64>,
    pub car_shared: Option<f64>,
    pub car_alone: Option<f64>,
    pub estimate: f64,
    pub flags: Vec<&'static str>,
    pub way_slowdowns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub cycles_run: u64,
    pub all_finished: bool,
    pub window_cycles: u64,
    pub apps: Vec<AppStats>,
    pub intervals: Vec<IntervalRecord>,
    pub ccd_violations: u64,
    pub bank_overlap_violations: u64,
    pub cap_violations: u64,
    /// Epochs assigned to each app over the run.
    pub epoch_assignments: Vec<u64>,
    pub final_weights: Vec<f64>,
    pub final_partition: Option<Vec<u32>>,
    /// Per app of interest: was its bound judged infeasible at the end.
    pub infeasible: Vec<(AppId, bool)>,
}

/// Loads every app's trace (file or synthetic) for `run`. Kept separate so
/// oracle runs can reuse already-loaded traces.
pub fn prepare_traces(cfg: &SimConfig) -> Result<Vec<Arc<Vec<TraceRecord>>>, String> {
    cfg.apps
        .iter()
        .enumerate()
        .map(|(i, app)| match &app.trace {
            TraceSource::File { path } => {
                let f = std::fs::File::open(path)
                    .map_err(|e| format!("apps[{i}].trace: cannot open {path}: {e}"))?;
                crate::trace::parse_trace(std::io::BufReader::new(f))
                    .map(Arc::new)
                    .map_err(|e| format!("apps[{i}].trace: {path}: {e}"))
            }
            TraceSource::Synthetic(spec) => Ok(Arc::new(crate::trace::generate_synthetic(spec))),
        })
        .collect()
}

/// The configuration for app `i`'s alone run: same machine, same scheduler,
/// only this app, no model/policy/overlay (none of which affect single-app
/// timing).
pub fn alone_config(cfg: &SimConfig, app: AppId) -> SimConfig {
    let mut alone = cfg.clone();
    alone.apps = vec![cfg.apps[app].clone()];
    alone.model.kind = ModelKind::None;
    alone.policy.kind = PolicyKind::None;
    alone.policy.aois.clear();
    alone.policy.static_weights.clear();
    alone.scheduler.overlay_epoch_priority = None;
    alone
}

struct Shared<'c> {
    cfg: &'c SimConfig,
    napps: usize,
    events: BinaryHeap<Reverse<(u64, u64, Event)>>,
    event_seq: u64,
    arrival_seq: u64,
    l1s: Vec<Cache>,
    llcs: Vec<Cache>,
    partition: Option<Vec<u32>>,
    queues: Vec<Vec<QueuedRequest>>,
    banks: Vec<Vec<BankState>>,
    channels: Vec<ChannelState>,
    last_issued_app: Option<AppId>,
    monitor: TimingMonitor,
    base_policy: BasePolicy,
    bliss: Option<Vec<BlissState>>,
    cap: Option<Vec<CapState>>,
    groups: Vec<u8>,
    streak_logs: Vec<StreakLog>,
    streaks: Vec<[u64; STREAK_BUCKETS]>,
    cap_violations: u64,
    // Models.
    mise: Vec<MiseApp>,
    asm: Vec<AsmApp>,
    ats: Vec<AuxTagStore>,
    outstanding_hits: Vec<u64>,
    outstanding_misses: Vec<u64>,
    priority: Option<AppId>,
    weights: Vec<f64>,
    rng: SplitMix64,
    epoch_assignments: Vec<u64>,
    // Policies.
    qos: Option<MiseQos>,
    fair: Option<MiseFair>,
    asm_qos_infeasible: bool,
    // Counters.
    dram_requests: Vec<u64>,
    requests_issued: Vec<u64>,
    requests_completed: Vec<u64>,
    // Grouping window baselines.
    group_prev_retired: Vec<u64>,
    group_prev_dram: Vec<u64>,
    // Interval baselines for alpha.
    prev_stall: Vec<u64>,
    prev_total: Vec<u64>,
    intervals: Vec<IntervalRecord>,
    window_estimates: Vec<Vec<f64>>,
    line_shift: u32,
}

impl<'c> Shared<'c> {
    fn new(cfg: &'c SimConfig) -> Self {
        let napps = cfg.apps.len();
        let channels = cfg.dram.channels as usize;
        let banks_per_channel = cfg.dram.banks_per_channel() as usize;
        let llc_count = if cfg.llc.shared { 1 } else { napps };
        let model = cfg.model.kind;
        let partitioning = cfg.partitions_cache();
        let assoc = cfg.llc.associativity;

        let weights = match cfg.policy.kind {
            PolicyKind::StaticWeights => {
                let sum: f64 = cfg.policy.static_weights.iter().sum();
                cfg.policy.static_weights.iter().map(|w| w / sum).collect()
            }
            _ => vec![1.0 / napps as f64; napps],
        };
        // Way partitioning starts from a near-equal split.
        let partition = partitioning.then(|| {
            let base = assoc / napps as u32;
            let extra = assoc as usize % napps;
            (0..napps).map(|i| base + (i < extra) as u32).collect()
        });

        Self {
            cfg,
            napps,
            events: BinaryHeap::new(),
            event_seq: 0,
            arrival_seq: 0,
            l1s: (0..napps).map(|_| Cache::new(&cfg.l1)).collect(),
            llcs: (0..llc_count).map(|_| Cache::new(&cfg.llc)).collect(),
            partition,
            queues: vec![Vec::new(); channels],
            banks: vec![vec![BankState::default(); banks_per_channel]; channels],
            channels: vec![ChannelState::default(); channels],
            last_issued_app: None,
            monitor: TimingMonitor::new(&cfg.dram),
            base_policy: match cfg.scheduler.policy {
                SchedPolicyKind::Frfcfs => BasePolicy::Frfcfs,
                SchedPolicyKind::FrfcfsCap => BasePolicy::FrfcfsCap { cap: cfg.scheduler.cap },
                SchedPolicyKind::Grouping => BasePolicy::Grouping,
                SchedPolicyKind::Bliss => BasePolicy::Bliss,
            },
            bliss: matches!(cfg.scheduler.policy, SchedPolicyKind::Bliss).then(|| {
                (0..channels).map(|_| BlissState::new(napps, cfg.scheduler.bliss.threshold)).collect()
            }),
            cap: matches!(cfg.scheduler.policy, SchedPolicyKind::FrfcfsCap)
                .then(|| (0..channels).map(|_| CapState::new(banks_per_channel)).collect()),
            groups: vec![0; napps],
            streak_logs: (0..channels).map(|_| StreakLog::new()).collect(),
            streaks: vec![[0; STREAK_BUCKETS]; napps],
            cap_violations: 0,
            mise: if model == ModelKind::Mise { vec![MiseApp::new(); napps] } else { Vec::new() },
            asm: if model == ModelKind::Asm {
                (0..napps).map(|_| AsmApp::new(assoc)).collect()
            } else {
                Vec::new()
            },
            ats: if model == ModelKind::Asm {
                let sets = cfg.llc.set_count();
                (0..napps)
                    .map(|_| AuxTagStore::new(sets, cfg.model.asm.sampled_sets as u64, assoc))
                    .collect()
            } else {
                Vec::new()
            },
            outstanding_hits: vec![0; napps],
            outstanding_misses: vec![0; napps],
            priority: None,
            weights,
            rng: SplitMix64::new(cfg.seed),
            epoch_assignments: vec![0; napps],
            qos: matches!(cfg.policy.kind, PolicyKind::MiseQos)
                .then(|| MiseQos::new(cfg.policy.aois.clone(), napps, cfg.policy.qos)),
            fair: matches!(cfg.policy.kind, PolicyKind::MiseFair)
                .then(|| MiseFair::new(napps, cfg.policy.fair)),
            asm_qos_infeasible: false,
            dram_requests: vec![0; napps],
            requests_issued: vec![0; napps],
            requests_completed: vec![0; napps],
            group_prev_retired: vec![0; napps],
            group_prev_dram: vec![0; napps],
            prev_stall: vec![0; napps],
            prev_total: vec![0; napps],
            intervals: Vec::new(),
            window_estimates: vec![Vec::new(); napps],
            line_shift: cfg.llc.line_bytes.trailing_zeros(),
        }
    }

    fn llc_index(&self, app: AppId) -> usize {
        if self.cfg.llc.shared {
            0
        } else {
            app
        }
    }

    fn push_event(&mut self, cycle: u64, ev: Event) {
        self.event_seq += 1;
        self.events.push(Reverse((cycle, self.event_seq, ev)));
    }

    /// Steps 1–2: pop and fully handle every completion due this cycle.
    fn deliver_due(&mut self, now: u64, cores: &mut [Core]) {
        while let Some(Reverse((cycle, _, _))) = self.events.peek() {
            debug_assert!(*cycle >= now, "event missed its cycle");
            if *cycle != now {
                break;
            }
            let Reverse((_, _, ev)) = self.events.pop().expect("peeked");
            match ev {
                Event::L1Done { app, slot } => cores[app].deliver(slot),
                Event::LlcDone { app, slot, paddr, fill_l1 } => {
                    self.outstanding_hits[app] -= 1;
                    if fill_l1 {
                        for (wslot, _) in self.l1s[app].complete_fill(paddr, app) {
                            cores[app].deliver(wslot);
                        }
                    }
                    cores[app].deliver(slot);
                }
                Event::MemDone { app, slot, paddr, fill_l1, fill_llc } => {
                    self.outstanding_misses[app] -= 1;
                    self.requests_completed[app] += 1;
                    if self.cfg.model.kind == ModelKind::Mise {
                        self.mise[app].served += 1;
                        if self.priority == Some(app) {
                            self.mise[app].hpe_served += 1;
                        }
                    }
                    if fill_llc {
                        let li = self.llc_index(app);
                        for (wslot, wfill_l1) in self.llcs[li].complete_fill(paddr, app) {
                            self.outstanding_hits[app] -= 1;
                            if wfill_l1 {
                                for (ws, _) in self.l1s[app].complete_fill(paddr, app) {
                                    cores[app].deliver(ws);
                                }
                            }
                            cores[app].deliver(wslot);
                        }
                    }
                    if fill_l1 {
                        for (ws, _) in self.l1s[app].complete_fill(paddr, app) {
                            cores[app].deliver(ws);
                        }
                    }
                    cores[app].deliver(slot);
                }
            }
        }
    }

    /// A core access entering the hierarchy (step 3, via the memory port).
    fn start_access(&mut self, now: u64, app: AppId, token: AccessToken) {
        let paddr = token.addr | ((app as u64) << APP_ADDRESS_SHIFT);
        match self.l1s[app].access(paddr, app, None) {
            AccessOutcome::Hit => {
                let done = now + self.cfg.l1.hit_latency;
                self.push_event(done, Event::L1Done { app, slot: token.seq });
            }
            AccessOutcome::PendingHit => {
                self.l1s[app].add_waiter(paddr, app, (token.seq, false));
            }
            AccessOutcome::Miss { allocated } => self.llc_access(now, app, token.seq, paddr, allocated),
        }
    }

    fn llc_access(&mut self, now: u64, app: AppId, slot: u64, paddr: u64, fill_l1: bool) {
        let li = self.llc_index(app);
        let own_epoch = self.priority == Some(app);
        if self.cfg.model.kind == ModelKind::Asm {
            self.asm[app].shared_accesses += 1;
            let set = self.llcs[li].set_index(paddr);
            let tag = paddr >> self.line_shift;
            if let Some(outcome) = self.ats[app].access(set, tag) {
                match outcome {
                    AtsOutcome::Hit { depth } => self.asm[app].record_stack_hit(depth),
                    AtsOutcome::Miss => self.asm[app].record_stack_miss(),
                }
                if own_epoch {
                    self.asm[app].epoch_ats_accesses_sampled += 1;
                    if matches!(outcome, AtsOutcome::Hit { .. }) {
                        self.asm[app].epoch_ats_hits_sampled += 1;
                    }
                }
            }
        }
        let quota = if self.cfg.llc.shared { self.partition.as_deref() } else { None };
        match self.llcs[li].access(paddr, app, quota) {
            AccessOutcome::Hit => {
                self.note_llc_hit(app, own_epoch);
                let done = now + self.cfg.llc.hit_latency;
                self.push_event(done, Event::LlcDone { app, slot, paddr, fill_l1 });
            }
            AccessOutcome::PendingHit => {
                self.note_llc_hit(app, own_epoch);
                self.llcs[li].add_waiter(paddr, app, (slot, fill_l1));
            }
            AccessOutcome::Miss { allocated } => {
                if self.cfg.model.kind == ModelKind::Asm {
                    self.asm[app].quantum_misses += 1;
                    if own_epoch {
                        self.asm[app].epoch_misses += 1;
                    }
                }
                self.outstanding_misses[app] += 1;
                self.dram_requests[app] += 1;
                let mapped = map_address(&self.cfg.dram, paddr);
                let ch = mapped.channel as usize;
                self.arrival_seq += 1;
                debug_assert!(
                    self.queues[ch].len() < self.cfg.scheduler.queue_capacity,
                    "request queue overflow; validation admits apps x mshr <= capacity"
                );
                self.queues[ch].push(QueuedRequest {
                    app,
                    arrival_seq: self.arrival_seq,
                    arrival_cycle: now,
                    paddr,
                    bank: mapped.bank,
                    row: mapped.row,
                    slot,
                    fill_l1,
                    fill_llc: allocated,
                });
            }
        }
    }

    fn note_llc_hit(&mut self, app: AppId, own_epoch: bool) {
        if self.cfg.model.kind == ModelKind::Asm {
            self.asm[app].quantum_hits += 1;
            if own_epoch {
                self.asm[app].epoch_hits += 1;
            }
        }
        self.outstanding_hits[app] += 1;
    }

    /// Step 4: model estimation, policy update, epoch reassignment,
    /// blacklist clearing, regrouping — in that order.
    fn boundaries(&mut self, now: u64, cores: &[Core]) {
        let window = self.cfg.window_cycles();
        if now % window == 0 && self.cfg.model.kind != ModelKind::None {
            let estimates = self.estimate_all(now / window, cores);
            self.policy_update(&estimates);
        }
        if let Some(epoch) = self.epoch_len() {
            if now % epoch == 0 {
                self.assign_priority_epoch();
            }
        }
        if matches!(self.cfg.scheduler.policy, SchedPolicyKind::Bliss)
            && now % self.cfg.scheduler.bliss.clearing_interval_cycles == 0
        {
            for b in self.bliss.as_mut().expect("bliss state exists") {
                b.clear();
            }
        }
        if matches!(self.cfg.scheduler.policy, SchedPolicyKind::Grouping)
            && now % self.cfg.scheduler.grouping.window_cycles == 0
        {
            self.regroup(cores);
        }
    }

    fn epoch_len(&self) -> Option<u64> {
        if !self.cfg.overlay_enabled() {
            return None;
        }
        match self.cfg.model.kind {
            ModelKind::Mise => Some(self.cfg.model.mise.epoch_cycles),
            ModelKind::Asm => Some(self.cfg.model.asm.epoch_cycles),
            ModelKind::None => None,
        }
    }

    fn assign_priority_epoch(&mut self) {
        let app = assign_epoch(&self.weights, self.rng.next_f64());
        self.priority = Some(app);
        self.epoch_assignments[app] += 1;
        match self.cfg.model.kind {
            ModelKind::Mise => self.mise[app].hpe_count += 1,
            ModelKind::Asm => self.asm[app].epoch_count += 1,
            ModelKind::None => {}
        }
    }

    /// Closes the interval/quantum for every app and records the results.
    fn estimate_all(&mut self, window: u64, cores: &[Core]) -> Vec<f64> {
        let mut estimates = Vec::with_capacity(self.napps);
        match self.cfg.model.kind {
            ModelKind::Mise => {
                for app in 0..self.napps {
                    let stall = cores[app].stall_cycles - self.prev_stall[app];
                    let total = cores[app].total_cycles - self.prev_total[app];
                    let alpha = compute_alpha(stall, total);
                    let out = self.mise[app].finish_interval(alpha, &self.cfg.model.mise);
                    estimates.push(out.estimate);
                    self.window_estimates[app].push(out.estimate);
                    self.intervals.push(IntervalRecord {
                        app,
                        window,
                        model: "mise",
                        srsr: Some(out.srsr),
                        arsr: Some(out.arsr),
                        alpha: Some(out.alpha),
                        car_shared: None,
                        car_alone: None,
                        estimate: out.estimate,
                        flags: out.flags,
                        way_slowdowns: Vec::new(),
                    });
                }
            }
            ModelKind::Asm => {
                let with_curves = self.cfg.partitions_cache();
                for app in 0..self.napps {
                    let out = self.asm[app].finish_quantum(
                        &self.cfg.model.asm,
                        self.cfg.llc.hit_latency,
                        with_curves,
                    );
                    estimates.push(out.estimate);
                    self.window_estimates[app].push(out.estimate);
                    self.intervals.push(IntervalRecord {
                        app,
                        window,
                        model: "asm",
                        srsr: None,
                        arsr: None,
                        alpha: None,
                        car_shared: Some(out.car_shared),
                        car_alone: Some(out.car_alone),
                        estimate: out.estimate,
                        flags: out.flags,
                        way_slowdowns: out.way_slowdowns,
                    });
                }
            }
            ModelKind::None => {}
        }
        for app in 0..self.napps {
            self.prev_stall[app] = cores[app].stall_cycles;
            self.prev_total[app] = cores[app].total_cycles;
        }
        estimates
    }

    fn policy_update(&mut self, estimates: &[f64]) {
        let assoc = self.cfg.llc.associativity;
        match self.cfg.policy.kind {
            PolicyKind::None | PolicyKind::StaticWeights => {}
            PolicyKind::MiseQos => {
                self.weights = self.qos.as_mut().expect("qos state").update(estimates);
            }
            PolicyKind::MiseFair => {
                self.weights = self.fair.as_mut().expect("fair state").update(estimates);
            }
            PolicyKind::AsmMem => {
                let ests: Vec<Option<f64>> = estimates.iter().map(|e| Some(*e)).collect();
                self.weights = asm_mem_weights(&ests).0;
            }
            PolicyKind::AsmCache => {
                let curves = self.latest_curves();
                self.partition = Some(asm_cache_partition(&curves, assoc).ways);
            }
            PolicyKind::AsmQos => {
                let curves = self.latest_curves();
                let aoi = self.cfg.policy.aois[0];
                let (decision, infeasible) =
                    asm_qos_allocate(aoi.app, aoi.bound, &curves, assoc);
                self.partition = Some(decision.ways);
                self.asm_qos_infeasible = infeasible;
            }
            PolicyKind::AsmCacheMem => {
                let curves = self.latest_curves();
                let (decision, weights, _) = asm_cache_mem_step(&curves, assoc);
                self.partition = Some(decision.ways);
                self.weights = weights;
            }
        }
    }

    /// Per-app way-slowdown curves from the quanta just closed.
    fn latest_curves(&self) -> Vec<Vec<f64>> {
        (0..self.napps)
            .map(|app| {
                self.intervals
                    .iter()
                    .rev()
                    .find(|r| r.app == app)
                    .map(|r| r.way_slowdowns.clone())
                    .expect("curves recorded at this boundary")
            })
            .collect()
    }

    fn regroup(&mut self, cores: &[Core]) {
        for app in 0..self.napps {
            let d_requests = self.dram_requests[app] - self.group_prev_dram[app];
            let d_retired = cores[app].retired - self.group_prev_retired[app];
            let mpki = if d_retired > 0 {
                d_requests as f64 * 1000.0 / d_retired as f64
            } else {
                0.0
            };
            self.groups[app] = (mpki > self.cfg.scheduler.grouping.mpki_threshold) as u8;
            self.group_prev_dram[app] = self.dram_requests[app];
            self.group_prev_retired[app] = cores[app].retired;
        }
    }

    /// Step 5: per channel, pick and issue at most one request.
    fn issue(&mut self, now: u64) {
        let timing = self.cfg.dram.timing;
        let banks_per_channel = self.cfg.dram.banks_per_channel() as usize;
        for ch in 0..self.channels.len() {
            let ctx = SelectionCtx {
                policy: self.base_policy,
                bliss: self.bliss.as_ref().map(|b| &b[ch]),
                cap: self.cap.as_ref().map(|c| &c[ch]),
                groups: matches!(self.base_policy, BasePolicy::Grouping)
                    .then_some(self.groups.as_slice()),
                priority_app: self.priority,
            };
            let Some(idx) =
                select(&self.queues[ch], &self.banks[ch], &self.channels[ch], &timing, now, &ctx)
            else {
                continue;
            };
            let req = self.queues[ch].swap_remove(idx);
            let bank_idx = req.bank as usize;
            let row_hit = self.banks[ch][bank_idx].classify(req.row) == ServiceKind::RowHit;

            // Consecutive row-hit cap monitor: issuing a row hit past the cap
            // is a violation whenever another app is waiting on this bank.
            if let Some(cap_states) = &self.cap {
                if let BasePolicy::FrfcfsCap { cap } = self.base_policy {
                    if row_hit
                        && cap_states[ch].streak_of(bank_idx, req.app) >= cap
                        && self.queues[ch].iter().any(|r| r.bank == req.bank && r.app != req.app)
                    {
                        self.cap_violations += 1;
                    }
                }
            }

            let (_, completion) = self.banks[ch][bank_idx].service(&timing, now, req.row);
            self.monitor.record_issue(
                &timing,
                ch,
                ch * banks_per_channel + bank_idx,
                now,
                completion,
            );
            self.channels[ch].last_issue = Some(now);
            self.last_issued_app = Some(req.app);
            if let Some(b) = self.bliss.as_mut() {
                b[ch].on_issue(req.app);
            }
            if let Some(c) = self.cap.as_mut() {
                c[ch].on_issue(bank_idx, req.app, row_hit);
            }
            self.streak_logs[ch].on_issue(req.app, &mut self.streaks);
            self.requests_issued[req.app] += 1;
            self.push_event(
                completion,
                Event::MemDone {
                    app: req.app,
                    slot: req.slot,
                    paddr: req.paddr,
                    fill_l1: req.fill_l1,
                    fill_llc: req.fill_llc,
                },
            );
        }
    }

    /// Step 6: per-cycle model counters.
    fn model_cycle_counters(&mut self) {
        match self.cfg.model.kind {
            ModelKind::None => {}
            ModelKind::Mise => {
                if let Some(p) = self.priority {
                    if self.waiting_behind_other(p) {
                        self.mise[p].interference_cycles += 1;
                    }
                }
            }
            ModelKind::Asm => {
                for app in 0..self.napps {
                    if self.outstanding_hits[app] > 0 {
                        self.asm[app].quantum_hit_time += 1;
                    }
                    if self.outstanding_misses[app] > 0 {
                        self.asm[app].quantum_miss_time += 1;
                    }
                }
                if let Some(p) = self.priority {
                    if self.outstanding_hits[p] > 0 {
                        self.asm[p].epoch_hit_time += 1;
                    }
                    if self.outstanding_misses[p] > 0 {
                        self.asm[p].epoch_miss_time += 1;
                    }
                    if self.waiting_behind_other(p) {
                        self.asm[p].queueing_cycles += 1;
                    }
                }
            }
        }
    }

    /// True when `app` has a request waiting in some request queue and the
    /// most recently issued command — to any bank on any channel — belonged
    /// to a different app.
    fn waiting_behind_other(&self, app: AppId) -> bool {
        self.last_issued_app.is_some_and(|a| a != app)
            && self.queues.iter().any(|q| q.iter().any(|r| r.app == app))
    }
}

struct PortCtx<'a, 'c> {
    shared: &'a mut Shared<'c>,
    app: AppId,
}

impl MemoryPort for PortCtx<'_, '_> {
    fn start_access(&mut self, now: u64, token: AccessToken) {
        self.shared.start_access(now, self.app, token);
    }
}

fn record_sample(samples: &mut Vec<(u64, u64)>, cycle: u64, retired: u64) {
    if samples.last().map(|&(c, _)| c) == Some(cycle) {
        return;
    }
    samples.push((cycle, retired));
}

/// Runs one simulation to completion (all traces drained) or to
/// `run_length_cycles`, whichever comes first.
pub fn run(cfg: &SimConfig, traces: &[Arc<Vec<TraceRecord>>]) -> RunResult {
    assert_eq!(cfg.apps.len(), traces.len(), "one trace per app");
    let napps = cfg.apps.len();
    let window = cfg.window_cycles();

    let mut cores: Vec<Core> =
        traces.iter().map(|t| Core::new(cfg.core, Arc::clone(t))).collect();
    let mut shared = Shared::new(cfg);
    let mut samples: Vec<Vec<(u64, u64)>> = vec![vec![(0, 0)]; napps];
    let mut window_retired: Vec<Vec<u64>> = vec![Vec::new(); napps];

    // The first epoch starts at cycle 0.
    if shared.epoch_len().is_some() {
        shared.assign_priority_epoch();
    }

    let mut cycles_run = cfg.run_length_cycles;
    for now in 1..=cfg.run_length_cycles {
        shared.deliver_due(now, &mut cores);

        for (app, core) in cores.iter_mut().enumerate() {
            if core.finished {
                continue;
            }
            core.tick(now, &mut PortCtx { shared: &mut shared, app });
            if core.finished {
                record_sample(&mut samples[app], now, core.retired);
            }
        }

        if now % SAMPLE_PERIOD == 0 || now % window == 0 {
            for (app, core) in cores.iter().enumerate() {
                record_sample(&mut samples[app], now, core.retired);
            }
            if now % window == 0 {
                for (app, core) in cores.iter().enumerate() {
                    window_retired[app].push(core.retired);
                }
            }
        }
        shared.boundaries(now, &cores);
        shared.issue(now);
        shared.model_cycle_counters();

        if cores.iter().all(|c| c.finished) {
            cycles_run = now;
            break;
        }
    }

    for (app, core) in cores.iter().enumerate() {
        record_sample(&mut samples[app], cycles_run, core.retired);
    }
    let mut streak_final = shared.streaks;
    for log in &mut shared.streak_logs {
        log.flush(&mut streak_final);
    }

    let mut infeasible = Vec::new();
    if let Some(q) = &shared.qos {
        for (i, aoi) in q.aois.iter().enumerate() {
            infeasible.push((aoi.app, q.infeasible[i]));
        }
    }
    if matches!(cfg.policy.kind, PolicyKind::AsmQos) {
        infeasible.push((cfg.policy.aois[0].app, shared.asm_qos_infeasible));
    }

    let apps = cores
        .iter()
        .enumerate()
        .map(|(app, core)| AppStats {
            retired: core.retired,
            total_cycles: core.total_cycles,
            stall_cycles: core.stall_cycles,
            finished: core.finished,
            finish_cycle: core.finish_cycle,
            dram_requests: shared.dram_requests[app],
            requests_issued: shared.requests_issued[app],
            requests_completed: shared.requests_completed[app],
            samples: std::mem::take(&mut samples[app]),
            window_retired: std::mem::take(&mut window_retired[app]),
            window_estimates: std::mem::take(&mut shared.window_estimates[app]),
            streaks: streak_final[app],
        })
        .collect();

    RunResult {
        cycles_run,
        all_finished: cores.iter().all(|c| c.finished),
        window_cycles: window,
        apps,
        intervals: shared.intervals,
        ccd_violations: shared.monitor.ccd_violations,
        bank_overlap_violations: shared.monitor.bank_overlap_violations,
        cap_violations: shared.cap_violations,
        epoch_assignments: shared.epoch_assignments,
        final_weights: shared.weights,
        final_partition: shared.partition,
        infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AppConfig, ModelKind, PolicyKind};
    use crate::trace::SyntheticSpec;

    fn synthetic_app(seed: u64, gap: u32, records: u64, footprint: u64) -> AppConfig {
        AppConfig {
            trace: TraceSource::Synthetic(SyntheticSpec {
                footprint_bytes: footprint,
                stride_bytes: 64,
                compute_gap: gap,
                record_count: records,
                reuse_fraction: 0.0,
                seed,
                hot_bytes: None,
            }),
        }
    }

    fn file_trace(records: Vec<TraceRecord>) -> Vec<Arc<Vec<TraceRecord>>> {
        vec![Arc::new(records)]
    }

    fn rec(gap: u32, addr: u64) -> TraceRecord {
        TraceRecord { gap, addr, is_write: false }
    }

    #[test]
    fn two_access_run_matches_hand_trace() {
        // Two reads to consecutive lines of the same row. Both miss L1+LLC
        // and enqueue in cycle 1. The first activates (closed row, 20
        // cycles, done at 21); the second must wait for the bank and then
        // row-hits (12 cycles, 33). Retirement: first at 21, second at 33.
        let mut cfg = SimConfig { apps: vec![synthetic_app(0, 0, 1, 64)], ..SimConfig::default() };
        cfg.run_length_cycles = 1000;
        let traces = file_trace(vec![rec(0, 0x00), rec(0, 0x40)]);
        let out = run(&cfg, &traces);
        let a = &out.apps[0];
        assert!(a.finished);
        assert_eq!(a.retired, 2);
        assert_eq!(a.finish_cycle, 33);
        assert_eq!(a.total_cycles, 33);
        // Head blocked in 1..=20 and 22..=32.
        assert_eq!(a.stall_cycles, 31);
        assert_eq!(a.requests_issued, 2);
        assert_eq!(a.requests_completed, 2);
        // One consecutive-service run of length 2.
        let mut expected = [0u64; STREAK_BUCKETS];
        expected[1] = 1;
        assert_eq!(a.streaks, expected);
        assert_eq!(out.ccd_violations, 0);
        assert_eq!(out.bank_overlap_violations, 0);
        assert_eq!(out.cycles_run, 33);
    }

    #[test]
    fn l1_and_llc_hits_have_their_configured_latencies() {
        // Access the same line three times with long compute gaps so each
        // access is isolated: miss (21 cycles of memory), then L1 hit
        // (1 cycle). Then a line that aliases nothing: LLC behavior checked
        // via a second app-free rerun is overkill; the L1-hit latency is the
        // observable here.
        let mut cfg = SimConfig { apps: vec![synthetic_app(0, 0, 1, 64)], ..SimConfig::default() };
        cfg.run_length_cycles = 10_000;
        let traces = file_trace(vec![rec(0, 0x00), rec(200, 0x00)]);
        let out = run(&cfg, &traces);
        let a = &out.apps[0];
        assert!(a.finished);
        assert_eq!(a.retired, 202);
        // Timeline: access 1 done at 21 (20-cycle closed-row miss).
        // 200 compute instructions retire over ceil(200/3) = 67 cycles
        // (cycles 22..=88), the second access issued in cycle 21 already
        // (MSHRs free) and hit pending/valid L1 state... it must complete
        // well before the window drains, so no stall after the first.
        assert_eq!(a.stall_cycles, 20);
        assert_eq!(a.dram_requests, 1, "second access hits the cache");
    }

    #[test]
    fn identical_runs_are_identical() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(1, 3, 4000, 1 << 20), synthetic_app(2, 40, 2000, 1 << 18)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 300_000;
        cfg.model.kind = ModelKind::Mise;
        cfg.model.mise.interval_cycles = 100_000;
        cfg.model.mise.epoch_cycles = 1_000;
        cfg.scheduler.policy = SchedPolicyKind::Bliss;
        let traces = prepare_traces(&cfg).unwrap();
        let a = run(&cfg, &traces);
        let b = run(&cfg, &traces);
        assert_eq!(a, b);
    }

    #[test]
    fn every_enqueued_request_completes_on_a_drained_run() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(3, 10, 3000, 1 << 20), synthetic_app(4, 10, 3000, 1 << 20)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 2_000_000;
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        assert!(out.all_finished);
        for a in &out.apps {
            assert_eq!(a.dram_requests, a.requests_issued);
            assert_eq!(a.requests_issued, a.requests_completed);
            let streak_total: u64 =
                a.streaks.iter().enumerate().map(|(i, c)| ((i + 1) as u64) * c).sum();
            // The 16+ bucket undercounts long runs, so totals can only match
            // when every run is shorter; with two interleaved apps that is
            // the practical case, and the weaker bound always holds.
            assert!(streak_total <= a.requests_issued);
            assert!(a.streaks.iter().sum::<u64>() > 0);
        }
    }

    #[test]
    fn priority_epochs_cover_the_interval_exactly() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(5, 5, 50_000, 1 << 20), synthetic_app(6, 5, 50_000, 1 << 20)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 200_000;
        cfg.model.kind = ModelKind::Mise;
        cfg.model.mise.interval_cycles = 100_000;
        cfg.model.mise.epoch_cycles = 1_000;
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        // Two intervals of 100 epochs each; the trailing boundary assignment
        // lands outside any estimated interval.
        assert_eq!(out.epoch_assignments.iter().sum::<u64>(), 201);
        assert_eq!(out.intervals.len(), 4);
        for r in &out.intervals {
            assert_eq!(r.model, "mise");
            assert!(r.srsr.is_some() && r.alpha.is_some());
        }
    }

    #[test]
    fn static_weights_skew_the_lottery() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(7, 5, 9000, 1 << 20), synthetic_app(8, 5, 9000, 1 << 20)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 400_000;
        cfg.model.kind = ModelKind::Mise;
        cfg.model.mise.interval_cycles = 200_000;
        cfg.model.mise.epoch_cycles = 100;
        cfg.policy.kind = PolicyKind::StaticWeights;
        cfg.policy.static_weights = vec![0.75, 0.25];
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        let total: u64 = out.epoch_assignments.iter().sum();
        // One assignment at setup plus one per elapsed epoch boundary.
        assert_eq!(total, out.cycles_run / 100 + 1);
        assert!(total >= 1000, "workload too short for the statistical check");
        let f0 = out.epoch_assignments[0] as f64 / total as f64;
        let sigma = (0.75f64 * 0.25 / total as f64).sqrt();
        assert!((f0 - 0.75).abs() <= 3.0 * sigma, "f0 = {f0}, sigma = {sigma}");
    }

    #[test]
    fn asm_partitioning_keeps_way_sums_at_associativity() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(9, 2, 40_000, 1 << 22), synthetic_app(10, 2, 40_000, 1 << 14)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 300_000;
        cfg.model.kind = ModelKind::Asm;
        cfg.model.asm.quantum_cycles = 100_000;
        cfg.model.asm.epoch_cycles = 1_000;
        cfg.policy.kind = PolicyKind::AsmCache;
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        let part = out.final_partition.expect("partitioning active");
        assert_eq!(part.iter().sum::<u32>(), cfg.llc.associativity);
        assert!(part.iter().all(|w| *w >= 1));
        for r in &out.intervals {
            assert_eq!(r.model, "asm");
            assert_eq!(r.way_slowdowns.len(), cfg.llc.associativity as usize);
        }
    }

    #[test]
    fn grouping_separates_streaming_from_compute() {
        let mut cfg = SimConfig {
            apps: vec![
                synthetic_app(11, 0, 60_000, 1 << 22),  // memory hog
                synthetic_app(12, 400, 1_000, 1 << 14), // compute-bound
            ],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 400_000;
        cfg.scheduler.policy = SchedPolicyKind::Grouping;
        cfg.scheduler.grouping.window_cycles = 100_000;
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        // No panic and deterministic behavior is the main claim; the hog
        // must see DRAM far more often than the compute app.
        assert!(out.apps[0].dram_requests > 50 * out.apps[1].dram_requests.max(1));
    }

    #[test]
    fn alone_config_strips_competition_knobs() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(1, 3, 100, 1 << 16), synthetic_app(2, 3, 100, 1 << 16)],
            ..SimConfig::default()
        };
        cfg.model.kind = ModelKind::Mise;
        cfg.policy.kind = PolicyKind::MiseQos;
        cfg.policy.aois = vec![crate::policy::AoiSpec { app: 1, bound: 2.0 }];
        let alone = alone_config(&cfg, 1);
        assert_eq!(alone.apps.len(), 1);
        assert_eq!(alone.model.kind, ModelKind::None);
        assert_eq!(alone.policy.kind, PolicyKind::None);
        assert!(alone.policy.aois.is_empty());
        assert!(!alone.overlay_enabled());
        assert_eq!(alone.seed, cfg.seed);
        assert_eq!(alone.validate(), Ok(()));
    }

    #[test]
    fn single_app_timing_is_model_invariant() {
        // The alone-run oracle depends on a single-app run timing exactly
        // the same with and without the model+overlay attached.
        let base = SimConfig {
            apps: vec![synthetic_app(13, 4, 20_000, 1 << 20)],
            run_length_cycles: 400_000,
            ..SimConfig::default()
        };
        let traces = prepare_traces(&base).unwrap();
        let plain = run(&base, &traces);

        let mut modeled = base.clone();
        modeled.model.kind = ModelKind::Mise;
        modeled.model.mise.interval_cycles = 100_000;
        modeled.model.mise.epoch_cycles = 1_000;
        let with_model = run(&modeled, &traces);

        assert_eq!(plain.apps[0].retired, with_model.apps[0].retired);
        assert_eq!(plain.apps[0].finish_cycle, with_model.apps[0].finish_cycle);
        assert_eq!(plain.apps[0].samples, with_model.apps[0].samples);
        assert_eq!(plain.apps[0].stall_cycles, with_model.apps[0].stall_cycles);
    }

    #[test]
    fn windows_record_cumulative_retirement() {
        let mut cfg = SimConfig {
            apps: vec![synthetic_app(14, 10, 100_000, 1 << 20)],
            ..SimConfig::default()
        };
        cfg.run_length_cycles = 300_000;
        cfg.model.kind = ModelKind::Mise;
        cfg.model.mise.interval_cycles = 100_000;
        cfg.model.mise.epoch_cycles = 1_000;
        let traces = prepare_traces(&cfg).unwrap();
        let out = run(&cfg, &traces);
        let a = &out.apps[0];
        assert_eq!(a.window_retired.len(), 3);
        assert!(a.window_retired.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.window_estimates.len(), 3);
        // Window boundaries are also alignment samples.
        for (i, r) in a.window_retired.iter().enumerate() {
            let boundary = (i as u64 + 1) * 100_000;
            assert!(a.samples.contains(&(boundary, *r)));
        }
    }
}
