//! Memory request scheduling policies.
//!
//! All policies pick among issuable requests (bank free, channel tCCD gap
//! satisfied) by a lexicographic key; lower wins:
//!
//!   frfcfs       (row hit?, arrival)
//!   frfcfs_cap   row hits from an app with `cap` consecutive row-hit
//!                services on that bank are demoted below everything else
//!                (oldest first among the demoted)
//!   grouping     (intensity group, row hit?, arrival); the low-MPKI group
//!                strictly first
//!   bliss        (blacklisted?, row hit?, arrival)
//!
//! An optional epoch-priority overlay puts the current high-priority app's
//! requests first (FRFCFS among them) and applies the base policy to the
//! rest, so it is work conserving.

use crate::dram::{BankState, ChannelState, DramTiming, ServiceKind};
use crate::AppId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasePolicy {
    Frfcfs,
    FrfcfsCap { cap: u32 },
    Grouping,
    Bliss,
}

#[derive(Debug, Clone)]
pub struct QueuedRequest {
    pub app: AppId,
    pub arrival_seq: u64,
    pub arrival_cycle: u64,
    pub paddr: u64,
    /// Bank within the channel (rank folded in).
    pub bank: u32,
    pub row: u64,
    /// Core window slot to complete on fill.
    pub slot: u64,
    pub fill_l1: bool,
    pub fill_llc: bool,
}

/// Blacklisting state, one per channel: the app that last had a request
/// served, how many of its requests were served consecutively, and the
/// blacklist vector. Counter semantics: serving the same app increments the
/// counter; once it reaches the threshold the app is blacklisted and the
/// counter restarts, so the threshold+1-th consecutive service is the one
/// that trips the blacklist.
#[derive(Debug, Clone)]
pub struct BlissState {
    pub register: Option<AppId>,
    pub counter: u32,
    pub blacklist: Vec<bool>,
    pub threshold: u32,
}

impl BlissState {
    pub fn new(apps: usize, threshold: u32) -> Self {
        Self { register: None, counter: 0, blacklist: vec![false; apps], threshold }
    }

    pub fn on_issue(&mut self, app: AppId) {
        if self.register == Some(app) {
            self.counter += 1;
            if self.counter >= self.threshold {
                self.blacklist[app] = true;
                self.counter = 0;
            }
        } else {
            self.register = Some(app);
            self.counter = 0;
        }
    }

    /// Synchronous clearing: blacklist bits reset, register and counter keep
    /// their values.
    pub fn clear(&mut self) {
        self.blacklist.iter_mut().for_each(|b| *b = false);
    }
}

/// Per-bank consecutive row-hit streaks for frfcfs_cap. Only the app served
/// last on a bank can hold a streak; any other service resets it.
#[derive(Debug, Clone)]
pub struct CapState {
    last_app: Vec<Option<AppId>>,
    streak: Vec<u32>,
}

impl CapState {
    pub fn new(banks: usize) -> Self {
        Self { last_app: vec![None; banks], streak: vec![0; banks] }
    }

    pub fn on_issue(&mut self, bank: usize, app: AppId, row_hit: bool) {
        if row_hit && self.last_app[bank] == Some(app) {
            self.streak[bank] += 1;
        } else {
            self.last_app[bank] = Some(app);
            self.streak[bank] = if row_hit { 1 } else { 0 };
        }
    }

    pub fn streak_of(&self, bank: usize, app: AppId) -> u32 {
        if self.last_app[bank] == Some(app) {
            self.streak[bank]
        } else {
            0
        }
    }

    pub fn is_capped(&self, bank: usize, app: AppId, cap: u32) -> bool {
        self.streak_of(bank, app) >= cap
    }
}

/// Everything a selection decision needs beyond the queue itself.
pub struct SelectionCtx<'a> {
    pub policy: BasePolicy,
    pub bliss: Option<&'a BlissState>,
    pub cap: Option<&'a CapState>,
    /// Intensity group per app (0 = low MPKI, 1 = high), for grouping.
    pub groups: Option<&'a [u8]>,
    pub priority_app: Option<AppId>,
}

/// Picks the next request to issue on one channel, or None if nothing is
/// issuable this cycle. Returns an index into `queue`.
pub fn select(
    queue: &[QueuedRequest],
    banks: &[BankState],
    channel: &ChannelState,
    timing: &DramTiming,
    now: u64,
    ctx: &SelectionCtx,
) -> Option<usize> {
    if !channel.ccd_ok(timing, now) {
        return None;
    }
    let mut best: Option<(([u8; 3], u64), usize)> = None;
    for (i, req) in queue.iter().enumerate() {
        let bank = &banks[req.bank as usize];
        if !bank.is_free(now) {
            continue;
        }
        let row_hit = bank.classify(req.row) == ServiceKind::RowHit;
        let miss = !row_hit as u8;
        let key = if ctx.priority_app == Some(req.app) {
            [0u8, 0, miss]
        } else {
            let off = ctx.priority_app.is_some() as u8;
            match ctx.policy {
                BasePolicy::Frfcfs => [off, 0, miss],
                BasePolicy::FrfcfsCap { cap } => {
                    let capped = row_hit
                        && ctx.cap.map_or(false, |c| c.is_capped(req.bank as usize, req.app, cap));
                    if capped {
                        [off, 1, 0] // oldest capped, row hit ignored
                    } else {
                        [off, 0, miss]
                    }
                }
                BasePolicy::Grouping => {
                    let g = ctx.groups.map_or(0, |g| g[req.app]);
                    [off, g, miss]
                }
                BasePolicy::Bliss => {
                    let black = ctx.bliss.map_or(false, |b| b.blacklist[req.app]) as u8;
                    [off, black, miss]
                }
            }
        };
        let full = (key, req.arrival_seq);
        if best.as_ref().map_or(true, |(b, _)| full < *b) {
            best = Some((full, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Streaming run-length histogram of consecutive services per app, one
/// accumulator per channel. Streak lengths of 16 or more share the last
/// bucket.
#[derive(Debug, Clone)]
pub struct StreakLog {
    last: Option<AppId>,
    run: u64,
}

pub const STREAK_BUCKETS: usize = 16;

impl StreakLog {
    pub fn new() -> Self {
        Self { last: None, run: 0 }
    }

    pub fn on_issue(&mut self, app: AppId, hist: &mut [[u64; STREAK_BUCKETS]]) {
        match self.last {
            Some(prev) if prev == app => self.run += 1,
            Some(prev) => {
                hist[prev][(self.run as usize).min(STREAK_BUCKETS) - 1] += 1;
                self.last = Some(app);
                self.run = 1;
            }
            None => {
                self.last = Some(app);
                self.run = 1;
            }
        }
    }

    pub fn flush(&mut self, hist: &mut [[u64; STREAK_BUCKETS]]) {
        if let Some(prev) = self.last.take() {
            hist[prev][(self.run as usize).min(STREAK_BUCKETS) - 1] += 1;
            self.run = 0;
        }
    }
}

impl Default for StreakLog {
    fn default() -> Self {
        Self::new()
    }
}
