//! Set-associative caches with LRU replacement, optional way partitioning,
//! and the per-app auxiliary tag store used for alone-run cache modeling.
//!
//! Fills are two-phase: the victim way is claimed and the tag inserted in
//! state Pending at lookup time, and the line turns Valid when the response
//! arrives. An access that finds a Pending line counts as a hit and parks a
//! waiter on the line; pending lines are never evicted. If a miss finds no
//! evictable way (every eligible way pending) the access bypasses the cache:
//! it is still served by memory but nothing is filled.

use crate::AppId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub associativity: u32,
    pub line_bytes: u64,
    pub hit_latency: u64,
    /// Shared caches hold lines from every app and can be way-partitioned;
    /// private caches are instantiated once per core.
    pub shared: bool,
}

impl CacheConfig {
    pub fn set_count(&self) -> u64 {
        self.capacity_bytes / (self.line_bytes * self.associativity as u64)
    }
}

impl Default for CacheConfig {
    fn default() -> Self {
        // Defaults describe the shared LLC; the L1 default lives in config.rs.
        Self {
            capacity_bytes: 2 * 1024 * 1024,
            associativity: 16,
            line_bytes: 64,
            hit_latency: 20,
            shared: true,
        }
    }
}

/// A waiter parked on an in-flight line: the core window slot to complete,
/// and whether that access still owes an L1 fill.
pub type Waiter = (u64, bool);

#[derive(Debug, Clone)]
struct Line {
    tag: u64,
    owner: AppId,
    pending: bool,
    stamp: u64,
    waiters: Vec<Waiter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    /// Valid line; completes after the cache's hit latency.
    Hit,
    /// Line is in flight; the caller parks a waiter and completes at fill.
    PendingHit,
    /// Not present. `allocated` tells whether a fill was reserved; false
    /// means the access bypasses this cache level.
    Miss { allocated: bool },
}

#[derive(Debug)]
pub struct Cache {
    assoc: usize,
    set_mask: u64,
    line_shift: u32,
    set_bits: u32,
    stamp: u64,
    sets: Vec<Vec<Line>>,
}

impl Cache {
    pub fn new(cfg: &CacheConfig) -> Self {
        let sets = cfg.set_count();
        Self {
            assoc: cfg.associativity as usize,
            set_mask: sets - 1,
            line_shift: cfg.line_bytes.trailing_zeros(),
            set_bits: sets.trailing_zeros(),
            stamp: 0,
            sets: vec![Vec::new(); sets as usize],
        }
    }

    pub fn set_index(&self, paddr: u64) -> u64 {
        (paddr >> self.line_shift) & self.set_mask
    }

    fn tag_of(&self, paddr: u64) -> u64 {
        paddr >> (self.line_shift + self.set_bits)
    }

    /// Looks up `paddr` and, on a miss, claims a victim way for `owner`
    /// under the optional per-app way quotas.
    pub fn access(
        &mut self,
        paddr: u64,
        owner: AppId,
        partition: Option<&[u32]>,
    ) -> AccessOutcome {
        self.stamp += 1;
        let stamp = self.stamp;
        let assoc = self.assoc;
        let set_idx = self.set_index(paddr) as usize;
        let tag = self.tag_of(paddr);
        let set = &mut self.sets[set_idx];

        if let Some(line) = set.iter_mut().find(|l| l.tag == tag && l.owner == owner) {
            line.stamp = stamp;
            return if line.pending { AccessOutcome::PendingHit } else { AccessOutcome::Hit };
        }

        let new_line = Line { tag, owner, pending: true, stamp, waiters: Vec::new() };

        // Free way available and quota allows growth.
        let owned = set.iter().filter(|l| l.owner == owner).count();
        let at_quota = match partition {
            Some(q) => owned >= q[owner] as usize,
            None => false,
        };
        if set.len() < assoc && !at_quota {
            set.push(new_line);
            return AccessOutcome::Miss { allocated: true };
        }

        // Pick a victim. At or above quota the app may only evict its own
        // lines; below quota (or unpartitioned) it evicts the global LRU.
        // Pending lines are never eligible.
        let victim = set
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.pending && (!at_quota || l.owner == owner))
            .min_by_key(|(_, l)| l.stamp)
            .map(|(i, _)| i);
        match victim {
            Some(i) => {
                set[i] = new_line;
                AccessOutcome::Miss { allocated: true }
            }
            None => AccessOutcome::Miss { allocated: false },
        }
    }

    /// Parks a waiter on the pending line holding `paddr`.
    pub fn add_waiter(&mut self, paddr: u64, owner: AppId, w: Waiter) {
        let set_idx = self.set_index(paddr) as usize;
        let tag = self.tag_of(paddr);
        let line = self.sets[set_idx]
            .iter_mut()
            .find(|l| l.tag == tag && l.owner == owner)
            .expect("waiter added to a line that is not resident");
        debug_assert!(line.pending);
        line.waiters.push(w);
    }

    /// Marks the line valid and hands back any parked waiters. A no-op
    /// (empty result) if the line is already valid or was never allocated.
    pub fn complete_fill(&mut self, paddr: u64, owner: AppId) -> Vec<Waiter> {
        let set_idx = self.set_index(paddr) as usize;
        let tag = self.tag_of(paddr);
        match self.sets[set_idx].iter_mut().find(|l| l.tag == tag && l.owner == owner) {
            Some(line) if line.pending => {
                line.pending = false;
                std::mem::take(&mut line.waiters)
            }
            _ => Vec::new(),
        }
    }

    /// Lines owned by each app, for partition accounting tests.
    pub fn owned_counts(&self, apps: usize) -> Vec<usize> {
        let mut counts = vec![0; apps];
        for set in &self.sets {
            for l in set {
                counts[l.owner] += 1;
            }
        }
        counts
    }
}

/// Outcome of a sampled auxiliary-tag-store access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtsOutcome {
    /// Hit at 1-based LRU stack depth `d`: the access would hit in any
    /// cache of at least `d` ways.
    Hit { depth: usize },
    Miss,
}

/// Per-app tag store mirroring what the app's cache contents would be if it
/// ran alone with the full associativity. Only every (set_count /
/// sampled_sets)-th set is tracked, starting at set 0. Tags only, updated
/// immediately at access time.
#[derive(Debug)]
pub struct AuxTagStore {
    assoc: usize,
    stride: u64,
    // MRU at the front.
    sets: Vec<Vec<u64>>,
}

impl AuxTagStore {
    pub fn new(llc_sets: u64, sampled_sets: u64, associativity: u32) -> Self {
        debug_assert!(sampled_sets >= 1 && llc_sets % sampled_sets == 0);
        Self {
            assoc: associativity as usize,
            stride: llc_sets / sampled_sets,
            sets: vec![Vec::new(); sampled_sets as usize],
        }
    }

    pub fn is_sampled(&self, llc_set: u64) -> bool {
        llc_set % self.stride == 0
    }

    /// Accesses the store; None when the set is not sampled. `tag` must
    /// identify the line uniquely within the set (caller passes the full
    /// line address divided by set, as for the main cache).
    pub fn access(&mut self, llc_set: u64, tag: u64) -> Option<AtsOutcome> {
        if llc_set % self.stride != 0 {
            return None;
        }
        let set = &mut self.sets[(llc_set / self.stride) as usize];
        match set.iter().position(|&t| t == tag) {
            Some(pos) => {
                let t = set.remove(pos);
                set.insert(0, t);
                Some(AtsOutcome::Hit { depth: pos + 1 })
            }
            None => {
                set.insert(0, tag);
                if set.len() > self.assoc {
                    set.pop();
                }
                Some(AtsOutcome::Miss)
            }
        }
    }
}
