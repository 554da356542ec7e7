//! DRAM address mapping and bank timing.
//!
//! The memory system is channels x ranks x banks, each bank with a single
//! open row (row buffer). A request is served in one shot whose latency
//! depends on the row buffer state at issue:
//!
//!   row hit       tCL + burst
//!   row closed    tRCD + tCL + burst
//!   row conflict  tRP + tRCD + tCL + burst   (precharge waits out tRAS)
//!
//! With the default 8-8-8 timing and burst 4 that is 12 / 20 / 28 cycles, a
//! row hit being well over twice as fast as a conflict. The data bus is
//! modeled only through the per-channel tCCD spacing between issues plus the
//! burst term inside the latency; there is no separate bus arbiter.
//!
//! # Address interleaving (normative)
//!
//! All counts are powers of two. With B = log2(line_bytes) block-offset bits
//! and C = log2(row_bytes / line_bytes) column bits, the three layouts are,
//! from the least significant bit upward:
//!
//! * `row`: `offset(B) | column(C) | bank | rank | channel | row`.
//!   Consecutive lines fill a row before moving to the next bank, so a
//!   sequential stream gets long runs of row hits on one bank. Worked
//!   example (defaults: 1 channel, 1 rank, 8 banks, 8 KiB rows, 64 B lines):
//!   address 0x0000 -> bank 0, row 0; address 0x2000 (one full row later)
//!   -> bank 1, row 0.
//!
//! * `cache_block`: `offset(B) | channel | bank | rank | column(C) | row`.
//!   Consecutive lines rotate channels first, then banks. Example with the
//!   defaults: 0x0 -> bank 0 and 0x40 -> bank 1.
//!
//! * `sub_row(s)`: `offset(B) | stripe(log2 s) | bank | rank | channel |
//!   column(C - log2 s) | row`. Stripes of `s` consecutive lines rotate
//!   across banks, then channels. Example with s = 4: addresses 0x0..0xff
//!   (four lines) -> bank 0, and 0x100 -> bank 1.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct DramTiming {
    pub t_rcd: u64,
    pub t_rp: u64,
    pub t_cl: u64,
    pub t_ccd: u64,
    pub t_ras: u64,
    pub burst: u64,
}

impl Default for DramTiming {
    fn default() -> Self {
        Self { t_rcd: 8, t_rp: 8, t_cl: 8, t_ccd: 4, t_ras: 20, burst: 4 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Interleaving {
    Row,
    CacheBlock,
    SubRow { blocks_per_stripe: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DramConfig {
    pub channels: u32,
    pub ranks_per_channel: u32,
    pub banks_per_rank: u32,
    pub row_bytes: u64,
    pub line_bytes: u64,
    pub timing: DramTiming,
    pub interleaving: Interleaving,
}

impl Default for DramConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            ranks_per_channel: 1,
            banks_per_rank: 8,
            row_bytes: 8192,
            line_bytes: 64,
            timing: DramTiming::default(),
            interleaving: Interleaving::Row,
        }
    }
}

impl DramConfig {
    pub fn banks_per_channel(&self) -> u32 {
        self.ranks_per_channel * self.banks_per_rank
    }
    pub fn total_banks(&self) -> u32 {
        self.channels * self.banks_per_channel()
    }
    pub fn columns_per_row(&self) -> u64 {
        self.row_bytes / self.line_bytes
    }
}

/// Where an address lands. `bank` is the index within its channel (rank
/// folded in); `global_bank` is unique across the whole system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappedAddress {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u64,
    pub column: u64,
}

impl MappedAddress {
    pub fn global_bank(&self, cfg: &DramConfig) -> usize {
        (self.channel * cfg.banks_per_channel() + self.bank) as usize
    }
}

fn take(addr: &mut u64, bits: u32) -> u64 {
    let v = *addr & ((1u64 << bits) - 1);
    *addr >>= bits;
    v
}

/// Decomposes a physical address per the configured layout. See the module
/// docs for the normative bit orders.
pub fn map_address(cfg: &DramConfig, addr: u64) -> MappedAddress {
    let off_bits = cfg.line_bytes.trailing_zeros();
    let col_bits = cfg.columns_per_row().trailing_zeros();
    let bank_bits = cfg.banks_per_rank.trailing_zeros();
    let rank_bits = cfg.ranks_per_channel.trailing_zeros();
    let chan_bits = cfg.channels.trailing_zeros();
    let mut a = addr >> off_bits;
    match cfg.interleaving {
        Interleaving::Row => {
            let column = take(&mut a, col_bits);
            let bank = take(&mut a, bank_bits) as u32;
            let rank = take(&mut a, rank_bits) as u32;
            let channel = take(&mut a, chan_bits) as u32;
            MappedAddress { channel, rank, bank: rank * cfg.banks_per_rank + bank, row: a, column }
        }
        Interleaving::CacheBlock => {
            let channel = take(&mut a, chan_bits) as u32;
            let bank = take(&mut a, bank_bits) as u32;
            let rank = take(&mut a, rank_bits) as u32;
            let column = take(&mut a, col_bits);
            MappedAddress { channel, rank, bank: rank * cfg.banks_per_rank + bank, row: a, column }
        }
        Interleaving::SubRow { blocks_per_stripe } => {
            let stripe_bits = blocks_per_stripe.trailing_zeros();
            let in_stripe = take(&mut a, stripe_bits);
            let bank = take(&mut a, bank_bits) as u32;
            let rank = take(&mut a, rank_bits) as u32;
            let channel = take(&mut a, chan_bits) as u32;
            let col_hi = take(&mut a, col_bits - stripe_bits);
            MappedAddress {
                channel,
                rank,
                bank: rank * cfg.banks_per_rank + bank,
                row: a,
                column: in_stripe | (col_hi << stripe_bits),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceKind {
    RowHit,
    RowClosed,
    RowConflict,
}

/// One row buffer. `busy_until` is the first cycle the bank is free again;
/// `row_opened_at` feeds the tRAS constraint on the next precharge.
#[derive(Debug, Clone, Copy, Default)]
pub struct BankState {
    pub open_row: Option<u64>,
    pub busy_until: u64,
    pub row_opened_at: u64,
}

impl BankState {
    pub fn is_free(&self, now: u64) -> bool {
        now >= self.busy_until
    }

    /// Classifies the access without changing state.
    pub fn classify(&self, row: u64) -> ServiceKind {
        match self.open_row {
            Some(r) if r == row => ServiceKind::RowHit,
            Some(_) => ServiceKind::RowConflict,
            None => ServiceKind::RowClosed,
        }
    }

    /// Starts serving `row` at `now` and returns (kind, completion cycle).
    /// The caller must have checked `is_free` and the channel tCCD gap.
    pub fn service(&mut self, t: &DramTiming, now: u64, row: u64) -> (ServiceKind, u64) {
        debug_assert!(self.is_free(now));
        let kind = self.classify(row);
        let completion = match kind {
            ServiceKind::RowHit => now + t.t_cl + t.burst,
            ServiceKind::RowClosed => {
                self.row_opened_at = now;
                now + t.t_rcd + t.t_cl + t.burst
            }
            ServiceKind::RowConflict => {
                // Precharge may not start before the open row has been open
                // for tRAS.
                let pre_start = now.max(self.row_opened_at + t.t_ras);
                self.row_opened_at = pre_start + t.t_rp;
                pre_start + t.t_rp + t.t_rcd + t.t_cl + t.burst
            }
        };
        self.open_row = Some(row);
        self.busy_until = completion;
        (kind, completion)
    }
}

/// Per-channel tCCD gate: at most one issue per channel every tCCD cycles.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelState {
    pub last_issue: Option<u64>,
}

impl ChannelState {
    pub fn ccd_ok(&self, t: &DramTiming, now: u64) -> bool {
        match self.last_issue {
            None => true,
            Some(last) => now - last >= t.t_ccd,
        }
    }
}

/// Always-on timing monitors. Violation counts are surfaced in run results;
/// the acceptance suite requires them to be zero.
#[derive(Debug, Default, Clone)]
pub struct TimingMonitor {
    last_issue_per_channel: Vec<Option<u64>>,
    busy_until_per_bank: Vec<u64>,
    pub ccd_violations: u64,
    pub bank_overlap_violations: u64,
}

impl TimingMonitor {
    pub fn new(cfg: &DramConfig) -> Self {
        Self {
            last_issue_per_channel: vec![None; cfg.channels as usize],
            busy_until_per_bank: vec![0; cfg.total_banks() as usize],
            ..Self::default()
        }
    }

    pub fn record_issue(
        &mut self,
        t: &DramTiming,
        channel: usize,
        global_bank: usize,
        now: u64,
        completion: u64,
    ) {
        if let Some(last) = self.last_issue_per_channel[channel] {
            if now - last < t.t_ccd {
                self.ccd_violations += 1;
            }
        }
        self.last_issue_per_channel[channel] = Some(now);
        // Service intervals on one bank must not overlap.
        if now < self.busy_until_per_bank[global_bank] {
            self.bank_overlap_violations += 1;
        }
        self.busy_until_per_bank[global_bank] = completion;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DramConfig {
        DramConfig::default()
    }

    #[test]
    fn default_latencies_are_12_20_28() {
        let t = DramTiming::default();
        let mut b = BankState::default();
        let (k, done) = b.service(&t, 0, 5);
        assert_eq!(k, ServiceKind::RowClosed);
        assert_eq!(done, 20);
        let (k, done) = b.service(&t, 20, 5);
        assert_eq!(k, ServiceKind::RowHit);
        assert_eq!(done, 32); // 12 cycles
        let (k, done) = b.service(&t, 32, 9);
        assert_eq!(k, ServiceKind::RowConflict);
        // row opened at 0, tRAS 20 already satisfied at 32
        assert_eq!(done, 32 + 28);
    }

    #[test]
    fn conflict_waits_out_t_ras() {
        let t = DramTiming::default();
        let mut b = BankState::default();
        b.service(&t, 0, 1); // activation at 0, done at 20
        // Conflict right at 20: precharge must wait for tRAS at... 0+20=20, ok.
        let (_, done) = b.service(&t, 20, 2);
        assert_eq!(done, 48);
        // Now row 2 was activated at 28. A conflict at 48 must wait until 48.
        let (_, done) = b.service(&t, 48, 3);
        assert_eq!(done, 48 + 28);
        // Row 3 activated at 56. Conflict served the moment the bank frees
        // (76) must stall precharge to cycle 56+20=76: no extra wait here,
        // but one cycle earlier activation shows the clamp:
        let mut b2 = BankState::default();
        b2.service(&t, 0, 1);
        b2.busy_until = 10; // pretend a short access; activation still at 0
        let (_, done) = b2.service(&t, 10, 2);
        // precharge start = max(10, 0+20) = 20 -> done 20+28
        assert_eq!(done, 48);
    }

    #[test]
    fn ccd_gate_uses_a_minimum_gap() {
        let t = DramTiming::default();
        let mut c = ChannelState::default();
        assert!(c.ccd_ok(&t, 0)); // fresh channel, cycle 0
        c.last_issue = Some(10);
        assert!(!c.ccd_ok(&t, 13));
        assert!(c.ccd_ok(&t, 14));
    }

    #[test]
    fn fresh_bank_is_free_at_cycle_zero() {
        let b = BankState::default();
        assert!(b.is_free(0));
        assert_eq!(b.classify(0), ServiceKind::RowClosed);
    }

    #[test]
    fn row_interleave_walks_banks_per_row() {
        let c = cfg();
        let m = map_address(&c, 0x0);
        assert_eq!((m.channel, m.bank, m.row), (0, 0, 0));
        // One full row (8 KiB) later: next bank, same row index.
        let m = map_address(&c, 0x2000);
        assert_eq!((m.channel, m.bank, m.row), (0, 1, 0));
        // After all 8 banks, the row number increments.
        let m = map_address(&c, 0x2000 * 8);
        assert_eq!((m.channel, m.bank, m.row), (0, 0, 1));
        // Lines within one row share channel, bank, and row; only the
        // column differs.
        let a = map_address(&c, 0x0);
        let b = map_address(&c, 0x1fc0);
        assert_eq!((a.channel, a.bank, a.row), (b.channel, b.bank, b.row));
        assert_eq!((a.column, b.column), (0, 127));
    }

    #[test]
    fn cache_block_interleave_rotates_banks_per_line() {
        let c = DramConfig { interleaving: Interleaving::CacheBlock, ..cfg() };
        assert_eq!(map_address(&c, 0x0).bank, 0);
        assert_eq!(map_address(&c, 0x40).bank, 1);
        assert_eq!(map_address(&c, 0x40 * 8).bank, 0);
        // With two channels, channel rotates before bank.
        let c2 = DramConfig { channels: 2, ..c };
        assert_eq!((map_address(&c2, 0x0).channel, map_address(&c2, 0x0).bank), (0, 0));
        assert_eq!((map_address(&c2, 0x40).channel, map_address(&c2, 0x40).bank), (1, 0));
        assert_eq!((map_address(&c2, 0x80).channel, map_address(&c2, 0x80).bank), (0, 1));
    }

    #[test]
    fn sub_row_interleave_rotates_stripes() {
        let c = DramConfig {
            interleaving: Interleaving::SubRow { blocks_per_stripe: 4 },
            ..cfg()
        };
        for a in (0x0..0x100).step_by(64) {
            assert_eq!(map_address(&c, a).bank, 0, "addr {a:#x}");
        }
        assert_eq!(map_address(&c, 0x100).bank, 1);
        assert_eq!(map_address(&c, 0x100 * 8).bank, 0);
    }

    #[test]
    fn mapping_is_injective_over_a_window() {
        // Distinct line addresses must map to distinct (channel, bank, row,
        // column) tuples for every layout.
        use std::collections::HashSet;
        for inter in [
            Interleaving::Row,
            Interleaving::CacheBlock,
            Interleaving::SubRow { blocks_per_stripe: 4 },
        ] {
            let c = DramConfig { channels: 2, interleaving: inter, ..cfg() };
            let mut seen = HashSet::new();
            for line in 0..4096u64 {
                let m = map_address(&c, line * 64);
                assert!(m.bank < c.banks_per_channel());
                assert!(m.channel < c.channels);
                assert!(m.column < c.columns_per_row());
                seen.insert((m.channel, m.bank, m.row, m.column));
            }
            assert_eq!(seen.len(), 4096, "{inter:?}");
        }
    }

    #[test]
    fn monitor_counts_injected_violations() {
        let c = cfg();
        let t = c.timing;
        let mut m = TimingMonitor::new(&c);
        m.record_issue(&t, 0, 0, 100, 112);
        m.record_issue(&t, 0, 1, 102, 114); // ccd gap 2 < 4
        assert_eq!(m.ccd_violations, 1);
        m.record_issue(&t, 0, 1, 110, 130); // bank 1 still busy until 114
        assert_eq!(m.bank_overlap_violations, 1);
    }
}
