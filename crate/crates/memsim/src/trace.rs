//! Request traces: the on-disk format, a parser, and a synthetic generator.
//!
//! A trace is a sequence of records, each meaning "execute `gap` compute
//! instructions, then one memory access". The text form is one record per
//! line, `<gap> <0x-hex-address> <R|W>`; blank lines and lines starting with
//! `#` are ignored. Addresses are app-local and must fit in 48 bits.

use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::io::BufRead;

/// Addresses must be below 2^48; the simulator uses higher bits to keep
/// per-app address spaces disjoint.
pub const MAX_ADDRESS: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    /// Compute instructions executed before the access.
    pub gap: u32,
    /// App-local byte address of the access.
    pub addr: u64,
    pub is_write: bool,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

/// Parses the text trace format. Errors carry the 1-based line number.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, TraceParseError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| TraceParseError {
            line: lineno,
            reason: format!("read failed: {e}"),
        })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(TraceParseError {
                line: lineno,
                reason: format!("expected 3 fields (gap, address, R|W), got {}", fields.len()),
            });
        }
        let gap: u32 = fields[0].parse().map_err(|_| TraceParseError {
            line: lineno,
            reason: format!("invalid gap '{}'", fields[0]),
        })?;
        let hex = fields[1]
            .strip_prefix("0x")
            .or_else(|| fields[1].strip_prefix("0X"))
            .ok_or_else(|| TraceParseError {
                line: lineno,
                reason: format!("address '{}' must start with 0x", fields[1]),
            })?;
        let addr = u64::from_str_radix(hex, 16).map_err(|_| TraceParseError {
            line: lineno,
            reason: format!("invalid hex address '{}'", fields[1]),
        })?;
        if addr >= MAX_ADDRESS {
            return Err(TraceParseError {
                line: lineno,
                reason: format!("address {:#x} exceeds the 48-bit address space", addr),
            });
        }
        let is_write = match fields[2] {
            "R" => false,
            "W" => true,
            other => {
                return Err(TraceParseError {
                    line: lineno,
                    reason: format!("op must be R or W, got '{other}'"),
                })
            }
        };
        out.push(TraceRecord { gap, addr, is_write });
    }
    Ok(out)
}

/// Writes records in the same format `parse_trace` reads.
pub fn serialize_trace(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 16);
    for r in records {
        s.push_str(&format!(
            "{} 0x{:x} {}\n",
            r.gap,
            r.addr,
            if r.is_write { "W" } else { "R" }
        ));
    }
    s
}

/// Parameters for the synthetic generator: a stride walk over `footprint`
/// bytes with wraparound, where a `reuse_fraction` share of accesses instead
/// revisit a hot region at the bottom of the footprint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub footprint_bytes: u64,
    pub stride_bytes: u64,
    pub compute_gap: u32,
    pub record_count: u64,
    #[serde(default)]
    pub reuse_fraction: f64,
    pub seed: u64,
    /// Size of the hot region; defaults to footprint/16 clamped to one stride.
    #[serde(default)]
    pub hot_bytes: Option<u64>,
}

impl SyntheticSpec {
    pub fn effective_hot_bytes(&self) -> u64 {
        let raw = self
            .hot_bytes
            .unwrap_or((self.footprint_bytes / 16).max(self.stride_bytes));
        // Keep it stride-aligned and inside the footprint.
        let aligned = (raw / self.stride_bytes).max(1) * self.stride_bytes;
        aligned.min(self.footprint_bytes)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.stride_bytes == 0 {
            return Err("stride_bytes must be positive".into());
        }
        if self.footprint_bytes < self.stride_bytes {
            return Err("footprint_bytes must be at least one stride".into());
        }
        if self.footprint_bytes % self.stride_bytes != 0 {
            return Err("footprint_bytes must be a multiple of stride_bytes".into());
        }
        if self.footprint_bytes > MAX_ADDRESS {
            return Err("footprint_bytes exceeds the 48-bit address space".into());
        }
        if !(0.0..=1.0).contains(&self.reuse_fraction) {
            return Err("reuse_fraction must be in [0, 1]".into());
        }
        if let Some(h) = self.hot_bytes {
            if h == 0 || h % self.stride_bytes != 0 || h > self.footprint_bytes {
                return Err(
                    "hot_bytes must be a positive multiple of stride_bytes within the footprint"
                        .into(),
                );
            }
        }
        Ok(())
    }
}

/// Generates the trace for `spec`. Fully determined by the spec (including
/// its own seed). With reuse_fraction 0 no randomness is consumed at all:
/// the output is a pure stride walk starting at address 0.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Vec<TraceRecord> {
    debug_assert!(spec.validate().is_ok());
    let mut rng = SplitMix64::new(spec.seed);
    let hot_lines = (spec.effective_hot_bytes() / spec.stride_bytes).max(1);
    let mut cursor: u64 = 0;
    let mut out = Vec::with_capacity(spec.record_count as usize);
    for _ in 0..spec.record_count {
        let addr = if spec.reuse_fraction > 0.0 && rng.next_f64() < spec.reuse_fraction {
            rng.next_below(hot_lines) * spec.stride_bytes
        } else {
            let a = cursor;
            cursor = (cursor + spec.stride_bytes) % spec.footprint_bytes;
            a
        };
        out.push(TraceRecord {
            gap: spec.compute_gap,
            addr,
            is_write: false,
        });
    }
    out
}

/// Trace-level memory intensity: accesses per thousand instructions, where
/// each record contributes gap + 1 instructions.
pub fn trace_mpki(records: &[TraceRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let instructions: u64 = records.iter().map(|r| r.gap as u64 + 1).sum();
    1000.0 * records.len() as f64 / instructions as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
        parse_trace(Cursor::new(s))
    }

    #[test]
    fn parses_the_documented_line_format() {
        let recs = parse("5 0x1a40 R\n").unwrap();
        assert_eq!(
            recs,
            vec![TraceRecord { gap: 5, addr: 0x1a40, is_write: false }]
        );
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let recs = parse("# header\n\n  \n3 0x40 W\n# tail\n").unwrap();
        assert_eq!(recs, vec![TraceRecord { gap: 3, addr: 0x40, is_write: true }]);
    }

    #[test]
    fn rejects_malformed_lines_with_line_numbers() {
        let e = parse("1 0x40 R\nbogus\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse("1 40 R\n").unwrap_err();
        assert!(e.reason.contains("0x"));
        let e = parse("1 0x40 X\n").unwrap_err();
        assert!(e.reason.contains("R or W"));
        let e = parse("x 0x40 R\n").unwrap_err();
        assert!(e.reason.contains("gap"));
        let e = parse("1 0x40 R extra\n").unwrap_err();
        assert!(e.reason.contains("3 fields"));
    }

    #[test]
    fn enforces_the_48_bit_address_bound() {
        assert!(parse("0 0xffffffffffff R\n").is_ok());
        let e = parse("0 0x1000000000000 R\n").unwrap_err();
        assert!(e.reason.contains("48-bit"));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let recs = vec![
            TraceRecord { gap: 0, addr: 0, is_write: false },
            TraceRecord { gap: 999, addr: 0xdeadbeef, is_write: true },
            TraceRecord { gap: 7, addr: MAX_ADDRESS - 64, is_write: false },
        ];
        assert_eq!(parse(&serialize_trace(&recs)).unwrap(), recs);
    }

    #[test]
    fn stride_walk_matches_worked_example() {
        // footprint 64 KiB, stride 64, gap 10, count 3, reuse 0, seed 1
        let spec = SyntheticSpec {
            footprint_bytes: 64 * 1024,
            stride_bytes: 64,
            compute_gap: 10,
            record_count: 3,
            reuse_fraction: 0.0,
            seed: 1,
            hot_bytes: None,
        };
        let recs = generate_synthetic(&spec);
        let addrs: Vec<u64> = recs.iter().map(|r| r.addr).collect();
        assert_eq!(addrs, vec![0x0, 0x40, 0x80]);
        assert!(recs.iter().all(|r| r.gap == 10 && !r.is_write));
    }

    #[test]
    fn walk_wraps_around_the_footprint() {
        let spec = SyntheticSpec {
            footprint_bytes: 128,
            stride_bytes: 64,
            compute_gap: 0,
            record_count: 4,
            reuse_fraction: 0.0,
            seed: 9,
            hot_bytes: None,
        };
        let addrs: Vec<u64> = generate_synthetic(&spec).iter().map(|r| r.addr).collect();
        assert_eq!(addrs, vec![0, 64, 0, 64]);
    }

    #[test]
    fn zero_reuse_consumes_no_randomness() {
        let mk = |seed| SyntheticSpec {
            footprint_bytes: 4096,
            stride_bytes: 64,
            compute_gap: 2,
            record_count: 50,
            reuse_fraction: 0.0,
            seed,
            hot_bytes: None,
        };
        assert_eq!(generate_synthetic(&mk(1)), generate_synthetic(&mk(999)));
    }

    #[test]
    fn full_reuse_stays_in_the_hot_region() {
        let spec = SyntheticSpec {
            footprint_bytes: 1 << 20,
            stride_bytes: 64,
            compute_gap: 0,
            record_count: 200,
            reuse_fraction: 1.0,
            seed: 5,
            hot_bytes: Some(4096),
        };
        for r in generate_synthetic(&spec) {
            assert!(r.addr < 4096);
            assert_eq!(r.addr % 64, 0);
        }
    }

    #[test]
    fn mpki_follows_the_gap() {
        // gap 999 -> about one access per thousand instructions
        let spec = SyntheticSpec {
            footprint_bytes: 1 << 20,
            stride_bytes: 64,
            compute_gap: 999,
            record_count: 1000,
            reuse_fraction: 0.0,
            seed: 1,
            hot_bytes: None,
        };
        let mpki = trace_mpki(&generate_synthetic(&spec));
        assert!((mpki - 1.0).abs() < 1e-9, "mpki = {mpki}");
        // and is monotone in intensity
        let dense = SyntheticSpec { compute_gap: 9, ..spec };
        assert!(trace_mpki(&generate_synthetic(&dense)) > mpki);
    }

    #[test]
    fn hot_bytes_defaults_clamp_sanely() {
        let spec = SyntheticSpec {
            footprint_bytes: 64,
            stride_bytes: 64,
            compute_gap: 0,
            record_count: 1,
            reuse_fraction: 0.5,
            seed: 1,
            hot_bytes: None,
        };
        assert_eq!(spec.effective_hot_bytes(), 64);
    }
}
