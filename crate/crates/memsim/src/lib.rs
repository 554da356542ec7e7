//! Cycle-level multicore memory-system simulator.
//!
//! The crate simulates N trace-driven cores sharing a last-level cache and a
//! DRAM system behind a configurable memory scheduler, estimates per-app
//! slowdowns online (request-service-rate and cache-access-rate models), and
//! can allocate memory bandwidth or cache ways to meet soft QoS targets. A
//! built-in oracle replays each app alone to measure ground-truth slowdown.
//!
//! Everything is deterministic: one global cycle loop, a seeded PRNG, and
//! fixed iteration orders. Two runs with the same config and seed produce
//! byte-identical output files.

pub mod asm;
pub mod cache;
pub mod config;
pub mod cpu;
pub mod dram;
pub mod metrics;
pub mod mise;
pub mod policy;
pub mod report;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod trace;

/// Apps are dense indices 0..n assigned by position in the config.
pub type AppId = usize;

/// Version stamped into summary.json; bump on any output schema change.
pub const SCHEMA_VERSION: u32 = 1;
