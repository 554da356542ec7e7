//! Artifact emission: the summary JSON and the CSV reports.
//!
//! Every CSV has a header row, comma separators, `\n` line endings, and —
//! by construction — no field that would need quoting. Floats print via
//! Rust's shortest-roundtrip formatting, so identical runs produce
//! byte-identical bodies. The JSON summary embeds the config hash, seed,
//! and schema version; nothing time- or host-dependent is written.

use crate::metrics::{RunSpan, SlowdownRecord};
use crate::sim::{IntervalRecord, RunResult};
use crate::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AppSummary {
    pub app: usize,
    pub retired: u64,
    pub ipc: f64,
    pub finished: bool,
    pub dram_requests: u64,
    pub mean_streak: f64,
    /// Oracle-derived figures; absent when the oracle did not run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipc_alone: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_slowdown: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_error_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub cycles_run: u64,
    pub all_finished: bool,
    pub window_cycles: u64,
    pub oracle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_speedup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_speedup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum_slowdown: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_error_pct: Option<f64>,
    pub apps: Vec<AppSummary>,
    pub ccd_violations: u64,
    pub bank_overlap_violations: u64,
    pub cap_violations: u64,
    pub epoch_assignments: Vec<u64>,
    pub final_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_partition: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infeasible: Vec<(usize, bool)>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join_semicolon<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

/// One `slowdowns.csv` row. Oracle-derived fields are optional so runs
/// without the alone-run pass still report shared IPC and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowdownRow {
    pub app: usize,
    pub window: u64,
    pub ipc_alone: Option<f64>,
    pub ipc_shared: f64,
    pub actual: Option<f64>,
    pub estimated: Option<f64>,
    pub error_pct: Option<f64>,
}

impl From<&SlowdownRecord> for SlowdownRow {
    fn from(r: &SlowdownRecord) -> Self {
        Self {
            app: r.app,
            window: r.window,
            ipc_alone: Some(r.ipc_alone),
            ipc_shared: r.ipc_shared,
            actual: Some(r.actual),
            estimated: r.estimated,
            error_pct: r.error_pct,
        }
    }
}

/// `slowdowns.csv`: one row per app per aligned window.
pub fn slowdowns_csv(rows: &[SlowdownRow]) -> String {
    let mut out = String::from("app,window,ipc_alone,ipc_shared,actual,estimated,error_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.app,
            r.window,
            fmt_opt(r.ipc_alone),
            r.ipc_shared,
            fmt_opt(r.actual),
            fmt_opt(r.estimated),
            fmt_opt(r.error_pct),
        ));
    }
    out
}

/// `intervals.csv`: raw per-window model output, one row per app per window.
pub fn intervals_csv(records: &[IntervalRecord]) -> String {
    let mut out = String::from(
        "app,window,model,srsr,arsr,alpha,car_shared,car_alone,estimated,flags,way_slowdowns\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.app,
            r.window,
            r.model,
            fmt_opt(r.srsr),
            fmt_opt(r.arsr),
            fmt_opt(r.alpha),
            fmt_opt(r.car_shared),
            fmt_opt(r.car_alone),
            r.estimate,
            join_semicolon(&r.flags),
            join_semicolon(&r.way_slowdowns),
        ));
    }
    out
}

/// `streaks.csv`: the consecutive-service run-length histogram, one row per
/// app per bucket (1..15 and "16+").
pub fn streaks_csv(result: &RunResult) -> String {
    let mut out = String::from("app,length,count\n");
    for (app, stats) in result.apps.iter().enumerate() {
        for (i, count) in stats.streaks.iter().enumerate() {
            let label = if i + 1 == stats.streaks.len() {
                format!("{}+", i + 1)
            } else {
                (i + 1).to_string()
            };
            out.push_str(&format!("{app},{label},{count}\n"));
        }
    }
    out
}

/// One sweep point's outcome for `sweep.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: usize,
    /// Values in axis order, rendered as the override strings used.
    pub values: Vec<String>,
    /// "ok" or a short failure tag; failed points leave metrics empty.
    pub status: String,
    pub weighted_speedup: Option<f64>,
    pub harmonic_speedup: Option<f64>,
    pub maximum_slowdown: Option<f64>,
    pub mean_error_pct: Option<f64>,
}

/// `sweep.csv`: one row per Cartesian-product point, in product order.
pub fn sweep_csv(axes: &[String], rows: &[SweepRow]) -> String {
    let mut out = String::from("point");
    for a in axes {
        out.push(',');
        out.push_str(a);
    }
    out.push_str(",status,weighted_speedup,harmonic_speedup,maximum_slowdown,mean_error_pct\n");
    for r in rows {
        out.push_str(&r.point.to_string());
        for v in &r.values {
            out.push(',');
            out.push_str(v);
        }
        out.push_str(&format!(
            ",{},{},{},{},{}\n",
            r.status,
            fmt_opt(r.weighted_speedup),
            fmt_opt(r.harmonic_speedup),
            fmt_opt(r.maximum_slowdown),
            fmt_opt(r.mean_error_pct),
        ));
    }
    out
}

/// Machine-readable error blob for stderr.
pub fn error_json(kind: &str, issues: &[String]) -> String {
    let v = serde_json::json!({ "error": kind, "issues": issues });
    let mut s = serde_json::to_string_pretty(&v).expect("error blob serializes");
    s.push('\n');
    s
}

/// Assembles the run summary. `spans`/`mean_errors` come from the oracle
/// pass and are empty when it did not run.
pub fn build_summary(
    config_hash: String,
    seed: u64,
    result: &RunResult,
    oracle: bool,
    spans: &[RunSpan],
    per_app_mean_error: &[Option<f64>],
    overall_mean_error: Option<f64>,
) -> Summary {
    let apps = result
        .apps
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let span = spans.iter().find(|s| s.app == i);
            AppSummary {
                app: i,
                retired: a.retired,
                ipc: if a.total_cycles > 0 {
                    a.retired as f64 / a.total_cycles as f64
                } else {
                    0.0
                },
                finished: a.finished,
                dram_requests: a.dram_requests,
                mean_streak: crate::metrics::mean_streak(&a.streaks),
                ipc_alone: span.map(|s| s.ipc_alone),
                actual_slowdown: span.map(|s| s.actual),
                mean_error_pct: per_app_mean_error.get(i).copied().flatten(),
                truncated: span.map(|s| s.truncated).unwrap_or(false),
            }
        })
        .collect();
    Summary {
        schema_version: SCHEMA_VERSION,
        config_hash,
        seed,
        cycles_run: result.cycles_run,
        all_finished: result.all_finished,
        window_cycles: result.window_cycles,
        oracle,
        weighted_speedup: oracle.then(|| crate::metrics::weighted_speedup(spans)),
        harmonic_speedup: oracle.then(|| crate::metrics::harmonic_speedup(spans)),
        maximum_slowdown: oracle.then(|| crate::metrics::maximum_slowdown(spans)),
        mean_error_pct: overall_mean_error,
        apps,
        ccd_violations: result.ccd_violations,
        bank_overlap_violations: result.bank_overlap_violations,
        cap_violations: result.cap_violations,
        epoch_assignments: result.epoch_assignments.clone(),
        final_weights: result.final_weights.clone(),
        final_partition: result.final_partition.clone(),
        infeasible: result.infeasible.clone(),
    }
}
