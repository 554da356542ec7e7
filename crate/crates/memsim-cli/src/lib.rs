//! Command implementations behind the `memsim` binary. Each `cmd_*`
//! function does the whole job — load, validate, simulate, emit artifacts —
//! and returns what the binary should print to stdout, so integration tests
//! can drive commands in-process.

use memsim::config::{load_config, SimConfig};
use memsim::metrics::{align_windows, mean_error, run_span, window_spans, RunSpan, SlowdownRecord};
use memsim::report::{
    build_summary, error_json, intervals_csv, slowdowns_csv, streaks_csv, sweep_csv, SlowdownRow,
    Summary, SweepRow,
};
use memsim::sim::{alone_config, prepare_traces, run, RunResult};
use memsim::trace::{serialize_trace, SyntheticSpec};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, flags, or inputs; printed as machine-readable
    /// JSON on stderr, exit code 2.
    Validation { kind: &'static str, issues: Vec<String> },
    Io(String),
}

impl CliError {
    pub fn validation(issues: Vec<String>) -> Self {
        Self::Validation { kind: "validation", issues }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Validation { kind: "usage", issues: vec![msg.into()] }
    }

    pub fn to_stderr_json(&self) -> String {
        match self {
            Self::Validation { kind, issues } => error_json(kind, issues),
            Self::Io(msg) => error_json("io", std::slice::from_ref(msg)),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

fn log_enabled() -> bool {
    std::env::var("MEMSIM_LOG").map(|v| !v.is_empty() && v != "off" && v != "0").unwrap_or(false)
}

macro_rules! log_line {
    ($($arg:tt)*) => {
        if log_enabled() {
            eprintln!($($arg)*);
        }
    };
}

/// Parses repeatable `--set key=value` flags.
pub fn parse_overrides(sets: &[String]) -> Result<Vec<(String, String)>, CliError> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CliError::usage(format!("--set `{s}`: expected key=value")))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub oracle: bool,
    pub jobs: Option<usize>,
    pub sets: Vec<String>,
}

/// Everything a finished run produced, before any file is written.
pub struct RunArtifacts {
    pub summary: Summary,
    pub slowdowns_csv: String,
    pub intervals_csv: String,
    pub streaks_csv: String,
}

fn load_and_validate(
    config_path: &Path,
    sets: &[String],
    seed: Option<u64>,
) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CliError::validation(vec![format!("config: cannot read {}: {e}", config_path.display())])
    })?;
    let overrides = parse_overrides(sets)?;
    let mut cfg = load_config(&text, &overrides).map_err(CliError::validation)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(CliError::validation)?;
    Ok(cfg)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

/// The oracle pass: one alone run per app, then per-window alignment and
/// whole-run spans. Returns (slowdown records in app order, spans, per-app
/// truncation flags).
type OracleOutput = (Vec<SlowdownRecord>, Vec<RunSpan>, Vec<bool>);

fn run_oracle(
    cfg: &SimConfig,
    traces: &[std::sync::Arc<Vec<memsim::trace::TraceRecord>>],
    shared: &RunResult,
    pool: &rayon::ThreadPool,
) -> OracleOutput {
    let alone_stats: Vec<_> = pool.install(|| {
        (0..cfg.apps.len())
            .into_par_iter()
            .map(|app| {
                log_line!("oracle: alone run for app {app}");
                let acfg = alone_config(cfg, app);
                let result = run(&acfg, std::slice::from_ref(&traces[app]));
                result.apps.into_iter().next().expect("alone run has one app")
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut spans = Vec::new();
    let mut truncated_flags = Vec::new();
    for app in 0..cfg.apps.len() {
        let (recs, truncated) =
            align_windows(app, &shared.apps[app], &alone_stats[app].samples);
        let span = run_span(app, &shared.apps[app], &alone_stats[app].samples);
        truncated_flags.push(truncated || span.truncated);
        records.extend(recs);
        spans.push(span);
    }
    (records, spans, truncated_flags)
}

/// Shared-run-only slowdown rows: IPC and estimates per window, oracle
/// columns empty.
fn shared_only_rows(shared: &RunResult) -> Vec<SlowdownRow> {
    let mut rows = Vec::new();
    for (app, stats) in shared.apps.iter().enumerate() {
        for span in window_spans(stats) {
            let delta = (span.retired_end - span.retired_begin) as f64;
            rows.push(SlowdownRow {
                app,
                window: span.window,
                ipc_alone: None,
                ipc_shared: delta / span.shared_span,
                actual: None,
                estimated: stats.window_estimates.get(span.window as usize - 1).copied(),
                error_pct: None,
            });
        }
    }
    rows
}

/// Executes one configured simulation (plus the oracle pass when asked) and
/// renders every artifact in memory.
pub fn execute(cfg: &SimConfig, oracle: bool, pool: &rayon::ThreadPool) -> Result<RunArtifacts, CliError> {
    let traces = prepare_traces(cfg).map_err(|e| CliError::validation(vec![e]))?;
    log_line!(
        "run: {} apps, {} cycles, seed {}",
        cfg.apps.len(),
        cfg.run_length_cycles,
        cfg.seed
    );
    let shared = run(cfg, &traces);

    let (rows, spans, per_app_errors, overall_error) = if oracle {
        let (records, spans, truncated) = run_oracle(cfg, &traces, &shared, pool);
        let per_app: Vec<Option<f64>> = (0..cfg.apps.len())
            .map(|app| {
                let own: Vec<SlowdownRecord> =
                    records.iter().filter(|r| r.app == app).cloned().collect();
                mean_error(&own)
            })
            .collect();
        let overall = mean_error(&records);
        let mut spans = spans;
        for (s, t) in spans.iter_mut().zip(&truncated) {
            s.truncated = *t;
        }
        let rows: Vec<SlowdownRow> = records.iter().map(Into::into).collect();
        (rows, spans, per_app, overall)
    } else {
        (shared_only_rows(&shared), Vec::new(), vec![None; cfg.apps.len()], None)
    };

    let summary = build_summary(
        cfg.content_hash(),
        cfg.seed,
        &shared,
        oracle,
        &spans,
        &per_app_errors,
        overall_error,
    );
    Ok(RunArtifacts {
        summary,
        slowdowns_csv: slowdowns_csv(&rows),
        intervals_csv: intervals_csv(&shared.intervals),
        streaks_csv: streaks_csv(&shared),
    })
}

fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), artifacts.summary.to_json())?;
    std::fs::write(dir.join("slowdowns.csv"), &artifacts.slowdowns_csv)?;
    std::fs::write(dir.join("intervals.csv"), &artifacts.intervals_csv)?;
    std::fs::write(dir.join("streaks.csv"), &artifacts.streaks_csv)?;
    Ok(())
}

/// `memsim run`: one simulation, artifacts to `--out`, summary JSON to
/// stdout.
pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let cfg = load_and_validate(&args.config_path, &args.sets, args.seed)?;
    let pool = thread_pool(args.jobs)?;
    let artifacts = execute(&cfg, args.oracle, &pool)?;
    if let Some(dir) = &args.out_dir {
        write_artifacts(dir, &artifacts)?;
    }
    Ok(artifacts.summary.to_json())
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub base: RunArgs,
    /// Each axis is `config.path=v1,v2,...`.
    pub axes: Vec<String>,
}

fn parse_axes(axes: &[String]) -> Result<Vec<(String, Vec<String>)>, CliError> {
    let mut parsed = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for axis in axes {
        let (path, values) = axis
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--axis `{axis}`: expected path=v1,v2,...")))?;
        if !seen.insert(path.to_string()) {
            return Err(CliError::validation(vec![format!("--axis {path}: duplicate axis path")]));
        }
        let values: Vec<String> = values.split(',').map(str::to_string).collect();
        if values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(CliError::usage(format!("--axis {path}: empty value list")));
        }
        parsed.push((path.to_string(), values));
    }
    Ok(parsed)
}

/// Cartesian product in deterministic order: the last axis varies fastest.
fn product_points(axes: &[(String, Vec<String>)]) -> Vec<Vec<String>> {
    let mut points: Vec<Vec<String>> = vec![Vec::new()];
    for (_, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

/// `memsim sweep`: the Cartesian product of the axis values, one
/// subdirectory per point plus an aggregating `sweep.csv`. Failed points
/// are recorded and the sweep continues.
pub fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let out_dir = args
        .base
        .out_dir
        .clone()
        .ok_or_else(|| CliError::usage("sweep requires --out"))?;
    let axes = parse_axes(&args.axes)?;
    // Validate the base configuration once up front so a broken config
    // fails the sweep instead of every point.
    load_and_validate(&args.base.config_path, &args.base.sets, args.base.seed)?;
    let points = product_points(&axes);
    let pool = thread_pool(args.base.jobs)?;
    let axis_paths: Vec<String> = axes.iter().map(|(p, _)| p.clone()).collect();

    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, values)| {
                log_line!("sweep: point {i} of {}", points.len());
                let mut sets = args.base.sets.clone();
                for (path, value) in axis_paths.iter().zip(values) {
                    sets.push(format!("{path}={value}"));
                }
                let point_dir = out_dir.join(format!("point-{i:04}"));
                let outcome = load_and_validate(&args.base.config_path, &sets, args.base.seed)
                    .and_then(|cfg| {
                        // Points already run under the sweep's pool; no
                        // nested parallelism.
                        let serial = thread_pool(Some(1))?;
                        let artifacts = execute(&cfg, args.base.oracle, &serial)?;
                        write_artifacts(&point_dir, &artifacts)?;
                        Ok(artifacts)
                    });
                match outcome {
                    Ok(a) => SweepRow {
                        point: i,
                        values: values.clone(),
                        status: "ok".into(),
                        weighted_speedup: a.summary.weighted_speedup,
                        harmonic_speedup: a.summary.harmonic_speedup,
                        maximum_slowdown: a.summary.maximum_slowdown,
                        mean_error_pct: a.summary.mean_error_pct,
                    },
                    Err(e) => {
                        log_line!("sweep: point {i} failed: {e:?}");
                        SweepRow {
                            point: i,
                            values: values.clone(),
                            status: match e {
                                CliError::Validation { kind, .. } => kind.to_string(),
                                CliError::Io(_) => "io".into(),
                            },
                            weighted_speedup: None,
                            harmonic_speedup: None,
                            maximum_slowdown: None,
                            mean_error_pct: None,
                        }
                    }
                }
            })
            .collect()
    });

    let csv = sweep_csv(&axis_paths, &rows);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("sweep.csv"), &csv)?;
    Ok(csv)
}

/// `memsim compare`: side-by-side metrics with percentage deltas against
/// the first summary.
pub fn cmd_compare(paths: &[PathBuf], out: Option<&Path>) -> Result<String, CliError> {
    if paths.len() < 2 {
        return Err(CliError::usage("compare needs at least two summary.json files"));
    }
    let mut summaries = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| {
            CliError::validation(vec![format!("cannot read {}: {e}", p.display())])
        })?;
        let s = Summary::from_json(&text)
            .map_err(|e| CliError::validation(vec![format!("{}: {e}", p.display())]))?;
        if s.schema_version != memsim::SCHEMA_VERSION {
            return Err(CliError::validation(vec![format!(
                "{}: schema version {} does not match expected {}",
                p.display(),
                s.schema_version,
                memsim::SCHEMA_VERSION
            )]));
        }
        summaries.push(s);
    }

    fn fmt_opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    fn delta(v: Option<f64>, base: Option<f64>) -> String {
        match (v, base) {
            (Some(v), Some(b)) if b != 0.0 => ((v - b) / b * 100.0).to_string(),
            _ => String::new(),
        }
    }

    let base = &summaries[0];
    let mut csv = String::from(
        "input,weighted_speedup,ws_delta_pct,harmonic_speedup,hs_delta_pct,\
         maximum_slowdown,max_delta_pct,mean_error_pct,error_delta_pct\n",
    );
    for (path, s) in paths.iter().zip(&summaries) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            path.display(),
            fmt_opt(s.weighted_speedup),
            delta(s.weighted_speedup, base.weighted_speedup),
            fmt_opt(s.harmonic_speedup),
            delta(s.harmonic_speedup, base.harmonic_speedup),
            fmt_opt(s.maximum_slowdown),
            delta(s.maximum_slowdown, base.maximum_slowdown),
            fmt_opt(s.mean_error_pct),
            delta(s.mean_error_pct, base.mean_error_pct),
        ));
    }
    if let Some(out) = out {
        std::fs::write(out, &csv)?;
    }
    Ok(csv)
}

#[derive(Debug, Clone)]
pub struct GenTraceArgs {
    pub footprint: u64,
    pub stride: u64,
    pub gap: u32,
    pub records: u64,
    pub reuse: f64,
    pub seed: u64,
    pub hot: Option<u64>,
    pub out: Option<PathBuf>,
}

/// `memsim gen-trace`: writes a synthetic trace as text.
pub fn cmd_gen_trace(args: &GenTraceArgs) -> Result<String, CliError> {
    let spec = SyntheticSpec {
        footprint_bytes: args.footprint,
        stride_bytes: args.stride,
        compute_gap: args.gap,
        record_count: args.records,
        reuse_fraction: args.reuse,
        seed: args.seed,
        hot_bytes: args.hot,
    };
    spec.validate()
        .map_err(|issue| CliError::validation(vec![format!("gen-trace: {issue}")]))?;
    let text = serialize_trace(&memsim::trace::generate_synthetic(&spec));
    if let Some(out) = &args.out {
        std::fs::write(out, &text)?;
        Ok(format!("wrote {} records to {}\n", args.records, out.display()))
    } else {
        Ok(text)
    }
}
