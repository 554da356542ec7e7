//! Run configuration: JSON schema, validation, dotted-path overrides, and
//! the content hash embedded in result artifacts.

use crate::asm::AsmParams;
use crate::cache::CacheConfig;
use crate::cpu::CoreConfig;
use crate::dram::DramConfig;
use crate::mise::MiseParams;
use crate::policy::{AoiSpec, FairParams, QosParams};
use crate::trace::SyntheticSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedPolicyKind {
    Frfcfs,
    FrfcfsCap,
    Grouping,
    Bliss,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BlissConfig {
    pub threshold: u32,
    pub clearing_interval_cycles: u64,
}

impl Default for BlissConfig {
    fn default() -> Self {
        Self { threshold: 4, clearing_interval_cycles: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    /// Memory requests per kilo-instruction above which an app counts as
    /// high intensity.
    pub mpki_threshold: f64,
    /// Reclassification period.
    pub window_cycles: u64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { mpki_threshold: 5.0, window_cycles: 5_000_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub policy: SchedPolicyKind,
    /// Per-channel request queue capacity.
    pub queue_capacity: usize,
    /// Consecutive row-hit cap for the capped policy.
    pub cap: u32,
    pub bliss: BlissConfig,
    pub grouping: GroupingConfig,
    /// Whether slowdown models hand one app top priority each epoch.
    /// Defaults to on exactly when a model is configured.
    pub overlay_epoch_priority: Option<bool>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            policy: SchedPolicyKind::Frfcfs,
            queue_capacity: 128,
            cap: 4,
            bliss: BlissConfig::default(),
            grouping: GroupingConfig::default(),
            overlay_epoch_priority: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    None,
    Mise,
    Asm,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub mise: MiseParams,
    pub asm: AsmParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKind::None, mise: MiseParams::default(), asm: AsmParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    None,
    /// Fixed epoch-probability weights; a baseline, not an adaptive policy.
    StaticWeights,
    MiseQos,
    MiseFair,
    AsmMem,
    AsmCache,
    AsmQos,
    AsmCacheMem,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Apps with slowdown bounds, for the QoS policies.
    pub aois: Vec<AoiSpec>,
    pub qos: QosParams,
    pub fair: FairParams,
    /// Weights for `static_weights`, one per app.
    pub static_weights: Vec<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::None,
            aois: Vec::new(),
            qos: QosParams::default(),
            fair: FairParams::default(),
            static_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    /// A trace file in the text format of the trace module.
    File { path: String },
    /// A generated trace.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub trace: TraceSource,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub run_length_cycles: u64,
    pub core: CoreConfig,
    pub l1: CacheConfig,
    pub llc: CacheConfig,
    pub dram: DramConfig,
    pub scheduler: SchedulerConfig,
    pub model: ModelConfig,
    pub policy: PolicyConfig,
    pub apps: Vec<AppConfig>,
}

fn default_l1() -> CacheConfig {
    CacheConfig {
        capacity_bytes: 32 * 1024,
        associativity: 8,
        line_bytes: 64,
        hit_latency: 1,
        shared: false,
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            run_length_cycles: 10_000_000,
            core: CoreConfig::default(),
            l1: default_l1(),
            llc: CacheConfig::default(),
            dram: DramConfig::default(),
            scheduler: SchedulerConfig::default(),
            model: ModelConfig::default(),
            policy: PolicyConfig::default(),
            apps: Vec::new(),
        }
    }
}

impl SimConfig {
    /// Whether the epoch-priority overlay is active.
    pub fn overlay_enabled(&self) -> bool {
        self.scheduler.overlay_epoch_priority.unwrap_or(self.model.kind != ModelKind::None)
    }

    /// The reporting window: the model's interval/quantum, or the default
    /// interval length when no model runs.
    pub fn window_cycles(&self) -> u64 {
        match self.model.kind {
            ModelKind::Mise => self.model.mise.interval_cycles,
            ModelKind::Asm => self.model.asm.quantum_cycles,
            ModelKind::None => MiseParams::default().interval_cycles,
        }
    }

    /// Whether the active policy partitions cache ways.
    pub fn partitions_cache(&self) -> bool {
        matches!(
            self.policy.kind,
            PolicyKind::AsmCache | PolicyKind::AsmQos | PolicyKind::AsmCacheMem
        )
    }

    /// FNV-1a hash of the canonical JSON form, hex-printed; embedded in
    /// summary artifacts so results can be traced to their configuration.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Validates the whole configuration, collecting every issue with its
    /// dotted config path.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut issues = Vec::new();
        let apps = self.apps.len();

        if apps == 0 {
            issues.push("apps: at least one app is required".into());
        }
        if self.run_length_cycles == 0 {
            issues.push("run_length_cycles: must be positive".into());
        }
        if self.core.issue_width == 0 {
            issues.push("core.issue_width: must be positive".into());
        }
        if self.core.window_size == 0 {
            issues.push("core.window_size: must be positive".into());
        }
        if self.core.mshr_count == 0 {
            issues.push("core.mshr_count: must be positive".into());
        }

        for (i, app) in self.apps.iter().enumerate() {
            if let TraceSource::Synthetic(spec) = &app.trace {
                if let Err(e) = spec.validate() {
                    issues.push(format!("apps[{i}].trace.synthetic: {e}"));
                }
            }
        }

        Self::check_cache("l1", &self.l1, &mut issues);
        Self::check_cache("llc", &self.llc, &mut issues);
        if self.l1.shared {
            issues.push("l1.shared: the L1 is private per app".into());
        }
        if self.l1.line_bytes != self.llc.line_bytes {
            issues.push("l1.line_bytes: must match llc.line_bytes".into());
        }

        self.check_dram(&mut issues);
        self.check_scheduler(apps, &mut issues);
        self.check_model(&mut issues);
        self.check_policy(apps, &mut issues);

        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    fn check_cache(path: &str, c: &CacheConfig, issues: &mut Vec<String>) {
        if c.line_bytes == 0 || !c.line_bytes.is_power_of_two() {
            issues.push(format!("{path}.line_bytes: must be a power of two"));
        }
        if c.associativity == 0 {
            issues.push(format!("{path}.associativity: must be positive"));
            return;
        }
        let way_bytes = c.associativity as u64 * c.line_bytes;
        if way_bytes == 0 || c.capacity_bytes == 0 || c.capacity_bytes % way_bytes != 0 {
            issues.push(format!(
                "{path}.capacity_bytes: must be a multiple of associativity x line_bytes"
            ));
            return;
        }
        if !(c.capacity_bytes / way_bytes).is_power_of_two() {
            issues.push(format!("{path}.capacity_bytes: set count must be a power of two"));
        }
        if c.hit_latency == 0 {
            issues.push(format!("{path}.hit_latency: must be positive"));
        }
    }

    fn check_dram(&self, issues: &mut Vec<String>) {
        let d = &self.dram;
        for (name, v) in [
            ("dram.channels", d.channels),
            ("dram.ranks_per_channel", d.ranks_per_channel),
            ("dram.banks_per_rank", d.banks_per_rank),
        ] {
            if v == 0 || !v.is_power_of_two() {
                issues.push(format!("{name}: must be a power of two"));
            }
        }
        if d.line_bytes == 0 || !d.line_bytes.is_power_of_two() {
            issues.push("dram.line_bytes: must be a power of two".into());
        }
        if d.line_bytes != self.llc.line_bytes {
            issues.push("dram.line_bytes: must match llc.line_bytes".into());
        }
        if d.row_bytes == 0
            || !d.row_bytes.is_power_of_two()
            || d.line_bytes == 0
            || d.row_bytes < d.line_bytes
        {
            issues.push("dram.row_bytes: must be a power of two at least line_bytes".into());
        } else if let crate::dram::Interleaving::SubRow { blocks_per_stripe } = d.interleaving {
            let columns = d.row_bytes / d.line_bytes;
            if blocks_per_stripe == 0
                || !blocks_per_stripe.is_power_of_two()
                || blocks_per_stripe as u64 > columns
            {
                issues.push(
                    "dram.interleaving.sub_row.blocks_per_stripe: must be a power of two no larger than the columns per row"
                        .into(),
                );
            }
        }
        for (name, v) in [
            ("dram.timing.t_rcd", d.timing.t_rcd),
            ("dram.timing.t_rp", d.timing.t_rp),
            ("dram.timing.t_cl", d.timing.t_cl),
            ("dram.timing.t_ccd", d.timing.t_ccd),
            ("dram.timing.burst", d.timing.burst),
        ] {
            if v == 0 {
                issues.push(format!("{name}: must be positive"));
            }
        }
    }

    fn check_scheduler(&self, apps: usize, issues: &mut Vec<String>) {
        let s = &self.scheduler;
        let in_flight = apps * self.core.mshr_count as usize;
        if s.queue_capacity < in_flight {
            issues.push(format!(
                "scheduler.queue_capacity: {} cannot hold the {in_flight} requests {apps} apps x {} MSHRs can keep in flight",
                s.queue_capacity, self.core.mshr_count
            ));
        }
        if s.cap == 0 {
            issues.push("scheduler.cap: must be positive".into());
        }
        if s.bliss.threshold == 0 {
            issues.push("scheduler.bliss.threshold: must be positive".into());
        }
        if s.bliss.clearing_interval_cycles == 0 {
            issues.push("scheduler.bliss.clearing_interval_cycles: must be positive".into());
        }
        if s.grouping.window_cycles == 0 {
            issues.push("scheduler.grouping.window_cycles: must be positive".into());
        }
        match (self.model.kind, s.overlay_epoch_priority) {
            (ModelKind::None, Some(true)) => issues.push(
                "scheduler.overlay_epoch_priority: needs a model to define epochs".into(),
            ),
            (ModelKind::Mise | ModelKind::Asm, Some(false)) => issues.push(
                "scheduler.overlay_epoch_priority: the configured model requires priority epochs"
                    .into(),
            ),
            _ => {}
        }
    }

    fn check_model(&self, issues: &mut Vec<String>) {
        let m = &self.model;
        match m.kind {
            ModelKind::None => {}
            ModelKind::Mise => {
                if m.mise.epoch_cycles == 0 || m.mise.interval_cycles % m.mise.epoch_cycles != 0 {
                    issues.push(
                        "model.mise.interval_cycles: must be a positive multiple of epoch_cycles"
                            .into(),
                    );
                }
                if !(m.mise.alpha_threshold > 0.0 && m.mise.alpha_threshold <= 1.0) {
                    issues.push("model.mise.alpha_threshold: must be in (0, 1]".into());
                }
                if self.run_length_cycles < m.mise.interval_cycles {
                    issues.push(
                        "run_length_cycles: shorter than one model.mise.interval_cycles".into(),
                    );
                }
            }
            ModelKind::Asm => {
                if m.asm.epoch_cycles == 0 || m.asm.quantum_cycles % m.asm.epoch_cycles != 0 {
                    issues.push(
                        "model.asm.quantum_cycles: must be a positive multiple of epoch_cycles"
                            .into(),
                    );
                }
                let sets = self.llc.set_count();
                if m.asm.sampled_sets == 0
                    || m.asm.sampled_sets as u64 > sets
                    || sets % m.asm.sampled_sets as u64 != 0
                {
                    issues.push(format!(
                        "model.asm.sampled_sets: must divide the llc set count ({sets})"
                    ));
                }
                if self.run_length_cycles < m.asm.quantum_cycles {
                    issues.push(
                        "run_length_cycles: shorter than one model.asm.quantum_cycles".into(),
                    );
                }
            }
        }
    }

    fn check_policy(&self, apps: usize, issues: &mut Vec<String>) {
        let p = &self.policy;
        let needs_mise = matches!(p.kind, PolicyKind::MiseQos | PolicyKind::MiseFair);
        let needs_asm = matches!(
            p.kind,
            PolicyKind::AsmMem | PolicyKind::AsmCache | PolicyKind::AsmQos | PolicyKind::AsmCacheMem
        );
        if needs_mise && self.model.kind != ModelKind::Mise {
            issues.push(format!("policy.kind: {:?} requires model.kind = mise", p.kind));
        }
        if needs_asm && self.model.kind != ModelKind::Asm {
            issues.push(format!("policy.kind: {:?} requires model.kind = asm", p.kind));
        }
        let needs_aoi = matches!(p.kind, PolicyKind::MiseQos | PolicyKind::AsmQos);
        if needs_aoi && p.aois.is_empty() {
            issues.push("policy.aois: the QoS policies need at least one app of interest".into());
        }
        if matches!(p.kind, PolicyKind::AsmQos) && p.aois.len() > 1 {
            issues.push("policy.aois: way allocation supports exactly one app of interest".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, aoi) in p.aois.iter().enumerate() {
            if aoi.app >= apps {
                issues.push(format!("policy.aois[{i}].app: no app with id {}", aoi.app));
            }
            if !(aoi.bound > 1.0) {
                issues.push(format!("policy.aois[{i}].bound: must exceed 1.0"));
            }
            if !seen.insert(aoi.app) {
                issues.push(format!("policy.aois[{i}].app: duplicate app of interest"));
            }
        }
        if p.aois.len() > apps {
            issues.push("policy.aois: more apps of interest than apps".into());
        }
        if !(p.qos.step > 0.0 && p.qos.step < 1.0) {
            issues.push("policy.qos.step: must be in (0, 1)".into());
        }
        if !(p.fair.step > 0.0 && p.fair.step < 1.0) {
            issues.push("policy.fair.step: must be in (0, 1)".into());
        }
        if !(p.fair.initial_bound > 1.0) {
            issues.push("policy.fair.initial_bound: must exceed 1.0".into());
        }
        if p.fair.history_len == 0 {
            issues.push("policy.fair.history_len: must be positive".into());
        }
        if self.partitions_cache() {
            if !self.llc.shared {
                issues.push("llc.shared: way partitioning needs a shared cache".into());
            }
            if (self.llc.associativity as usize) < apps {
                issues.push(format!(
                    "llc.associativity: {} ways cannot give {apps} apps a 1-way floor",
                    self.llc.associativity
                ));
            }
        }
        if p.kind == PolicyKind::StaticWeights {
            if p.static_weights.len() != apps {
                issues.push("policy.static_weights: needs one weight per app".into());
            }
            if p.static_weights.iter().any(|w| *w < 0.0)
                || p.static_weights.iter().sum::<f64>() <= 0.0
            {
                issues.push("policy.static_weights: weights must be nonnegative with a positive sum".into());
            }
        }
        if p.kind != PolicyKind::None && p.kind != PolicyKind::StaticWeights
            && self.model.kind == ModelKind::None
        {
            issues.push("policy.kind: adaptive policies need a model".into());
        }
    }
}

/// Parses a config from JSON text and applies `--set path=value` overrides.
/// Overrides are applied on the fully-defaulted form, so any schema path is
/// addressable even if the file omitted it.
pub fn load_config(text: &str, overrides: &[(String, String)]) -> Result<SimConfig, Vec<String>> {
    let cfg: SimConfig =
        serde_json::from_str(text).map_err(|e| vec![format!("config: {e}")])?;
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut tree = serde_json::to_value(&cfg).expect("config serializes");
    let mut issues = Vec::new();
    for (path, raw) in overrides {
        if let Err(e) = set_path(&mut tree, path, raw) {
            issues.push(format!("--set {path}: {e}"));
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    serde_json::from_value(tree).map_err(|e| vec![format!("config after overrides: {e}")])
}

/// Replaces the value at a dotted path (`model.mise.epoch_cycles`,
/// `apps.0.trace.synthetic.seed`) with `raw`, parsed as JSON when possible
/// and treated as a string otherwise.
pub fn set_path(tree: &mut serde_json::Value, path: &str, raw: &str) -> Result<(), String> {
    use serde_json::Value;
    let mut node = tree;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || path.is_empty() {
        return Err("empty path".into());
    }
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match node {
            Value::Object(map) => {
                let entry = map
                    .get_mut(*seg)
                    .ok_or_else(|| format!("no field `{}` under `{}`", seg, segments[..i].join(".")))?;
                if last {
                    *entry = parse_raw(raw);
                    return Ok(());
                }
                node = entry;
            }
            Value::Array(items) => {
                let idx: usize =
                    seg.parse().map_err(|_| format!("`{seg}` is not an array index"))?;
                let entry = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} out of bounds"))?;
                if last {
                    *entry = parse_raw(raw);
                    return Ok(());
                }
                node = entry;
            }
            _ => {
                return Err(format!(
                    "`{}` is a leaf and cannot contain `{}`",
                    segments[..i].join("."),
                    seg
                ))
            }
        }
    }
    unreachable!("loop returns on the last segment")
}

fn parse_raw(raw: &str) -> serde_json::Value {
    serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
}
