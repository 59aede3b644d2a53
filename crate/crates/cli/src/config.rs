//! Experiment configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! preset = "qwen3-30b-a100"      # or explicit [cluster] and [model] tables
//!
//! [costs]                         # optional overrides, seconds
//! topk_overhead = 3e-6
//!
//! [placement]
//! ratio = 1.5
//! history = "synthetic"           # "synthetic" | "trace"; or file = "placement.jsonl"
//!
//! [workload]
//! skew = 1.2
//! decode_passes = 8
//! decode_tokens_per_gpu = 32
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use moe_routing::costmodel::{CostProfile, RoutingOverheads};
use moe_routing::profiles;
use moe_routing::trace::TraceSpec;
use moe_routing::{ClusterSpec, ModelSpec, RouterKind};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub cluster: Option<ClusterSpec>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub costs: CostsConfig,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default = "default_router")]
    pub router: RouterKind,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_router() -> RouterKind {
    RouterKind::Metro
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    #[serde(default)]
    pub routing_overhead: Option<RoutingOverheads>,
    #[serde(default)]
    pub topk_overhead: Option<f64>,
    #[serde(default)]
    pub nonmoe_overhead: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySource {
    /// Loads sampled from the workload's popularity law.
    Synthetic,
    /// Per-expert selection counts summed over the whole trace.
    Trace,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    #[serde(default = "one")]
    pub ratio: f64,
    #[serde(default = "synthetic")]
    pub history: HistorySource,
    #[serde(default = "history_tokens")]
    pub history_tokens: usize,
    /// Fixed placement in the line-delimited export format; replaces EPLB.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self { ratio: 1.0, history: HistorySource::Synthetic, history_tokens: history_tokens(), file: None }
    }
}

fn one() -> f64 {
    1.0
}

fn synthetic() -> HistorySource {
    HistorySource::Synthetic
}

fn history_tokens() -> usize {
    20_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Recorded trace; when absent the synthetic settings below apply.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default = "default_skew")]
    pub skew: f64,
    #[serde(default)]
    pub decode_passes: usize,
    #[serde(default)]
    pub decode_tokens_per_gpu: usize,
    #[serde(default)]
    pub prefill_passes: usize,
    #[serde(default)]
    pub prefill_tokens_per_gpu: usize,
    #[serde(default = "one_layer")]
    pub layers_per_pass: usize,
    /// Decode passes per prefill pass when co-deployed.
    #[serde(default = "one")]
    pub interleave: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            trace: None,
            skew: default_skew(),
            decode_passes: 0,
            decode_tokens_per_gpu: 0,
            prefill_passes: 0,
            prefill_tokens_per_gpu: 0,
            layers_per_pass: 1,
            interleave: 1.0,
        }
    }
}

fn default_skew() -> f64 {
    1.2
}

fn one_layer() -> usize {
    1
}

impl WorkloadConfig {
    pub fn trace_spec(&self) -> TraceSpec {
        TraceSpec {
            skew: self.skew,
            decode_passes: self.decode_passes,
            decode_tokens_per_gpu: self.decode_tokens_per_gpu,
            prefill_passes: self.prefill_passes,
            prefill_tokens_per_gpu: self.prefill_tokens_per_gpu,
            layers_per_pass: self.layers_per_pass,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Ratios to simulate; defaults to `placement.ratio`.
    #[serde(default)]
    pub ratios: Vec<f64>,
    /// Routers to simulate; defaults to `router`.
    #[serde(default)]
    pub routers: Vec<RouterKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub batches: Vec<usize>,
    #[serde(default)]
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub routers: Vec<RouterKind>,
    #[serde(default = "sweep_steps")]
    pub steps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { batches: Vec::new(), ratios: Vec::new(), routers: Vec::new(), steps: sweep_steps() }
    }
}

fn sweep_steps() -> usize {
    16
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Defaults to eplb, metro, optimal and bruteforce.
    #[serde(default)]
    pub routers: Vec<RouterKind>,
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn profile(&self) -> Result<CostProfile, CliError> {
        build_profile(&self.config)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("", e.to_string()))?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(if path == "." { "" } else { &path }, e.into_inner().to_string())
    })?;
    validate(&config)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse_config(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

fn build_profile(c: &ExperimentConfig) -> Result<CostProfile, CliError> {
    let mut p = match (&c.preset, &c.cluster, &c.model) {
        (Some(name), None, None) => profiles::by_name(name).ok_or_else(|| {
            CliError::config("preset", format!("unknown preset `{name}`, expected one of {:?}", profiles::PRESETS))
        })?,
        (None, Some(cluster), Some(model)) => CostProfile::new(cluster.clone(), model.clone()),
        (Some(_), _, _) => {
            return Err(CliError::config("preset", "give either a preset or [cluster] and [model], not both"))
        }
        (None, None, _) => return Err(CliError::config("cluster", "missing; give [cluster] and [model] or a preset")),
        (None, _, None) => return Err(CliError::config("model", "missing; give [cluster] and [model] or a preset")),
    };
    if let Some(r) = &c.costs.routing_overhead {
        p.routing_overhead = r.clone();
    }
    if let Some(t) = c.costs.topk_overhead {
        p.topk_overhead = t;
    }
    if let Some(t) = c.costs.nonmoe_overhead {
        p.nonmoe_overhead = t;
    }
    p.cluster.validate().map_err(|e| CliError::config("cluster", e.to_string()))?;
    p.model.validate().map_err(|e| CliError::config("model", e.to_string()))?;
    p.validate().map_err(|e| CliError::config("costs", e.to_string()))?;
    Ok(p)
}

fn check_ratio(path: &str, ratio: f64) -> Result<(), CliError> {
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(CliError::config(path, format!("replication ratio must be >= 1, got {ratio}")));
    }
    Ok(())
}

/// Checks that go beyond the schema.
pub fn validate(c: &ExperimentConfig) -> Result<(), CliError> {
    let p = build_profile(c)?;
    let (n, g) = (p.model.num_experts, p.cluster.num_gpus);
    let slot_check = |path: &str, ratio: f64, gpus: usize| -> Result<(), CliError> {
        check_ratio(path, ratio)?;
        moe_routing::placement::slot_count(n, ratio, gpus)
            .map(|_| ())
            .map_err(|e| CliError::config(path, e.to_string()))
    };
    if c.placement.file.is_none() {
        slot_check("placement.ratio", c.placement.ratio, g)?;
    }
    for (i, &r) in c.simulate.ratios.iter().enumerate() {
        slot_check(&format!("simulate.ratios[{i}]"), r, g)?;
    }
    for (i, &r) in c.sweep.ratios.iter().enumerate() {
        check_ratio(&format!("sweep.ratios[{i}]"), r)?;
    }
    for (i, &b) in c.sweep.batches.iter().enumerate() {
        if b == 0 {
            return Err(CliError::config(&format!("sweep.batches[{i}]"), "batch size must be positive"));
        }
    }
    if c.sweep.steps == 0 {
        return Err(CliError::config("sweep.steps", "must be positive"));
    }
    let w = &c.workload;
    if !(w.skew.is_finite() && w.skew >= 0.0) {
        return Err(CliError::config("workload.skew", format!("must be non-negative, got {}", w.skew)));
    }
    if !(w.interleave.is_finite() && w.interleave > 0.0) {
        return Err(CliError::config("workload.interleave", format!("must be positive, got {}", w.interleave)));
    }
    if w.layers_per_pass == 0 {
        return Err(CliError::config("workload.layers_per_pass", "must be positive"));
    }
    Ok(())
}
