//! Commands behind the `moe-routing` binary.
//!
//! Every command reads one TOML config (see [`config`]), derives all
//! randomness from its top-level seed and writes its outputs into the output
//! directory. Sub-seeds are `splitmix64(seed ^ fnv1a64(label))` with the
//! labels `trace` (workload and placement history) and `run` (router and
//! simulator randomness).

pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use moe_routing::costmodel::CostProfile;
use moe_routing::placement::{eplb_place, eplb_replicate, placement_from_jsonl, placement_to_jsonl, slot_count};
use moe_routing::routing::{assignment_to_jsonl, AssignmentSummary};
use moe_routing::seed::derive_seed;
use moe_routing::simulate::{
    compare_routers, pareto_front, simulate_codeployed, sweep_grid, sweep_points, write_pareto_csv, write_results_csv,
    ResultRow, SweepWorkload,
};
use moe_routing::stats::{mean, percentile};
use moe_routing::trace::{gen_trace, load_trace};
use moe_routing::workload::{sample_history, ZipfPopularity};
use moe_routing::{
    aggregate_loads, route, validate_assignment, ExpertLoadVector, Phase, PlacementMap, RouterKind, Trace,
};
use serde::Serialize;

pub use config::{load_config, parse_config, ExperimentConfig, HistorySource, LoadedConfig};
pub use error::CliError;

pub type CliResult<T> = Result<T, CliError>;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const PLACEMENT_FILE: &str = "placement.jsonl";
pub const ASSIGNMENT_FILE: &str = "assignment.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PARETO_FILE: &str = "pareto.csv";
pub const COMPARE_FILE: &str = "compare.csv";

pub const DEFAULT_SWEEP_BATCHES: [usize; 5] = [64, 128, 256, 512, 1024];
pub const DEFAULT_SWEEP_RATIOS: [f64; 4] = [1.0, 1.125, 1.25, 1.5];

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub router: Option<RouterKind>,
    pub ratio: Option<f64>,
}

/// Everything a command needs, after overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub loaded: LoadedConfig,
    pub profile: CostProfile,
    pub seed: u64,
    pub router_override: Option<RouterKind>,
    pub ratio_override: Option<f64>,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(config_path: &Path, overrides: Overrides) -> CliResult<Self> {
        let loaded = load_config(config_path)?;
        let profile = loaded.profile()?;
        if let Some(r) = overrides.ratio {
            slot_count(profile.model.num_experts, r, profile.cluster.num_gpus)
                .map_err(|e| CliError::config("--ratio", e.to_string()))?;
        }
        let c = &loaded.config;
        if c.placement.history == HistorySource::Synthetic && c.workload.trace.is_some() && c.placement.file.is_none() {
            return Err(CliError::config(
                "placement.history",
                "a recorded trace needs history = \"trace\" or a placement file",
            ));
        }
        let out_dir = match (&overrides.out, &c.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => loaded.resolve(o),
            (None, None) => PathBuf::from("out"),
        };
        Ok(Self {
            seed: overrides.seed.unwrap_or(c.seed),
            router_override: overrides.router,
            ratio_override: overrides.ratio,
            profile,
            out_dir,
            loaded,
        })
    }

    fn config(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn trace_seed(&self) -> u64 {
        derive_seed(self.seed, "trace")
    }

    fn run_seed(&self) -> u64 {
        derive_seed(self.seed, "run")
    }

    fn router(&self) -> RouterKind {
        self.router_override.unwrap_or(self.config().router)
    }

    fn ratio(&self) -> f64 {
        self.ratio_override.unwrap_or(self.config().placement.ratio)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn synthetic_trace(&self) -> CliResult<Trace> {
        let p = &self.profile;
        Ok(gen_trace(&p.model, &p.cluster, &self.config().workload.trace_spec(), self.trace_seed())?)
    }

    /// The configured recorded trace, or the synthetic one.
    pub fn trace(&self) -> CliResult<Trace> {
        let trace = match &self.config().workload.trace {
            Some(path) => {
                let path = self.loaded.resolve(path);
                let trace = load_trace(&path).map_err(|e| match e {
                    moe_routing::Error::Io(io) => CliError::io(&path, io),
                    other => CliError::Core(other),
                })?;
                if let Some(h) = &trace.header {
                    if h.num_gpus != self.profile.cluster.num_gpus {
                        return Err(CliError::config(
                            "workload.trace",
                            format!("trace has {} GPUs, cluster {}", h.num_gpus, self.profile.cluster.num_gpus),
                        ));
                    }
                }
                trace
            }
            None => self.synthetic_trace()?,
        };
        trace.validate(&self.profile.model)?;
        Ok(trace)
    }

    fn history(&self, trace: &Trace) -> CliResult<ExpertLoadVector> {
        let p = &self.profile;
        match self.config().placement.history {
            HistorySource::Synthetic => {
                let pop = ZipfPopularity::new(p.model.num_experts, self.config().workload.skew, self.trace_seed())?;
                Ok(sample_history(&pop, p.model.top_k, self.config().placement.history_tokens, self.trace_seed()))
            }
            HistorySource::Trace => {
                let mut total = ExpertLoadVector::zeros(p.model.num_experts);
                for b in &trace.batches {
                    total.add(&aggregate_loads(&b.tokens, &p.model)?);
                }
                Ok(total)
            }
        }
    }

    /// Placement from the configured file, or EPLB at `ratio`.
    pub fn placement(&self, ratio: f64, trace: &Trace) -> CliResult<PlacementMap> {
        let p = &self.profile;
        if let Some(file) = &self.config().placement.file {
            let path = self.loaded.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let map = placement_from_jsonl(&text, Some(p.cluster.num_gpus))?;
            if map.num_experts() != p.model.num_experts {
                return Err(CliError::config(
                    "placement.file",
                    format!("placement has {} experts, model {}", map.num_experts(), p.model.num_experts),
                ));
            }
            return Ok(map);
        }
        let history = self.history(trace)?;
        let plan = eplb_replicate(&history, ratio, p.cluster.num_gpus)?;
        Ok(eplb_place(&plan, &history, p.cluster.num_gpus)?)
    }

    fn ratios(&self) -> Vec<f64> {
        if let Some(r) = self.ratio_override {
            return vec![r];
        }
        if self.config().placement.file.is_some() {
            return vec![self.config().placement.ratio];
        }
        let listed = &self.config().simulate.ratios;
        if listed.is_empty() {
            vec![self.config().placement.ratio]
        } else {
            listed.clone()
        }
    }
}

fn effective_ratio(map: &PlacementMap) -> f64 {
    map.total_replicas() as f64 / map.num_experts() as f64
}

/// Writes the synthetic workload as a trace file.
pub fn cmd_gen_trace(ctx: &Context) -> CliResult<PathBuf> {
    let trace = ctx.synthetic_trace()?;
    ctx.write(TRACE_FILE, trace.to_string()?.as_bytes())
}

/// Writes the placement used by the other commands.
pub fn cmd_place(ctx: &Context) -> CliResult<PathBuf> {
    let trace = ctx.trace()?;
    let map = ctx.placement(ctx.ratio(), &trace)?;
    ctx.write(PLACEMENT_FILE, placement_to_jsonl(&map).as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteSummary {
    pub batch: usize,
    pub router: RouterKind,
    pub lambda: u64,
    pub max_tokens_per_gpu: u64,
}

/// Routes trace batch `index` and writes the assignment.
pub fn cmd_route(ctx: &Context, index: usize) -> CliResult<(PathBuf, RouteSummary)> {
    let trace = ctx.trace()?;
    let batch = trace.batches.get(index).ok_or_else(|| {
        CliError::config("--batch", format!("batch {index} out of range, trace has {}", trace.batches.len()))
    })?;
    let map = ctx.placement(ctx.ratio(), &trace)?;
    let loads = aggregate_loads(&batch.tokens, &ctx.profile.model)?;
    let kind = ctx.router();
    let a = route(kind, &loads, &map, derive_seed(ctx.run_seed(), &format!("batch/{index}")))?;
    let report = validate_assignment(&a, &map, &loads, kind.single_replica())?;
    if !report.is_valid() {
        return Err(moe_routing::Error::Validation(report.to_string()).into());
    }
    let s = AssignmentSummary::of(&a);
    let path = ctx.write(ASSIGNMENT_FILE, assignment_to_jsonl(&a).as_bytes())?;
    Ok((path, RouteSummary { batch: index, router: kind, lambda: s.lambda, max_tokens_per_gpu: s.max_tokens_per_gpu }))
}

fn first_batch_tokens(trace: &Trace, phase: Phase) -> Option<usize> {
    trace.batches.iter().find(|b| b.phase == phase).map(|b| b.tokens.len())
}

/// Co-deployed simulation for every configured ratio and router.
pub fn cmd_simulate(ctx: &Context) -> CliResult<PathBuf> {
    let trace = ctx.trace()?;
    let c = ctx.config();
    let routers = match ctx.router_override {
        Some(r) => vec![r],
        None if c.simulate.routers.is_empty() => vec![c.router],
        None => c.simulate.routers.clone(),
    };
    let batch = first_batch_tokens(&trace, Phase::Decode).or(first_batch_tokens(&trace, Phase::Prefill)).unwrap_or(0);
    let mut rows = Vec::new();
    for ratio in ctx.ratios() {
        let map = ctx.placement(ratio, &trace)?;
        for &router in &routers {
            let r = simulate_codeployed(&trace, &map, router, &ctx.profile, c.workload.interleave, ctx.run_seed())?;
            let (lambdas, tokens) =
                r.decode.as_ref().map(|d| (d.lambda_values(), d.max_tokens_values())).unwrap_or_default();
            rows.push(ResultRow {
                batch,
                tp: ctx.profile.tp_degree,
                ep: ctx.profile.cluster.num_gpus,
                ratio: effective_ratio(&map),
                router,
                seed: ctx.seed,
                lambda_max_mean: mean(&lambdas),
                lambda_max_p99: percentile(&lambdas, 0.99),
                max_tokens_mean: mean(&tokens),
                tpot_s: r.decode.as_ref().map(|d| d.latency),
                ttft_s: r.prefill.as_ref().map(|d| d.latency),
                throughput_tok_s: r.throughput,
            });
        }
    }
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf)?;
    ctx.write(RESULTS_FILE, &buf)
}

/// Decode throughput-latency sweep; writes every point and the Pareto front.
pub fn cmd_sweep(ctx: &Context) -> CliResult<(PathBuf, PathBuf)> {
    let c = ctx.config();
    let s = &c.sweep;
    let batches = if s.batches.is_empty() { DEFAULT_SWEEP_BATCHES.to_vec() } else { s.batches.clone() };
    let ratios = match ctx.ratio_override {
        Some(r) => vec![r],
        None if s.ratios.is_empty() => DEFAULT_SWEEP_RATIOS.to_vec(),
        None => s.ratios.clone(),
    };
    let routers = match ctx.router_override {
        Some(r) => vec![r],
        None if s.routers.is_empty() => vec![RouterKind::Eplb, RouterKind::Metro],
        None => s.routers.clone(),
    };
    let n = ctx.profile.model.num_experts;
    let g = ctx.profile.cluster.num_gpus;
    for (i, &r) in ratios.iter().enumerate() {
        for ep in (2..=g).filter(|&ep| g.is_multiple_of(ep)) {
            slot_count(n, r, ep)
                .map_err(|e| CliError::config(&format!("sweep.ratios[{i}]"), format!("ep {ep}: {e}")))?;
        }
    }
    let configs = sweep_grid(&batches, g, &ratios, &routers);
    if configs.is_empty() {
        return Err(CliError::config("sweep.batches", "no batch size divides evenly over any EP degree"));
    }
    let w = SweepWorkload {
        skew: c.workload.skew,
        steps: s.steps,
        history_tokens: c.placement.history_tokens,
        seed: ctx.run_seed(),
    };
    let points = sweep_points(&configs, &w, &ctx.profile)?;
    let rows: Vec<ResultRow> = points.iter().map(|p| ResultRow { seed: ctx.seed, ..ResultRow::from(p) }).collect();
    let mut all = Vec::new();
    write_results_csv(&rows, &mut all)?;
    let mut front = pareto_front(&points);
    for p in &mut front {
        p.seed = ctx.seed;
    }
    let mut pareto = Vec::new();
    write_pareto_csv(&front, &mut pareto)?;
    Ok((ctx.write(SWEEP_FILE, &all)?, ctx.write(PARETO_FILE, &pareto)?))
}

/// Per-router routing quality over the decode batches of the trace.
pub fn cmd_compare(ctx: &Context) -> CliResult<PathBuf> {
    let trace = ctx.trace()?;
    let c = ctx.config();
    let routers = match ctx.router_override {
        Some(r) => vec![r],
        None if c.compare.routers.is_empty() => {
            vec![RouterKind::Eplb, RouterKind::Metro, RouterKind::Optimal, RouterKind::Bruteforce]
        }
        None => c.compare.routers.clone(),
    };
    let decode: Vec<_> = trace.batches.iter().filter(|b| b.phase == Phase::Decode).map(|b| b.tokens.clone()).collect();
    let batches = if decode.is_empty() { trace.batches.iter().map(|b| b.tokens.clone()).collect() } else { decode };
    let map = ctx.placement(ctx.ratio(), &trace)?;
    let cmp = compare_routers(&batches, &map, &routers, &ctx.profile, ctx.run_seed())?;
    let batch = batches.first().map_or(0, |b| b.len());
    let rows: Vec<ResultRow> = cmp
        .routers
        .iter()
        .map(|r| {
            let tpot = r.tpot_mean();
            ResultRow {
                batch,
                tp: ctx.profile.tp_degree,
                ep: ctx.profile.cluster.num_gpus,
                ratio: effective_ratio(&map),
                router: r.router,
                seed: ctx.seed,
                lambda_max_mean: r.lambda_mean(),
                lambda_max_p99: r.lambda_p99(),
                max_tokens_mean: r.max_tokens_mean(),
                tpot_s: Some(tpot),
                ttft_s: None,
                throughput_tok_s: if tpot > 0.0 { batch as f64 / tpot } else { 0.0 },
            }
        })
        .collect();
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf)?;
    ctx.write(COMPARE_FILE, &buf)
}
