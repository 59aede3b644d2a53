//! Trace-driven simulation on top of the cost model.
//!
//! A step is one MoE layer for one batch; its time is that of the busiest GPU.
//! A pass is a run of consecutive same-phase trace batches with increasing
//! layer index. Pass time extrapolates the recorded layers to all MoE layers
//! of the model.

mod compare;
mod report;
mod sweep;

pub use compare::{compare_routers, RouterComparison, RouterStats};
pub use report::{write_pareto_csv, write_results_csv, ResultRow, RESULTS_HEADER};
pub use sweep::{
    dominates, pareto_front, pareto_sweep, sweep_grid, sweep_points, SweepConfig, SweepPoint, SweepWorkload,
};

use serde::{Deserialize, Serialize};

use crate::costmodel::{comm_time, compute_time, memory_time, Collective, CostProfile, LayerTiming};
use crate::error::{Error, Result};
use crate::routing::{route, RouterKind};
use crate::seed::derive_seed;
use crate::trace::{Phase, Trace};
use crate::types::{aggregate_loads, PlacementMap, RoutingAssignment, TokenBatch};

/// Dispatch collective for `kind`. Expert-level routers need every GPU to see
/// the global load vector, which takes an all-gather; without replication
/// there is nothing to route and the plain all-to-all suffices.
pub fn dispatch_collective(kind: RouterKind, placement: &PlacementMap) -> Collective {
    if kind.needs_global_loads() && placement.has_replication() {
        Collective::AllGather
    } else {
        Collective::AllToAll
    }
}

/// Routes `batch` with `kind` and times the layer on the busiest GPU.
/// `seed` only matters for the parallel router.
pub fn simulate_decode_step(
    batch: &TokenBatch,
    placement: &PlacementMap,
    kind: RouterKind,
    p: &CostProfile,
    seed: u64,
) -> Result<LayerTiming> {
    Ok(decode_step_detail(batch, placement, kind, p, seed)?.0)
}

/// Like [`simulate_decode_step`], also returning the assignment.
pub fn decode_step_detail(
    batch: &TokenBatch,
    placement: &PlacementMap,
    kind: RouterKind,
    p: &CostProfile,
    seed: u64,
) -> Result<(LayerTiming, RoutingAssignment)> {
    check_shapes(placement, p)?;
    batch.validate(p.model.num_experts, p.model.top_k, p.cluster.num_gpus)?;
    let loads = aggregate_loads(batch, &p.model)?;
    let assignment = route(kind, &loads, placement, seed)?;
    let dispatch = dispatch_collective(kind, placement);
    let routed = placement.has_replication();
    let routing = if routed { p.routing_overhead.get(kind) } else { 0.0 };
    let topk = if dispatch == Collective::AllGather { p.topk_overhead } else { 0.0 };
    let timing = time_step(batch, &assignment, dispatch, routing, topk, p);
    Ok((timing, assignment))
}

/// Prefill always uses even-split routing and all-to-all dispatch.
pub fn simulate_prefill_step(batch: &TokenBatch, placement: &PlacementMap, p: &CostProfile) -> Result<LayerTiming> {
    check_shapes(placement, p)?;
    batch.validate(p.model.num_experts, p.model.top_k, p.cluster.num_gpus)?;
    let loads = aggregate_loads(batch, &p.model)?;
    let assignment = route(RouterKind::Eplb, &loads, placement, 0)?;
    Ok(time_step(batch, &assignment, Collective::AllToAll, 0.0, 0.0, p))
}

fn check_shapes(placement: &PlacementMap, p: &CostProfile) -> Result<()> {
    if placement.num_gpus() != p.cluster.num_gpus || placement.num_experts() != p.model.num_experts {
        return Err(Error::Dimension(format!(
            "placement is {}x{}, profile expects {}x{}",
            placement.num_experts(),
            placement.num_gpus(),
            p.model.num_experts,
            p.cluster.num_gpus
        )));
    }
    Ok(())
}

fn time_step(
    batch: &TokenBatch,
    a: &RoutingAssignment,
    dispatch: Collective,
    routing: f64,
    topk: f64,
    p: &CostProfile,
) -> LayerTiming {
    let lambda = a.lambda;
    let pairs = a.max_tokens_per_gpu();
    let (mem, compute) =
        if batch.is_empty() { (0.0, 0.0) } else { (memory_time(lambda, pairs, p), compute_time(pairs, p)) };
    let local = batch.max_tokens_per_source(p.cluster.num_gpus) as u64;
    let mut comm = 0.0;
    if p.cluster.num_gpus > 1 {
        comm += comm_time(dispatch, local, p) + comm_time(Collective::AllToAll, local, p);
    }
    if p.tp_degree > 1 {
        comm += comm_time(Collective::AllToAll, local, p);
    }
    LayerTiming::compose(mem, compute, comm, routing, topk, p.nonmoe_overhead, lambda, pairs)
}

/// Timing of one phase of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: Phase,
    /// Every simulated step, in trace order.
    pub layers: Vec<LayerTiming>,
    pub passes: usize,
    /// Mean pass time: tpot for decode, ttft for prefill.
    pub latency: f64,
    pub total_time: f64,
    pub tokens_processed: u64,
    pub token_throughput: f64,
}

impl PhaseResult {
    pub fn lambda_values(&self) -> Vec<f64> {
        self.layers.iter().map(|t| t.max_activated_experts as f64).collect()
    }

    pub fn max_tokens_values(&self) -> Vec<f64> {
        self.layers.iter().map(|t| t.max_tokens_per_gpu as f64).collect()
    }
}

/// Splits trace batch indices of `phase` into passes.
pub fn passes(trace: &Trace, phase: Phase) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut prev: Option<(Phase, usize)> = None;
    for (i, b) in trace.batches.iter().enumerate() {
        let continues = matches!(prev, Some((ph, layer)) if ph == b.phase && b.layer > layer);
        if b.phase == phase {
            if continues {
                out.last_mut().expect("pass in progress").push(i);
            } else {
                out.push(vec![i]);
            }
        }
        prev = Some((b.phase, b.layer));
    }
    out
}

/// Simulates every batch of `phase`. Decode steps use `kind`, prefill steps
/// even-split routing. Returns `None` if the trace has no such batches.
pub fn simulate_phase(
    trace: &Trace,
    placement: &PlacementMap,
    kind: RouterKind,
    p: &CostProfile,
    phase: Phase,
    seed: u64,
) -> Result<Option<PhaseResult>> {
    trace.validate(&p.model)?;
    let groups = passes(trace, phase);
    if groups.is_empty() {
        return Ok(None);
    }
    let mut layers = Vec::new();
    let mut total_time = 0.0;
    let mut tokens_processed = 0u64;
    for group in &groups {
        let mut pass_time = 0.0;
        for &i in group {
            let batch = &trace.batches[i].tokens;
            let t = match phase {
                Phase::Decode => {
                    simulate_decode_step(batch, placement, kind, p, derive_seed(seed, &format!("batch/{i}")))?
                }
                Phase::Prefill => simulate_prefill_step(batch, placement, p)?,
            };
            pass_time += t.layer_time;
            layers.push(t);
        }
        total_time += pass_time * p.model.num_moe_layers as f64 / group.len() as f64;
        tokens_processed += trace.batches[group[0]].tokens.len() as u64;
    }
    let latency = total_time / groups.len() as f64;
    Ok(Some(PhaseResult {
        phase,
        layers,
        passes: groups.len(),
        latency,
        total_time,
        tokens_processed,
        token_throughput: throughput(tokens_processed, total_time),
    }))
}

fn throughput(tokens: u64, time: f64) -> f64 {
    if time > 0.0 {
        tokens as f64 / time
    } else {
        0.0
    }
}

/// Result of running prefill and decode passes on the same GPUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeployedResult {
    pub prefill: Option<PhaseResult>,
    pub decode: Option<PhaseResult>,
    /// Pass order produced by the interleave ratio.
    pub schedule: Vec<Phase>,
    pub total_tokens: u64,
    pub total_time: f64,
    pub throughput: f64,
}

/// Interleaves prefill and decode passes, `interleave` decode passes per
/// prefill pass, until both are exhausted.
pub fn simulate_codeployed(
    trace: &Trace,
    placement: &PlacementMap,
    kind: RouterKind,
    p: &CostProfile,
    interleave: f64,
    seed: u64,
) -> Result<CodeployedResult> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(interleave.is_finite() && interleave > 0.0) {
        return Err(Error::Config(format!("interleave ratio must be positive, got {interleave}")));
    }
    let prefill = simulate_phase(trace, placement, kind, p, Phase::Prefill, seed)?;
    let decode = simulate_phase(trace, placement, kind, p, Phase::Decode, seed)?;
    let n_prefill = prefill.as_ref().map_or(0, |r| r.passes);
    let n_decode = decode.as_ref().map_or(0, |r| r.passes);
    let schedule = interleave_schedule(n_prefill, n_decode, interleave);
    let total_tokens = [&prefill, &decode].iter().filter_map(|r| r.as_ref()).map(|r| r.tokens_processed).sum();
    let total_time = [&prefill, &decode].iter().filter_map(|r| r.as_ref()).map(|r| r.total_time).sum();
    Ok(CodeployedResult {
        prefill,
        decode,
        schedule,
        total_tokens,
        total_time,
        throughput: throughput(total_tokens, total_time),
    })
}

/// After each prefill pass, runs decode passes until `interleave` decode
/// passes per prefill pass have been issued; leftovers of either phase follow.
pub fn interleave_schedule(prefill: usize, decode: usize, interleave: f64) -> Vec<Phase> {
    let mut out = Vec::with_capacity(prefill + decode);
    let mut issued = 0usize;
    for done in 1..=prefill {
        out.push(Phase::Prefill);
        let due = ((done as f64 * interleave).floor() as usize).min(decode);
        while issued < due {
            out.push(Phase::Decode);
            issued += 1;
        }
    }
    out.extend(std::iter::repeat_n(Phase::Decode, decode - issued));
    out
}
