//! Roofline timing for one MoE layer on the bottleneck GPU.
//!
//! * memory: activated expert weights + dense weights + token activations, over HBM bandwidth;
//! * compute: routed token-expert pairs times flops per pair, over peak flops;
//! * communication: launch overhead + base latency + send volume over link bandwidth.
//!
//! A layer takes `max(memory, compute)` plus the serial segments
//! (communication, routing, extra top-k work, non-MoE work).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::RouterKind;
use crate::types::{ClusterSpec, ModelSpec};

/// Routing algorithm cost per layer, in seconds, for each router.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingOverheads {
    pub eplb: f64,
    pub metro: f64,
    pub metro_parallel: f64,
    pub optimal: f64,
    pub bruteforce: f64,
}

impl Default for RoutingOverheads {
    fn default() -> Self {
        Self { eplb: 0.0, metro: 26e-6, metro_parallel: 26e-6, optimal: 116.3e-6, bruteforce: 116.3e-6 }
    }
}

impl RoutingOverheads {
    pub fn get(&self, kind: RouterKind) -> f64 {
        match kind {
            RouterKind::Eplb => self.eplb,
            RouterKind::Metro => self.metro,
            RouterKind::MetroParallel => self.metro_parallel,
            RouterKind::Optimal => self.optimal,
            RouterKind::Bruteforce => self.bruteforce,
        }
    }
}

/// Default extra top-k time when every GPU runs top-k over all gathered tokens.
pub const DEFAULT_TOPK_OVERHEAD: f64 = 3e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub cluster: ClusterSpec,
    pub model: ModelSpec,
    pub routing_overhead: RoutingOverheads,
    /// Extra top-k time per layer under all-gather dispatch.
    pub topk_overhead: f64,
    /// Attention and other non-MoE work per layer.
    pub nonmoe_overhead: f64,
    /// GPUs sharing each expert's weights; set by [`CostProfile::sharded`].
    #[serde(default = "one")]
    pub tp_degree: usize,
}

fn one() -> usize {
    1
}

impl CostProfile {
    pub fn new(cluster: ClusterSpec, model: ModelSpec) -> Self {
        Self {
            cluster,
            model,
            routing_overhead: RoutingOverheads::default(),
            topk_overhead: DEFAULT_TOPK_OVERHEAD,
            nonmoe_overhead: 0.0,
            tp_degree: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.model.validate()?;
        if self.tp_degree == 0 {
            return Err(Error::Config("tp_degree must be at least 1".into()));
        }
        let r = &self.routing_overhead;
        for (name, v) in [
            ("routing_overhead.eplb", r.eplb),
            ("routing_overhead.metro", r.metro),
            ("routing_overhead.metro_parallel", r.metro_parallel),
            ("routing_overhead.optimal", r.optimal),
            ("routing_overhead.bruteforce", r.bruteforce),
            ("topk_overhead", self.topk_overhead),
            ("nonmoe_overhead", self.nonmoe_overhead),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Profile of one EP rank built from `tp` GPUs: weights and flops are
    /// sharded `tp` ways and the EP group has `ep` ranks.
    pub fn sharded(&self, tp: usize, ep: usize) -> Result<Self> {
        if tp == 0 || ep == 0 || tp * ep != self.cluster.num_gpus {
            return Err(Error::Config(format!("tp {tp} x ep {ep} must equal num_gpus {}", self.cluster.num_gpus)));
        }
        let mut p = self.clone();
        let shards = tp as f64;
        p.cluster.num_gpus = ep;
        p.tp_degree = self.tp_degree * tp;
        p.model.expert_weight_bytes /= shards;
        p.model.dense_weight_bytes /= shards;
        p.model.flops_per_token_per_expert /= shards;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collective {
    AllToAll,
    AllGather,
}

impl fmt::Display for Collective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Collective::AllToAll => "all_to_all",
            Collective::AllGather => "all_gather",
        })
    }
}

/// Per-layer timing on the bottleneck GPU. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerTiming {
    pub mem_time: f64,
    pub compute_time: f64,
    pub comm_time: f64,
    pub routing_time: f64,
    pub topk_time: f64,
    pub nonmoe_time: f64,
    pub layer_time: f64,
    pub max_activated_experts: u64,
    pub max_tokens_per_gpu: u64,
}

impl LayerTiming {
    #[allow(clippy::too_many_arguments)]
    pub fn compose(
        mem_time: f64,
        compute_time: f64,
        comm_time: f64,
        routing_time: f64,
        topk_time: f64,
        nonmoe_time: f64,
        max_activated_experts: u64,
        max_tokens_per_gpu: u64,
    ) -> Self {
        Self {
            mem_time,
            compute_time,
            comm_time,
            routing_time,
            topk_time,
            nonmoe_time,
            layer_time: mem_time.max(compute_time) + comm_time + routing_time + topk_time + nonmoe_time,
            max_activated_experts,
            max_tokens_per_gpu,
        }
    }
}

pub fn memory_time(lambda_max: u64, tokens_max: u64, p: &CostProfile) -> f64 {
    let m = &p.model;
    let bytes = lambda_max as f64 * m.expert_weight_bytes
        + m.dense_weight_bytes
        + tokens_max as f64 * m.activation_bytes_per_token();
    bytes / p.cluster.hbm_bandwidth
}

/// `pairs` is the number of token-expert pairs on the busiest GPU.
pub fn compute_time(pairs: u64, p: &CostProfile) -> f64 {
    pairs as f64 * p.model.flops_per_token_per_expert / p.cluster.peak_flops
}

/// Bytes one GPU sends for `tokens_per_gpu` local tokens.
pub fn comm_volume(kind: Collective, tokens_per_gpu: u64, p: &CostProfile) -> f64 {
    let payload = (tokens_per_gpu as usize * p.model.hidden_dim * p.model.dtype_bytes) as f64;
    match kind {
        Collective::AllToAll => payload,
        // Ring all-gather: every GPU forwards the G-1 shards it does not own.
        Collective::AllGather => payload * p.cluster.num_gpus.saturating_sub(1) as f64,
    }
}

/// Bandwidth component of [`comm_time`].
pub fn comm_transfer_time(kind: Collective, tokens_per_gpu: u64, p: &CostProfile) -> f64 {
    comm_volume(kind, tokens_per_gpu, p) / p.cluster.link_bandwidth
}

pub fn comm_time(kind: Collective, tokens_per_gpu: u64, p: &CostProfile) -> f64 {
    p.cluster.collective_launch_overhead + p.cluster.link_base_latency + comm_transfer_time(kind, tokens_per_gpu, p)
}

/// Expected number of distinct experts hit by `selections` uniform top-k draws.
pub fn expected_distinct_experts(selections: f64, num_experts: usize) -> f64 {
    let n = num_experts as f64;
    n * (1.0 - (1.0 - 1.0 / n).powf(selections))
}

/// Flop/byte of one MoE layer for a batch, assuming uniform gating.
pub fn operational_intensity(batch_tokens: u64, p: &CostProfile) -> Result<f64> {
    if batch_tokens == 0 {
        return Err(Error::Config("operational intensity needs at least one token".into()));
    }
    let m = &p.model;
    let b = batch_tokens as f64;
    let flops = b * m.top_k as f64 * m.flops_per_token_per_expert;
    let distinct = expected_distinct_experts(b * m.top_k as f64, m.num_experts);
    let bytes = distinct * m.expert_weight_bytes + m.dense_weight_bytes + b * m.activation_bytes_per_token();
    Ok(flops / bytes)
}

/// Activation bytes over activated-expert weight bytes for one batch.
pub fn activation_weight_traffic_ratio(batch_tokens: u64, p: &CostProfile) -> f64 {
    let m = &p.model;
    let b = batch_tokens as f64;
    let distinct = expected_distinct_experts(b * m.top_k as f64, m.num_experts);
    b * m.activation_bytes_per_token() / (distinct * m.expert_weight_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MemoryBound,
    ComputeBound,
}

/// Memory-bound iff the intensity is strictly below the machine balance point.
pub fn regime(oi: f64, cluster: &ClusterSpec) -> Regime {
    if oi < cluster.flops_per_byte() {
        Regime::MemoryBound
    } else {
        Regime::ComputeBound
    }
}
