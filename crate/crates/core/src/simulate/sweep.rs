use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::CostProfile;
use crate::error::{Error, Result};
use crate::placement::{eplb_place, eplb_replicate};
use crate::routing::RouterKind;
use crate::seed::{derive_seed, rng_for};
use crate::stats::{mean, percentile};
use crate::workload::{sample_history, ZipfPopularity};

use super::decode_step_detail;

/// One decode deployment: global batch, TP x EP layout, replication ratio, router.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub batch_size: usize,
    pub tp_degree: usize,
    pub ep_degree: usize,
    pub replication_ratio: f64,
    pub router: RouterKind,
}

/// Synthetic decode workload shared by all sweep points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepWorkload {
    pub skew: f64,
    /// Decode batches simulated per point.
    pub steps: usize,
    /// Tokens in the load history that drives replication and placement.
    pub history_tokens: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub batch_size: usize,
    pub tp_degree: usize,
    pub ep_degree: usize,
    pub replication_ratio: f64,
    pub router: RouterKind,
    pub seed: u64,
    pub lambda_max_mean: f64,
    pub lambda_max_p99: f64,
    pub max_tokens_mean: f64,
    pub tpot: f64,
    pub decode_throughput: f64,
}

/// Every `(batch, tp, ep, ratio, router)` with `tp * ep = num_gpus` and the
/// batch divisible by `ep`. A single EP rank cannot hold replicas, so `ep = 1`
/// only takes ratio 1.0.
pub fn sweep_grid(batches: &[usize], num_gpus: usize, ratios: &[f64], routers: &[RouterKind]) -> Vec<SweepConfig> {
    let mut out = Vec::new();
    for &batch_size in batches {
        for tp_degree in (1..=num_gpus).filter(|&tp| num_gpus.is_multiple_of(tp)) {
            let ep_degree = num_gpus / tp_degree;
            if batch_size % ep_degree != 0 {
                continue;
            }
            for &replication_ratio in ratios {
                if ep_degree == 1 && replication_ratio != 1.0 {
                    continue;
                }
                for &router in routers {
                    out.push(SweepConfig { batch_size, tp_degree, ep_degree, replication_ratio, router });
                }
            }
        }
    }
    out
}

/// Simulates every config; points come back in config order.
pub fn sweep_points(configs: &[SweepConfig], workload: &SweepWorkload, p: &CostProfile) -> Result<Vec<SweepPoint>> {
    p.validate()?;
    if workload.steps == 0 {
        return Err(Error::Config("sweep needs at least one step per point".into()));
    }
    let pop = ZipfPopularity::new(p.model.num_experts, workload.skew, workload.seed)?;
    configs.par_iter().map(|c| simulate_point(c, &pop, workload, p)).collect()
}

/// Simulates every config and keeps the Pareto-optimal points.
pub fn pareto_sweep(configs: &[SweepConfig], workload: &SweepWorkload, p: &CostProfile) -> Result<Vec<SweepPoint>> {
    Ok(pareto_front(&sweep_points(configs, workload, p)?))
}

fn simulate_point(c: &SweepConfig, pop: &ZipfPopularity, w: &SweepWorkload, p: &CostProfile) -> Result<SweepPoint> {
    if c.batch_size == 0 || c.ep_degree == 0 || !c.batch_size.is_multiple_of(c.ep_degree) {
        return Err(Error::Config(format!("batch {} must be a positive multiple of ep {}", c.batch_size, c.ep_degree)));
    }
    let rank = p.sharded(c.tp_degree, c.ep_degree)?;
    let k = rank.model.top_k;
    let history = sample_history(pop, k, w.history_tokens, derive_seed(w.seed, "sweep-history"));
    let plan = eplb_replicate(&history, c.replication_ratio, c.ep_degree)?;
    let placement = eplb_place(&plan, &history, c.ep_degree)?;

    let label = format!("sweep/{}/{}", c.batch_size, c.ep_degree);
    let mut rng = rng_for(w.seed, &label);
    let mut lambdas = Vec::with_capacity(w.steps);
    let mut tokens = Vec::with_capacity(w.steps);
    let mut times = Vec::with_capacity(w.steps);
    for step in 0..w.steps {
        let batch = pop.batch(k, c.ep_degree, c.batch_size / c.ep_degree, &mut rng);
        let seed = derive_seed(w.seed, &format!("{label}/{step}"));
        let (t, _) = decode_step_detail(&batch, &placement, c.router, &rank, seed)?;
        lambdas.push(t.max_activated_experts as f64);
        tokens.push(t.max_tokens_per_gpu as f64);
        times.push(t.layer_time);
    }
    let tpot = mean(&times) * rank.model.num_moe_layers as f64;
    Ok(SweepPoint {
        batch_size: c.batch_size,
        tp_degree: c.tp_degree,
        ep_degree: c.ep_degree,
        replication_ratio: c.replication_ratio,
        router: c.router,
        seed: w.seed,
        lambda_max_mean: mean(&lambdas),
        lambda_max_p99: percentile(&lambdas, 0.99),
        max_tokens_mean: mean(&tokens),
        tpot,
        decode_throughput: c.batch_size as f64 / tpot,
    })
}

/// `a` dominates `b` if it is no slower and no less productive, and strictly
/// better in one of the two.
pub fn dominates(a: &SweepPoint, b: &SweepPoint) -> bool {
    a.tpot <= b.tpot
        && a.decode_throughput >= b.decode_throughput
        && (a.tpot < b.tpot || a.decode_throughput > b.decode_throughput)
}

/// Points not dominated by any other, sorted by tpot.
pub fn pareto_front(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut front: Vec<SweepPoint> =
        points.iter().filter(|b| !points.iter().any(|a| dominates(a, b))).cloned().collect();
    front.sort_by(|a, b| a.tpot.total_cmp(&b.tpot).then(b.decode_throughput.total_cmp(&a.decode_throughput)));
    front
}
