use serde::{Deserialize, Serialize};

use crate::costmodel::CostProfile;
use crate::error::Result;
use crate::routing::{search_space, RouterKind, BRUTEFORCE_LIMIT};
use crate::seed::derive_seed;
use crate::stats::{mean, percentile};
use crate::types::{aggregate_loads, PlacementMap, TokenBatch};

use super::decode_step_detail;

/// Distribution of per-batch metrics for one router.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterStats {
    pub router: RouterKind,
    pub lambda: Vec<u64>,
    pub max_tokens: Vec<u64>,
    /// Decode step time extrapolated to all MoE layers.
    pub tpot: Vec<f64>,
}

impl RouterStats {
    pub fn lambda_mean(&self) -> f64 {
        mean(&to_f64(&self.lambda))
    }

    pub fn lambda_p99(&self) -> f64 {
        percentile(&to_f64(&self.lambda), 0.99)
    }

    pub fn max_tokens_mean(&self) -> f64 {
        mean(&to_f64(&self.max_tokens))
    }

    pub fn tpot_mean(&self) -> f64 {
        mean(&self.tpot)
    }
}

fn to_f64(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterComparison {
    pub batches: usize,
    pub routers: Vec<RouterStats>,
}

impl RouterComparison {
    pub fn get(&self, kind: RouterKind) -> Option<&RouterStats> {
        self.routers.iter().find(|r| r.router == kind)
    }
}

/// Runs each router in `routers` on every batch. Brute force is skipped
/// unless every batch fits its search-space guard.
pub fn compare_routers(
    batches: &[TokenBatch],
    placement: &PlacementMap,
    routers: &[RouterKind],
    p: &CostProfile,
    seed: u64,
) -> Result<RouterComparison> {
    let mut fits_guard = true;
    for b in batches {
        let loads = aggregate_loads(b, &p.model)?;
        if loads.len() == placement.num_experts() && search_space(&loads, placement) > BRUTEFORCE_LIMIT {
            fits_guard = false;
            break;
        }
    }
    let layers = p.model.num_moe_layers as f64;
    let mut out = Vec::new();
    for &kind in routers {
        if kind == RouterKind::Bruteforce && !fits_guard {
            continue;
        }
        let mut stats = RouterStats { router: kind, lambda: Vec::new(), max_tokens: Vec::new(), tpot: Vec::new() };
        for (i, b) in batches.iter().enumerate() {
            let (t, _) = decode_step_detail(b, placement, kind, p, derive_seed(seed, &format!("batch/{i}")))?;
            stats.lambda.push(t.max_activated_experts);
            stats.max_tokens.push(t.max_tokens_per_gpu);
            stats.tpot.push(t.layer_time * layers);
        }
        out.push(stats);
    }
    Ok(RouterComparison { batches: batches.len(), routers: out })
}
