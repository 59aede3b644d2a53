//! Synthetic top-k workloads.
//!
//! Expert popularity follows a Zipf law over a seeded permutation of expert
//! ids, so that the hottest expert is not always expert 0. Each token draws
//! `top_k` distinct experts without replacement, weighted by popularity.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::types::{ClusterSpec, ExpertLoadVector, ModelSpec, TokenBatch, TokenRecord};

/// Zipf(skew) popularity over a permuted expert id space.
#[derive(Debug, Clone)]
pub struct ZipfPopularity {
    skew: f64,
    /// Unnormalised weight of each expert id.
    weights: Vec<f64>,
    /// Expert ids ordered from most to least popular.
    by_rank: Vec<usize>,
}

impl ZipfPopularity {
    pub fn new(num_experts: usize, skew: f64, seed: u64) -> Result<Self> {
        if !(skew.is_finite() && skew >= 0.0) {
            return Err(Error::Config(format!("zipf skew must be >= 0, got {skew}")));
        }
        if num_experts == 0 {
            return Err(Error::Config("zipf popularity needs at least one expert".into()));
        }
        let mut by_rank: Vec<usize> = (0..num_experts).collect();
        by_rank.shuffle(&mut rng_for(seed, "popularity"));
        let mut weights = vec![0.0; num_experts];
        for (rank, &expert) in by_rank.iter().enumerate() {
            weights[expert] = ((rank + 1) as f64).powf(-skew);
        }
        Ok(Self { skew, weights, by_rank })
    }

    pub fn skew(&self) -> f64 {
        self.skew
    }

    pub fn num_experts(&self) -> usize {
        self.weights.len()
    }

    /// Normalised selection probability of each expert for a single draw.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Expert ids from most to least popular.
    pub fn ranking(&self) -> &[usize] {
        &self.by_rank
    }

    /// Draws `k` distinct experts, sequentially without replacement.
    pub fn sample_top_k<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let mut remaining = self.weights.clone();
        let mut left: f64 = remaining.iter().sum();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k.min(remaining.len()) {
            let mut u = rng.gen::<f64>() * left;
            let mut choice = None;
            for (e, &w) in remaining.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                choice = Some(e);
                if u < w {
                    break;
                }
                u -= w;
            }
            // Floating-point slack can run past the end; the last positive weight wins.
            let e = choice.expect("positive weight remains while picks < num_experts");
            left -= remaining[e];
            remaining[e] = 0.0;
            picked.push(e);
        }
        picked
    }

    /// One batch of `tokens_per_gpu` tokens originating on each of `num_gpus` GPUs.
    pub fn batch<R: Rng + ?Sized>(
        &self,
        top_k: usize,
        num_gpus: usize,
        tokens_per_gpu: usize,
        rng: &mut R,
    ) -> TokenBatch {
        let mut tokens = Vec::with_capacity(num_gpus * tokens_per_gpu);
        for source_gpu in 0..num_gpus {
            for _ in 0..tokens_per_gpu {
                tokens.push(TokenRecord { source_gpu, experts: self.sample_top_k(top_k, rng) });
            }
        }
        TokenBatch { tokens }
    }
}

/// Per-expert selection counts of `num_tokens` tokens drawn from `pop`,
/// standing in for the load recorded over a previous window.
pub fn sample_history(pop: &ZipfPopularity, top_k: usize, num_tokens: usize, seed: u64) -> ExpertLoadVector {
    let mut rng = rng_for(seed, "history");
    let mut loads = ExpertLoadVector::zeros(pop.num_experts());
    for _ in 0..num_tokens {
        for e in pop.sample_top_k(top_k, &mut rng) {
            loads.0[e] += 1;
        }
    }
    loads
}

/// One synthetic batch: `tokens_per_gpu` tokens per GPU with Zipf(skew) top-k
/// selections. Deterministic in `seed`.
pub fn gen_zipf_trace(
    model: &ModelSpec,
    cluster: &ClusterSpec,
    tokens_per_gpu: usize,
    skew: f64,
    seed: u64,
) -> Result<TokenBatch> {
    let pop = ZipfPopularity::new(model.num_experts, skew, seed)?;
    let mut rng = rng_for(seed, "tokens");
    Ok(pop.batch(model.top_k, cluster.num_gpus, tokens_per_gpu, &mut rng))
}
