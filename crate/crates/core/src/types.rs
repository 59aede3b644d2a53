//! Domain types shared by every module: hardware and model descriptions,
//! the expert-to-GPU placement matrix, per-expert load vectors, token batches,
//! and routing assignments.
//!
//! All expert and GPU ids are dense and 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hardware constants of the expert-parallel cluster. All values in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub num_gpus: usize,
    /// HBM bandwidth per GPU in bytes/s.
    pub hbm_bandwidth: f64,
    /// Peak dense throughput per GPU in flop/s.
    pub peak_flops: f64,
    /// Per-GPU interconnect bandwidth in bytes/s.
    pub link_bandwidth: f64,
    /// Fixed cost of launching one collective, in seconds.
    pub collective_launch_overhead: f64,
    /// Base link latency added to every collective, in seconds.
    pub link_base_latency: f64,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_gpus == 0 {
            return Err(Error::Config("cluster.num_gpus must be >= 1".into()));
        }
        for (name, v) in [
            ("hbm_bandwidth", self.hbm_bandwidth),
            ("peak_flops", self.peak_flops),
            ("link_bandwidth", self.link_bandwidth),
            ("collective_launch_overhead", self.collective_launch_overhead),
            ("link_base_latency", self.link_base_latency),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("cluster.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Machine balance point in flop/byte.
    pub fn flops_per_byte(&self) -> f64 {
        self.peak_flops / self.hbm_bandwidth
    }
}

/// Shape and size constants of one MoE model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub num_experts: usize,
    pub top_k: usize,
    pub hidden_dim: usize,
    /// Bytes per activation element.
    pub dtype_bytes: usize,
    /// Bytes of one expert's parameters at serving precision.
    pub expert_weight_bytes: f64,
    /// Bytes of non-expert weights read once per layer.
    pub dense_weight_bytes: f64,
    pub flops_per_token_per_expert: f64,
    pub num_moe_layers: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::Config("model.num_experts must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.num_experts {
            return Err(Error::Config(format!("model.top_k must be in [1, {}], got {}", self.num_experts, self.top_k)));
        }
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("dtype_bytes", self.dtype_bytes),
            ("num_moe_layers", self.num_moe_layers),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        for (name, v) in [
            ("expert_weight_bytes", self.expert_weight_bytes),
            ("flops_per_token_per_expert", self.flops_per_token_per_expert),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("model.{name} must be positive, got {v}")));
            }
        }
        if !(self.dense_weight_bytes.is_finite() && self.dense_weight_bytes >= 0.0) {
            return Err(Error::Config(format!(
                "model.dense_weight_bytes must be non-negative, got {}",
                self.dense_weight_bytes
            )));
        }
        Ok(())
    }

    /// Activation bytes moved per token through one expert FFN (one read, one write).
    pub fn activation_bytes_per_token(&self) -> f64 {
        (2 * self.hidden_dim * self.dtype_bytes) as f64
    }
}

/// Binary expert-to-GPU hosting matrix together with its per-expert replica lists.
///
/// Placements produced by [`crate::placement::eplb_place`] are balanced: every
/// GPU holds exactly `slots_per_gpu` replicas. Hand-built placements used for
/// routing experiments may be unbalanced; for those `slots_per_gpu` is the
/// largest column sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementMap {
    num_gpus: usize,
    slots_per_gpu: usize,
    /// Sorted, duplicate-free GPU ids hosting each expert.
    replicas: Vec<Vec<usize>>,
    /// Row-major N x G hosting bitmap.
    hosts: Vec<bool>,
}

impl PlacementMap {
    /// Builds a placement from per-expert replica sets. Every expert needs at
    /// least one replica; ids must be in range and not repeated.
    pub fn from_replica_sets(num_gpus: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        if num_gpus == 0 {
            return Err(Error::Validation("placement needs at least one GPU".into()));
        }
        if sets.is_empty() {
            return Err(Error::Validation("placement needs at least one expert".into()));
        }
        let mut hosts = vec![false; sets.len() * num_gpus];
        let mut replicas = Vec::with_capacity(sets.len());
        let mut column = vec![0usize; num_gpus];
        for (expert, mut gpus) in sets.into_iter().enumerate() {
            if gpus.is_empty() {
                return Err(Error::Validation(format!("expert {expert} has no replica")));
            }
            gpus.sort_unstable();
            for w in gpus.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::Validation(format!("expert {expert} placed twice on GPU {}", w[0])));
                }
            }
            for &g in &gpus {
                if g >= num_gpus {
                    return Err(Error::Validation(format!(
                        "expert {expert} placed on GPU {g}, but only {num_gpus} GPUs exist"
                    )));
                }
                hosts[expert * num_gpus + g] = true;
                column[g] += 1;
            }
            replicas.push(gpus);
        }
        let slots_per_gpu = column.iter().copied().max().unwrap_or(0);
        Ok(Self { num_gpus, slots_per_gpu, replicas, hosts })
    }

    /// Builds a placement from the binary matrix form (rows are experts).
    pub fn from_matrix(rows: &[Vec<bool>]) -> Result<Self> {
        let num_gpus = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_gpus) {
            return Err(Error::Dimension("placement matrix rows differ in length".into()));
        }
        let sets = rows.iter().map(|r| r.iter().enumerate().filter(|(_, &on)| on).map(|(g, _)| g).collect()).collect();
        Self::from_replica_sets(num_gpus, sets)
    }

    /// One replica per expert, expert `i` on GPU `i % G`.
    pub fn round_robin(num_experts: usize, num_gpus: usize) -> Result<Self> {
        Self::from_replica_sets(num_gpus, (0..num_experts).map(|i| vec![i % num_gpus.max(1)]).collect())
    }

    pub fn num_experts(&self) -> usize {
        self.replicas.len()
    }

    pub fn num_gpus(&self) -> usize {
        self.num_gpus
    }

    pub fn slots_per_gpu(&self) -> usize {
        self.slots_per_gpu
    }

    #[inline]
    pub fn hosts(&self, expert: usize, gpu: usize) -> bool {
        self.hosts[expert * self.num_gpus + gpu]
    }

    /// GPUs hosting `expert`, ascending.
    #[inline]
    pub fn replicas(&self, expert: usize) -> &[usize] {
        &self.replicas[expert]
    }

    pub fn replica_count(&self, expert: usize) -> usize {
        self.replicas[expert].len()
    }

    /// Number of ones in the matrix (|A|).
    pub fn total_replicas(&self) -> usize {
        self.replicas.iter().map(Vec::len).sum()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut col = vec![0; self.num_gpus];
        for set in &self.replicas {
            for &g in set {
                col[g] += 1;
            }
        }
        col
    }

    /// True when every GPU holds the same number of replicas.
    pub fn is_balanced(&self) -> bool {
        self.column_sums().iter().all(|&c| c == self.slots_per_gpu)
    }

    /// True when some expert has more than one replica, i.e. routing has a choice to make.
    pub fn has_replication(&self) -> bool {
        self.replicas.iter().any(|r| r.len() > 1)
    }

    /// Row-major binary matrix view.
    pub fn to_matrix(&self) -> Vec<Vec<bool>> {
        self.hosts.chunks(self.num_gpus).map(<[bool]>::to_vec).collect()
    }
}

/// Per-expert token counts for one batch.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertLoadVector(pub Vec<u64>);

impl ExpertLoadVector {
    pub fn zeros(num_experts: usize) -> Self {
        Self(vec![0; num_experts])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Ids of experts with at least one token, ascending.
    pub fn active_experts(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &t)| t > 0).map(|(i, _)| i).collect()
    }

    pub fn add(&mut self, other: &ExpertLoadVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

impl std::ops::Index<usize> for ExpertLoadVector {
    type Output = u64;

    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

/// One token's origin and top-k expert selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    #[serde(rename = "src")]
    pub source_gpu: usize,
    pub experts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenBatch {
    pub tokens: Vec<TokenRecord>,
}

impl TokenBatch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks top-k arity, distinctness and id ranges.
    pub fn validate(&self, num_experts: usize, top_k: usize, num_gpus: usize) -> Result<()> {
        for (t, tok) in self.tokens.iter().enumerate() {
            if tok.source_gpu >= num_gpus {
                return Err(Error::Validation(format!(
                    "token {t}: source GPU {} out of range [0, {num_gpus})",
                    tok.source_gpu
                )));
            }
            if tok.experts.len() != top_k {
                return Err(Error::Validation(format!(
                    "token {t}: expected {top_k} experts, got {}",
                    tok.experts.len()
                )));
            }
            for (j, &e) in tok.experts.iter().enumerate() {
                if e >= num_experts {
                    return Err(Error::Validation(format!("token {t}: expert id {e} out of range [0, {num_experts})")));
                }
                if tok.experts[..j].contains(&e) {
                    return Err(Error::Validation(format!("token {t}: expert {e} selected twice")));
                }
            }
        }
        Ok(())
    }

    /// Largest number of tokens originating on a single GPU.
    pub fn max_tokens_per_source(&self, num_gpus: usize) -> usize {
        let mut per = vec![0usize; num_gpus.max(1)];
        for tok in &self.tokens {
            if let Some(c) = per.get_mut(tok.source_gpu) {
                *c += 1;
            }
        }
        per.into_iter().max().unwrap_or(0)
    }
}

/// Per-expert token totals of a batch.
pub fn aggregate_loads(batch: &TokenBatch, model: &ModelSpec) -> Result<ExpertLoadVector> {
    let mut loads = vec![0u64; model.num_experts];
    for (t, tok) in batch.tokens.iter().enumerate() {
        for &e in &tok.experts {
            let slot = loads.get_mut(e).ok_or_else(|| {
                Error::Validation(format!("token {t}: expert id {e} out of range [0, {})", model.num_experts))
            })?;
            *slot += 1;
        }
    }
    Ok(ExpertLoadVector(loads))
}

/// Decision variables of the routing problem: `x[i,g]` tokens of expert `i`
/// sent to GPU `g`, activation flags `y[i,g]`, and the objective `lambda`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingAssignment {
    num_experts: usize,
    num_gpus: usize,
    x: Vec<u64>,
    y: Vec<bool>,
    pub lambda: u64,
}

impl RoutingAssignment {
    pub fn zeros(num_experts: usize, num_gpus: usize) -> Self {
        Self {
            num_experts,
            num_gpus,
            x: vec![0; num_experts * num_gpus],
            y: vec![false; num_experts * num_gpus],
            lambda: 0,
        }
    }

    /// Builds an assignment from raw matrices; `lambda` is set to the maximum
    /// column sum of `y`.
    pub fn from_parts(num_experts: usize, num_gpus: usize, x: Vec<u64>, y: Vec<bool>) -> Result<Self> {
        if x.len() != num_experts * num_gpus || y.len() != num_experts * num_gpus {
            return Err(Error::Dimension(format!(
                "x/y must have {} entries for {num_experts}x{num_gpus}",
                num_experts * num_gpus
            )));
        }
        let mut a = Self { num_experts, num_gpus, x, y, lambda: 0 };
        a.lambda = lambda_of(&a);
        Ok(a)
    }

    /// Applies the single-replica recovery rule: every active expert sends all
    /// of its tokens to its chosen GPU, and `lambda` is the largest per-GPU
    /// count of chosen experts.
    pub fn from_choices(loads: &ExpertLoadVector, num_gpus: usize, choice: &[Option<usize>]) -> Self {
        let n = loads.len();
        let mut a = Self::zeros(n, num_gpus);
        for (i, c) in choice.iter().enumerate() {
            if let Some(g) = *c {
                a.x[i * num_gpus + g] = loads[i];
                a.y[i * num_gpus + g] = true;
            }
        }
        a.lambda = lambda_of(&a);
        a
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn num_gpus(&self) -> usize {
        self.num_gpus
    }

    #[inline]
    pub fn x(&self, expert: usize, gpu: usize) -> u64 {
        self.x[expert * self.num_gpus + gpu]
    }

    #[inline]
    pub fn y(&self, expert: usize, gpu: usize) -> bool {
        self.y[expert * self.num_gpus + gpu]
    }

    pub fn set(&mut self, expert: usize, gpu: usize, tokens: u64, active: bool) {
        self.x[expert * self.num_gpus + gpu] = tokens;
        self.y[expert * self.num_gpus + gpu] = active;
    }

    /// Activated experts per GPU (column sums of `y`).
    pub fn activated_per_gpu(&self) -> Vec<u64> {
        let mut col = vec![0u64; self.num_gpus];
        for row in self.y.chunks(self.num_gpus.max(1)) {
            for (g, &on) in row.iter().enumerate() {
                col[g] += u64::from(on);
            }
        }
        col
    }

    /// Token-expert pairs processed by each GPU (column sums of `x`).
    pub fn tokens_per_gpu(&self) -> Vec<u64> {
        let mut col = vec![0u64; self.num_gpus];
        for row in self.x.chunks(self.num_gpus.max(1)) {
            for (g, &t) in row.iter().enumerate() {
                col[g] += t;
            }
        }
        col
    }

    pub fn max_tokens_per_gpu(&self) -> u64 {
        self.tokens_per_gpu().into_iter().max().unwrap_or(0)
    }

    /// The GPU serving each expert when the assignment is in single-replica
    /// form; `None` for inactive experts. Panics-free: for split experts the
    /// lowest GPU id is returned.
    pub fn chosen_gpu(&self, expert: usize) -> Option<usize> {
        (0..self.num_gpus).find(|&g| self.x(expert, g) > 0)
    }
}

/// Maximum column sum of `y`.
pub fn lambda_of(a: &RoutingAssignment) -> u64 {
    a.activated_per_gpu().into_iter().max().unwrap_or(0)
}
