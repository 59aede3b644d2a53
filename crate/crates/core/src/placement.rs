//! EPLB-style expert replication and replica placement.
//!
//! Replication hands every expert one replica and apportions the remaining
//! slots by largest remainder over historical load, capping each expert at one
//! replica per GPU. Placement sorts replicas by expected load (history load
//! divided by replica count) and assigns each to the least-loaded GPU that has
//! a free slot and does not already host that expert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{max_flow, FlowNetwork};
use crate::types::{ExpertLoadVector, PlacementMap};

/// Replica count per expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub replica_counts: Vec<usize>,
    pub replication_ratio: f64,
}

impl ReplicationPlan {
    pub fn total_slots(&self) -> usize {
        self.replica_counts.iter().sum()
    }
}

/// Total slot count `round(N * ratio)`, checked for a memory-balanced layout on `num_gpus`.
pub fn slot_count(num_experts: usize, ratio: f64, num_gpus: usize) -> Result<usize> {
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(Error::Config(format!("replication ratio must be >= 1, got {ratio}")));
    }
    if num_gpus == 0 {
        return Err(Error::Config("placement needs at least one GPU".into()));
    }
    let slots = (num_experts as f64 * ratio).round() as usize;
    if !slots.is_multiple_of(num_gpus) {
        return Err(Error::Config(format!(
            "{slots} slots ({num_experts} experts x {ratio}) cannot be split evenly over {num_gpus} GPUs"
        )));
    }
    if slots > num_experts * num_gpus {
        return Err(Error::Config(format!(
            "{slots} slots exceed one replica of every expert on each of {num_gpus} GPUs"
        )));
    }
    Ok(slots)
}

pub fn eplb_replicate(history: &ExpertLoadVector, ratio: f64, num_gpus: usize) -> Result<ReplicationPlan> {
    let n = history.len();
    if n == 0 {
        return Err(Error::Config("history has no experts".into()));
    }
    let slots = slot_count(n, ratio, num_gpus)?;
    let extras = (slots - n) as i128;
    let cap = (num_gpus - 1) as i128;

    // Quota of expert i is extras * w_i / W. Compare in integers scaled by W.
    let weights: Vec<i128> =
        if history.total() == 0 { vec![1; n] } else { history.0.iter().map(|&h| h as i128).collect() };
    let total: i128 = weights.iter().sum();
    let mut extra: Vec<i128> = weights.iter().map(|&w| (extras * w / total).min(cap)).collect();
    let mut leftover = extras - extra.iter().sum::<i128>();

    // Largest remaining quota first, lower id on ties; capped experts pass their overflow on.
    while leftover > 0 {
        let pick = (0..n)
            .filter(|&i| extra[i] < cap)
            .max_by(|&a, &b| {
                let ra = extras * weights[a] - extra[a] * total;
                let rb = extras * weights[b] - extra[b] * total;
                ra.cmp(&rb).then(b.cmp(&a))
            })
            .expect("slots <= N * G leaves an uncapped expert");
        extra[pick] += 1;
        leftover -= 1;
    }
    Ok(ReplicationPlan {
        replica_counts: extra.into_iter().map(|e| 1 + e as usize).collect(),
        replication_ratio: ratio,
    })
}

/// lcm(1..=max_replicas): makes `history * scale / r` exact for every replica count.
fn load_scale(max_replicas: usize) -> u128 {
    (1..=max_replicas as u128).fold(1, |acc, r| acc / gcd(acc, r) * r)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn eplb_place(plan: &ReplicationPlan, history: &ExpertLoadVector, num_gpus: usize) -> Result<PlacementMap> {
    let n = plan.replica_counts.len();
    if history.len() != n {
        return Err(Error::Dimension(format!("plan has {n} experts, history {}", history.len())));
    }
    if num_gpus == 0 {
        return Err(Error::Config("placement needs at least one GPU".into()));
    }
    if let Some(i) = plan.replica_counts.iter().position(|&r| r == 0 || r > num_gpus) {
        return Err(Error::Config(format!(
            "expert {i} has {} replicas, must be in [1, {num_gpus}]",
            plan.replica_counts[i]
        )));
    }
    let slots = plan.total_slots();
    if !slots.is_multiple_of(num_gpus) {
        return Err(Error::Config(format!("{slots} slots cannot be split evenly over {num_gpus} GPUs")));
    }
    let per_gpu = slots / num_gpus;

    // Expected per-replica load, exact: history[i] * scale / r[i].
    let scale = load_scale(num_gpus);
    let expected: Vec<u128> = (0..n).map(|i| history[i] as u128 * scale / plan.replica_counts[i] as u128).collect();
    let mut order: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, plan.replica_counts[i])).collect();
    order.sort_by(|&a, &b| expected[b].cmp(&expected[a]).then(a.cmp(&b)));

    let sets = greedy_place(&order, &expected, plan, num_gpus, per_gpu, false)
        .or_else(|| greedy_place(&order, &expected, plan, num_gpus, per_gpu, true))
        .ok_or_else(|| Error::Config("no memory-balanced placement exists for this plan".into()))?;
    let map = PlacementMap::from_replica_sets(num_gpus, sets)?;
    debug_assert!(map.is_balanced());
    Ok(map)
}

/// Longest-expected-load-first greedy. With `lookahead`, a GPU is only taken
/// if the replicas still to be placed can complete the layout.
fn greedy_place(
    order: &[usize],
    expected: &[u128],
    plan: &ReplicationPlan,
    num_gpus: usize,
    per_gpu: usize,
    lookahead: bool,
) -> Option<Vec<Vec<usize>>> {
    let n = plan.replica_counts.len();
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut load = vec![0u128; num_gpus];
    let mut used = vec![0usize; num_gpus];
    let mut remaining = plan.replica_counts.clone();

    for &expert in order {
        let mut candidates: Vec<usize> =
            (0..num_gpus).filter(|&g| used[g] < per_gpu && !sets[expert].contains(&g)).collect();
        candidates.sort_by(|&a, &b| load[a].cmp(&load[b]).then(a.cmp(&b)));
        remaining[expert] -= 1;
        let chosen = candidates.into_iter().find(|&g| {
            if !lookahead {
                return true;
            }
            sets[expert].push(g);
            used[g] += 1;
            let ok = completable(&sets, &remaining, &used, per_gpu);
            used[g] -= 1;
            sets[expert].pop();
            ok
        })?;
        sets[expert].push(chosen);
        used[chosen] += 1;
        load[chosen] += expected[expert];
    }
    Some(sets)
}

/// Whether the remaining replicas fit the free slots without duplicating an
/// expert on a GPU (bipartite degree-constrained flow).
fn completable(sets: &[Vec<usize>], remaining: &[usize], used: &[usize], per_gpu: usize) -> bool {
    let n = sets.len();
    let g = used.len();
    let need: usize = remaining.iter().sum();
    if need == 0 {
        return true;
    }
    let (source, sink) = (0, n + g + 1);
    let mut net = FlowNetwork::new(n + g + 2, source, sink).expect("source != sink");
    for i in 0..n {
        if remaining[i] == 0 {
            continue;
        }
        net.add_edge(source, 1 + i, remaining[i] as u64).expect("valid node");
        for gpu in 0..g {
            if !sets[i].contains(&gpu) {
                net.add_edge(1 + i, 1 + n + gpu, 1).expect("valid node");
            }
        }
    }
    for (gpu, &u) in used.iter().enumerate() {
        net.add_edge(1 + n + gpu, sink, (per_gpu - u) as u64).expect("valid node");
    }
    max_flow(&net).value == need as u64
}

/// Expected load per GPU under even splitting across replicas.
pub fn expected_gpu_loads(placement: &PlacementMap, history: &ExpertLoadVector) -> Vec<f64> {
    let mut load = vec![0.0; placement.num_gpus()];
    for i in 0..placement.num_experts() {
        let share = history[i] as f64 / placement.replica_count(i) as f64;
        for &g in placement.replicas(i) {
            load[g] += share;
        }
    }
    load
}

#[derive(Serialize, Deserialize)]
struct PlacementRecord {
    expert: usize,
    gpus: Vec<usize>,
}

/// One `{"expert": i, "gpus": [...]}` line per expert, ascending expert id.
pub fn placement_to_jsonl(placement: &PlacementMap) -> String {
    let mut out = String::new();
    for expert in 0..placement.num_experts() {
        let rec = PlacementRecord { expert, gpus: placement.replicas(expert).to_vec() };
        out.push_str(&serde_json::to_string(&rec).expect("plain record serialises"));
        out.push('\n');
    }
    out
}

/// Parses the placement export. `num_gpus` defaults to one past the largest GPU id.
pub fn placement_from_jsonl(text: &str, num_gpus: Option<usize>) -> Result<PlacementMap> {
    let mut sets: Vec<Option<Vec<usize>>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlacementRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if rec.expert >= sets.len() {
            sets.resize(rec.expert + 1, None);
        }
        if sets[rec.expert].replace(rec.gpus).is_some() {
            return Err(Error::Validation(format!("line {}: expert {} listed twice", idx + 1, rec.expert)));
        }
    }
    let sets: Vec<Vec<usize>> = sets
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Validation(format!("expert {i} missing from placement"))))
        .collect::<Result<_>>()?;
    let inferred = sets.iter().flatten().max().map_or(1, |&g| g + 1);
    PlacementMap::from_replica_sets(num_gpus.unwrap_or(inferred), sets)
}
