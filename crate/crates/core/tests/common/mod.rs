#![allow(dead_code)]

use moe_routing::placement::{eplb_place, eplb_replicate};
use moe_routing::workload::{sample_history, ZipfPopularity};
use moe_routing::{ExpertLoadVector, PlacementMap};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small arbitrary instance: up to `max_active` active experts, each on
/// 1..=`max_replicas` distinct GPUs out of 1..=`max_gpus`.
pub fn small_instance(
    r: &mut ChaCha8Rng,
    max_active: usize,
    max_gpus: usize,
    max_replicas: usize,
) -> (ExpertLoadVector, PlacementMap) {
    let g = r.gen_range(1..=max_gpus);
    let n = r.gen_range(1..=max_active + 2);
    let gpus: Vec<usize> = (0..g).collect();
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let k = r.gen_range(1..=max_replicas.min(g));
            gpus.choose_multiple(r, k).copied().collect()
        })
        .collect();
    let mut loads = vec![0u64; n];
    let active = r.gen_range(0..=max_active.min(n));
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(r);
    for &i in &ids[..active] {
        loads[i] = r.gen_range(1..20);
    }
    (ExpertLoadVector(loads), PlacementMap::from_replica_sets(g, sets).unwrap())
}

/// Slot count in [N, ratio_max * N] that G divides, if any.
pub fn valid_slots(r: &mut ChaCha8Rng, n: usize, g: usize, ratio_max: f64) -> Option<usize> {
    let hi = ((n as f64 * ratio_max).floor() as usize).min(n * g);
    let choices: Vec<usize> = (n..=hi).filter(|s| s % g == 0).collect();
    choices.choose(r).copied()
}

/// EPLB placement for a random model size and ratio plus a Zipf batch.
pub fn eplb_instance(r: &mut ChaCha8Rng, max_n: usize, max_g: usize) -> (ExpertLoadVector, PlacementMap, f64) {
    loop {
        let g = r.gen_range(1..=max_g);
        let n = r.gen_range(1..=max_n);
        let Some(slots) = valid_slots(r, n, g, 1.5) else { continue };
        let ratio = slots as f64 / n as f64;
        let skew = r.gen_range(0.0..2.0);
        let seed = r.gen();
        let pop = ZipfPopularity::new(n, skew, seed).unwrap();
        let k = r.gen_range(1..=n.min(8));
        let history = sample_history(&pop, k, r.gen_range(0..500), seed);
        let plan = eplb_replicate(&history, ratio, g).unwrap();
        let placement = eplb_place(&plan, &history, g).unwrap();
        let batch = pop.batch(k, g, r.gen_range(0..8), r);
        let mut loads = ExpertLoadVector::zeros(n);
        for t in &batch.tokens {
            for &e in &t.experts {
                loads.0[e] += 1;
            }
        }
        return (loads, placement, ratio);
    }
}
