use crate::error::{Error, Result};
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

use super::check_dims;

/// Largest number of single-replica assignments the oracle will enumerate.
pub const BRUTEFORCE_LIMIT: u128 = 1_000_000;

/// Product of replica counts over active experts.
pub fn search_space(loads: &ExpertLoadVector, placement: &PlacementMap) -> u128 {
    loads
        .active_experts()
        .into_iter()
        .map(|i| placement.replica_count(i) as u128)
        .try_fold(1u128, u128::checked_mul)
        .unwrap_or(u128::MAX)
}

/// Exhaustive search over one replica per active expert.
///
/// Assignment vectors list the chosen GPU of each active expert in ascending
/// expert id; among minimisers of `lambda` the lexicographically smallest
/// vector wins. Branches whose partial maximum already reaches the best found
/// are skipped; they cannot yield a strictly smaller `lambda`, and any equal
/// one would be lexicographically later.
pub fn route_bruteforce(loads: &ExpertLoadVector, placement: &PlacementMap) -> Result<RoutingAssignment> {
    check_dims(loads, placement)?;
    let size = search_space(loads, placement);
    if size > BRUTEFORCE_LIMIT {
        return Err(Error::SearchSpace { size, limit: BRUTEFORCE_LIMIT });
    }
    let active = loads.active_experts();
    let mut search = Search {
        placement,
        active: &active,
        counts: vec![0; placement.num_gpus()],
        current: Vec::with_capacity(active.len()),
        best: None,
    };
    search.descend(0);
    let mut choice = vec![None; loads.len()];
    if let Some((_, gpus)) = search.best {
        for (&expert, gpu) in active.iter().zip(gpus) {
            choice[expert] = Some(gpu);
        }
    }
    Ok(RoutingAssignment::from_choices(loads, placement.num_gpus(), &choice))
}

struct Search<'a> {
    placement: &'a PlacementMap,
    active: &'a [usize],
    counts: Vec<u64>,
    current: Vec<usize>,
    best: Option<(u64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        let partial_max = self.counts.iter().copied().max().unwrap_or(0);
        if let Some((best, _)) = &self.best {
            if partial_max >= *best {
                return;
            }
        }
        if depth == self.active.len() {
            self.best = Some((partial_max, self.current.clone()));
            return;
        }
        for &g in self.placement.replicas(self.active[depth]) {
            self.counts[g] += 1;
            self.current.push(g);
            self.descend(depth + 1);
            self.current.pop();
            self.counts[g] -= 1;
        }
    }
}
