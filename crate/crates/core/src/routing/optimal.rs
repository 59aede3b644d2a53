use crate::error::Result;
use crate::flow::feasibility_test;
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

use super::check_dims;

/// Search interval for the optimal `lambda` with `m` active experts:
/// `ceil(m / G)` by pigeonhole, `min(m, slots_per_gpu)` because giving every
/// GPU room for all experts it hosts is always feasible.
pub fn lambda_bounds(active: usize, placement: &PlacementMap) -> (u64, u64) {
    let m = active as u64;
    let g = placement.num_gpus() as u64;
    (m.div_ceil(g), m.min(placement.slots_per_gpu() as u64))
}

/// Minimum-`lambda` single-replica routing by binary search over matching feasibility.
pub fn route_optimal(loads: &ExpertLoadVector, placement: &PlacementMap) -> Result<RoutingAssignment> {
    check_dims(loads, placement)?;
    let active = loads.active_experts();
    if active.is_empty() {
        return Ok(RoutingAssignment::zeros(placement.num_experts(), placement.num_gpus()));
    }
    let (mut lo, mut hi) = lambda_bounds(active.len(), placement);
    let mut best = feasibility_test(&active, placement, hi);
    debug_assert!(best.feasible, "upper bound {hi} must be feasible");
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let f = feasibility_test(&active, placement, mid);
        if f.feasible {
            hi = mid;
            best = f;
        } else {
            lo = mid + 1;
        }
    }
    let mut choice = vec![None; loads.len()];
    for (expert, gpu) in best.matching {
        choice[expert] = Some(gpu);
    }
    let a = RoutingAssignment::from_choices(loads, placement.num_gpus(), &choice);
    debug_assert_eq!(a.lambda, hi);
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::fixtures;

    #[test]
    fn greedy_trap_is_two() {
        let (t, p) = fixtures::greedy_trap();
        let a = route_optimal(&t, &p).unwrap();
        assert_eq!(a.lambda, 2);
        assert_eq!(a.chosen_gpu(0), Some(1));
    }

    #[test]
    fn disjoint_hosts_give_one() {
        let p = PlacementMap::from_replica_sets(4, vec![vec![0], vec![1], vec![2], vec![3]]).unwrap();
        let a = route_optimal(&ExpertLoadVector(vec![1, 9, 0, 4]), &p).unwrap();
        assert_eq!(a.lambda, 1);
    }

    #[test]
    fn empty_batch_is_zero() {
        let (_, p) = fixtures::greedy_trap();
        assert_eq!(route_optimal(&ExpertLoadVector::zeros(3), &p).unwrap().lambda, 0);
    }

    #[test]
    fn bounds() {
        let (_, p) = fixtures::greedy_trap();
        assert_eq!(lambda_bounds(3, &p), (2, 3));
        assert_eq!(lambda_bounds(1, &p), (1, 1));
    }
}
