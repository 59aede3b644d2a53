use crate::error::Result;
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

use super::check_dims;

/// Per-GPU activated-expert counters of the greedy router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyState {
    activated: Vec<u64>,
}

impl GreedyState {
    pub fn new(num_gpus: usize) -> Self {
        Self { activated: vec![0; num_gpus] }
    }

    pub fn activated(&self) -> &[u64] {
        &self.activated
    }

    /// Picks the candidate with the fewest activated experts (lowest id on
    /// ties) and bumps its counter. One pass over `candidates`.
    pub fn assign(&mut self, candidates: &[usize]) -> usize {
        let mut best = candidates[0];
        for &g in &candidates[1..] {
            if self.activated[g] < self.activated[best] {
                best = g;
            }
        }
        self.activated[best] += 1;
        best
    }
}

/// Active experts by descending token count, ascending id on ties.
pub fn metro_order(loads: &ExpertLoadVector) -> Vec<usize> {
    let mut order = loads.active_experts();
    order.sort_by(|&a, &b| loads[b].cmp(&loads[a]).then(a.cmp(&b)));
    order
}

/// Sequential greedy single-replica routing in [`metro_order`].
pub fn route_metro(loads: &ExpertLoadVector, placement: &PlacementMap) -> Result<RoutingAssignment> {
    check_dims(loads, placement)?;
    let mut state = GreedyState::new(placement.num_gpus());
    let mut choice = vec![None; loads.len()];
    for expert in metro_order(loads) {
        choice[expert] = Some(state.assign(placement.replicas(expert)));
    }
    Ok(RoutingAssignment::from_choices(loads, placement.num_gpus(), &choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::fixtures;
    use crate::validate::validate_assignment;

    #[test]
    fn no_active_experts() {
        let p = PlacementMap::round_robin(4, 2).unwrap();
        let a = route_metro(&ExpertLoadVector::zeros(4), &p).unwrap();
        assert_eq!(a.lambda, 0);
        assert!(a.activated_per_gpu().iter().all(|&c| c == 0));
    }

    #[test]
    fn doubled_instance_one_expert_per_gpu() {
        let (t, p) = fixtures::doubled();
        let a = route_metro(&t, &p).unwrap();
        assert_eq!(a.lambda, 1);
        assert_eq!(a.chosen_gpu(0), Some(0));
        assert_eq!(a.chosen_gpu(1), Some(1));
    }

    #[test]
    fn greedy_trap_gives_three() {
        let (t, p) = fixtures::greedy_trap();
        let a = route_metro(&t, &p).unwrap();
        assert_eq!(a.chosen_gpu(0), Some(0));
        assert_eq!(a.lambda, 3);
        assert!(validate_assignment(&a, &p, &t, true).unwrap().is_valid());
    }

    #[test]
    fn order_is_descending_load_then_id() {
        assert_eq!(metro_order(&ExpertLoadVector(vec![3, 0, 5, 3, 1])), vec![2, 0, 3, 4]);
    }

    #[test]
    fn tokens_all_go_to_the_chosen_replica() {
        let (t, p) = fixtures::greedy_trap();
        let a = route_metro(&t, &p).unwrap();
        for i in 0..3 {
            let xs: Vec<u64> = (0..2).map(|g| a.x(i, g)).collect();
            assert!(xs.iter().all(|&x| x == 0 || x == t[i]));
            assert_eq!(xs.iter().sum::<u64>(), t[i]);
        }
    }
}
