//! Seeded emulation of the lock-based parallel greedy router.
//!
//! One logical thread per active expert. A thread acquires the locks of all
//! its candidate GPUs one at a time in ascending GPU order, then, holding all
//! of them, reads the counters, picks the least-activated candidate, bumps it
//! and releases every lock. A seeded scheduler chooses which runnable thread
//! takes the next step, so different seeds explore different interleavings
//! while any single seed is reproducible.

use rand::Rng;

use crate::error::Result;
use crate::seed::rng_for;
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

use super::check_dims;
use super::metro::GreedyState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    /// Next lock to acquire, as an index into the candidate list.
    Acquiring(usize),
    /// Holding every candidate lock; the next step assigns and releases.
    Critical,
    Done,
}

pub fn route_metro_parallel(
    loads: &ExpertLoadVector,
    placement: &PlacementMap,
    seed: u64,
) -> Result<RoutingAssignment> {
    check_dims(loads, placement)?;
    let active = loads.active_experts();
    let mut rng = rng_for(seed, "metro-parallel");
    let mut owner: Vec<Option<usize>> = vec![None; placement.num_gpus()];
    let mut steps = vec![Step::Acquiring(0); active.len()];
    let mut state = GreedyState::new(placement.num_gpus());
    let mut choice = vec![None; loads.len()];
    let mut runnable = Vec::with_capacity(active.len());

    loop {
        runnable.clear();
        for (t, &step) in steps.iter().enumerate() {
            let ready = match step {
                Step::Acquiring(j) => owner[placement.replicas(active[t])[j]].is_none(),
                Step::Critical => true,
                Step::Done => false,
            };
            if ready {
                runnable.push(t);
            }
        }
        if runnable.is_empty() {
            // Ordered acquisition rules out deadlock, so nothing runnable means all done.
            debug_assert!(steps.iter().all(|&s| s == Step::Done));
            break;
        }
        let t = runnable[rng.gen_range(0..runnable.len())];
        let candidates = placement.replicas(active[t]);
        match steps[t] {
            Step::Acquiring(j) => {
                owner[candidates[j]] = Some(t);
                steps[t] = if j + 1 == candidates.len() { Step::Critical } else { Step::Acquiring(j + 1) };
            }
            Step::Critical => {
                debug_assert!(candidates.iter().all(|&g| owner[g] == Some(t)));
                choice[active[t]] = Some(state.assign(candidates));
                for &g in candidates {
                    owner[g] = None;
                }
                steps[t] = Step::Done;
            }
            Step::Done => unreachable!("done threads are never runnable"),
        }
    }
    Ok(RoutingAssignment::from_choices(loads, placement.num_gpus(), &choice))
}
