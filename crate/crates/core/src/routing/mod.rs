//! Token routers.
//!
//! Given per-expert token counts `T` and a placement `A`, a router decides
//! which replica(s) of each expert serve its tokens. The objective of interest
//! is `lambda`, the largest number of activated experts on any GPU.
//!
//! * [`route_eplb`] splits every expert's tokens evenly over all its replicas.
//! * [`route_metro`] sends each expert to one replica, greedily picking the
//!   GPU with the fewest activated experts so far.
//! * [`route_metro_parallel`] runs the same greedy step per expert under a
//!   seeded emulation of concurrent threads holding per-GPU locks.
//! * [`route_optimal`] finds the minimum `lambda` by binary search over
//!   capacitated bipartite matching feasibility.
//! * [`route_bruteforce`] enumerates every single-replica choice; it is the
//!   oracle for the optimal router on small instances.

mod bruteforce;
mod eplb;
mod export;
mod metro;
mod optimal;
mod parallel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bruteforce::{route_bruteforce, search_space, BRUTEFORCE_LIMIT};
pub use eplb::route_eplb;
pub use export::{assignment_to_jsonl, AssignmentSummary};
pub use metro::{metro_order, route_metro, GreedyState};
pub use optimal::{lambda_bounds, route_optimal};
pub use parallel::route_metro_parallel;

pub use crate::types::lambda_of;

use crate::error::{Error, Result};
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterKind {
    Eplb,
    Metro,
    MetroParallel,
    Optimal,
    Bruteforce,
}

impl RouterKind {
    pub const ALL: [RouterKind; 5] =
        [RouterKind::Eplb, RouterKind::Metro, RouterKind::MetroParallel, RouterKind::Optimal, RouterKind::Bruteforce];

    pub fn as_str(self) -> &'static str {
        match self {
            RouterKind::Eplb => "eplb",
            RouterKind::Metro => "metro",
            RouterKind::MetroParallel => "metro-parallel",
            RouterKind::Optimal => "optimal",
            RouterKind::Bruteforce => "bruteforce",
        }
    }

    /// Whether the router decides per expert and therefore needs the global
    /// per-expert load vector on every GPU (all-gather dispatch).
    pub fn needs_global_loads(self) -> bool {
        !matches!(self, RouterKind::Eplb)
    }

    /// Whether outputs route each expert to a single replica.
    pub fn single_replica(self) -> bool {
        !matches!(self, RouterKind::Eplb)
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RouterKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown router {s:?}; expected one of eplb, metro, metro-parallel, optimal, bruteforce"
            ))
        })
    }
}

fn check_dims(loads: &ExpertLoadVector, placement: &PlacementMap) -> Result<()> {
    if loads.len() != placement.num_experts() {
        return Err(Error::Dimension(format!(
            "load vector has {} experts, placement {}",
            loads.len(),
            placement.num_experts()
        )));
    }
    Ok(())
}

/// Runs the router named by `kind`. `seed` only affects `MetroParallel`.
pub fn route(
    kind: RouterKind,
    loads: &ExpertLoadVector,
    placement: &PlacementMap,
    seed: u64,
) -> Result<RoutingAssignment> {
    match kind {
        RouterKind::Eplb => route_eplb(loads, placement),
        RouterKind::Metro => route_metro(loads, placement),
        RouterKind::MetroParallel => route_metro_parallel(loads, placement, seed),
        RouterKind::Optimal => route_optimal(loads, placement),
        RouterKind::Bruteforce => route_bruteforce(loads, placement),
    }
}
