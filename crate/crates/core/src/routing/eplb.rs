use crate::error::Result;
use crate::types::{ExpertLoadVector, PlacementMap, RoutingAssignment};

use super::check_dims;

/// Even split: every replica of an active expert gets `floor(T/r)` tokens and
/// the first `T mod r` replicas (ascending GPU id) get one more.
pub fn route_eplb(loads: &ExpertLoadVector, placement: &PlacementMap) -> Result<RoutingAssignment> {
    check_dims(loads, placement)?;
    let mut a = RoutingAssignment::zeros(placement.num_experts(), placement.num_gpus());
    for expert in loads.active_experts() {
        let replicas = placement.replicas(expert);
        assert!(!replicas.is_empty(), "placement invariant: expert {expert} has a replica");
        let t = loads[expert];
        let r = replicas.len() as u64;
        let (base, extra) = (t / r, t % r);
        for (j, &g) in replicas.iter().enumerate() {
            let x = base + u64::from((j as u64) < extra);
            a.set(expert, g, x, x > 0);
        }
    }
    a.lambda = crate::types::lambda_of(&a);
    Ok(a)
}
