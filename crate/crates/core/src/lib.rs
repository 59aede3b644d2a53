//! Token routing for expert-parallel mixture-of-experts serving.
//!
//! When a decode batch is memory-bound, a GPU's MoE layer time follows the
//! number of distinct expert replicas it activates, not the number of tokens
//! it processes. This crate provides:
//!
//! * EPLB-style replication and placement ([`placement`]);
//! * routers that pick replicas for each expert's tokens ([`routing`]):
//!   even token splitting, a greedy activated-expert minimiser, its
//!   lock-based parallel variant, a max-flow optimum and a brute-force oracle;
//! * a roofline cost model ([`costmodel`]) and a trace-driven simulator
//!   ([`simulate`]) for decode, prefill and parameter sweeps.

pub mod costmodel;
pub mod error;
pub mod flow;
pub mod placement;
pub mod profiles;
pub mod routing;
pub mod seed;
pub mod simulate;
pub mod stats;
pub mod trace;
pub mod types;
pub mod validate;
pub mod workload;

pub use costmodel::{CostProfile, LayerTiming};
pub use error::{Error, Result};
pub use routing::{route, RouterKind};
pub use trace::{Phase, Trace};
pub use types::{
    aggregate_loads, lambda_of, ClusterSpec, ExpertLoadVector, ModelSpec, PlacementMap, RoutingAssignment, TokenBatch,
    TokenRecord,
};
pub use validate::{validate_assignment, ValidationReport, Violation};
