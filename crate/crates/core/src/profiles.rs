//! Built-in cost profiles derived from public model cards and GPU datasheets.
//!
//! Expert parameters are `3 * hidden * moe_intermediate` (gate, up and down
//! projections) and an expert costs `2 * params` flops per token. Dense
//! weights per layer cover attention projections, the router and any shared
//! expert; norms are ignored.

use crate::costmodel::CostProfile;
use crate::types::{ClusterSpec, ModelSpec};

/// Fixed cost of one collective launch.
pub const COLLECTIVE_LAUNCH: f64 = 20e-6;
/// One-hop link latency.
pub const LINK_LATENCY: f64 = 3e-6;

pub fn h100(num_gpus: usize) -> ClusterSpec {
    ClusterSpec {
        num_gpus,
        hbm_bandwidth: 3.35e12,
        peak_flops: 989e12,
        link_bandwidth: 450e9,
        collective_launch_overhead: COLLECTIVE_LAUNCH,
        link_base_latency: LINK_LATENCY,
    }
}

pub fn a100(num_gpus: usize) -> ClusterSpec {
    ClusterSpec {
        num_gpus,
        hbm_bandwidth: 1.555e12,
        peak_flops: 312e12,
        link_bandwidth: 600e9,
        collective_launch_overhead: COLLECTIVE_LAUNCH,
        link_base_latency: LINK_LATENCY,
    }
}

pub fn b200(num_gpus: usize) -> ClusterSpec {
    ClusterSpec {
        num_gpus,
        hbm_bandwidth: 8e12,
        peak_flops: 2.25e15,
        link_bandwidth: 900e9,
        collective_launch_overhead: COLLECTIVE_LAUNCH,
        link_base_latency: LINK_LATENCY,
    }
}

/// 256 routed experts, top-8, hidden 7168, expert intermediate 2048, FP8 weights,
/// BF16 activations, 58 MoE layers.
///
/// Expert: 3 * 7168 * 2048 = 44,040,192 params = bytes at FP8.
/// Dense per layer: MLA projections
///   q_a 7168*1536 + q_b 1536*128*192 + kv_a 7168*576 + kv_b 512*128*256 + o 128*128*7168
///   = 187,072,512
/// plus the shared expert (44,040,192) and router (7168*256 = 1,835,008).
pub fn deepseek_v3() -> ModelSpec {
    ModelSpec {
        num_experts: 256,
        top_k: 8,
        hidden_dim: 7168,
        dtype_bytes: 2,
        expert_weight_bytes: 44_040_192.0,
        dense_weight_bytes: 187_072_512.0 + 44_040_192.0 + 1_835_008.0,
        flops_per_token_per_expert: 88_080_384.0,
        num_moe_layers: 58,
    }
}

/// 128 experts, top-8, hidden 2048, expert intermediate 768, BF16, 48 layers.
///
/// Expert: 3 * 2048 * 768 = 4,718,592 params.
/// Dense per layer: 32 query heads and 4 KV heads of width 128
///   q 2048*4096 + k 2048*512 + v 2048*512 + o 4096*2048 = 18,874,368
/// plus router 2048*128 = 262,144.
pub fn qwen3_30b() -> ModelSpec {
    ModelSpec {
        num_experts: 128,
        top_k: 8,
        hidden_dim: 2048,
        dtype_bytes: 2,
        expert_weight_bytes: 2.0 * 4_718_592.0,
        dense_weight_bytes: 2.0 * (18_874_368.0 + 262_144.0),
        flops_per_token_per_expert: 2.0 * 4_718_592.0,
        num_moe_layers: 48,
    }
}

/// 128 experts, top-8, hidden 4096, expert intermediate 1536, BF16, 94 layers.
///
/// Expert: 3 * 4096 * 1536 = 18,874,368 params.
/// Dense per layer: 64 query heads and 4 KV heads of width 128
///   q 4096*8192 + k 4096*512 + v 4096*512 + o 8192*4096 = 71,303,168
/// plus router 4096*128 = 524,288.
pub fn qwen3_235b() -> ModelSpec {
    ModelSpec {
        num_experts: 128,
        top_k: 8,
        hidden_dim: 4096,
        dtype_bytes: 2,
        expert_weight_bytes: 2.0 * 18_874_368.0,
        dense_weight_bytes: 2.0 * (71_303_168.0 + 524_288.0),
        flops_per_token_per_expert: 2.0 * 18_874_368.0,
        num_moe_layers: 94,
    }
}

pub fn deepseek_v3_h100() -> CostProfile {
    CostProfile::new(h100(8), deepseek_v3())
}

pub fn qwen3_30b_a100() -> CostProfile {
    CostProfile::new(a100(8), qwen3_30b())
}

pub fn qwen3_235b_b200() -> CostProfile {
    CostProfile::new(b200(8), qwen3_235b())
}

/// Looks up a preset by name.
pub fn by_name(name: &str) -> Option<CostProfile> {
    match name {
        "deepseek-v3-h100" => Some(deepseek_v3_h100()),
        "qwen3-30b-a100" => Some(qwen3_30b_a100()),
        "qwen3-235b-b200" => Some(qwen3_235b_b200()),
        _ => None,
    }
}

pub const PRESETS: [&str; 3] = ["deepseek-v3-h100", "qwen3-30b-a100", "qwen3-235b-b200"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{activation_weight_traffic_ratio, operational_intensity, regime, Regime};

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            by_name(name).unwrap().validate().unwrap();
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn deepseek_activation_traffic_is_tiny() {
        let p = deepseek_v3_h100();
        let r = activation_weight_traffic_ratio(1024, &p);
        assert!(r < 0.006, "{r}");
    }

    #[test]
    fn deepseek_small_batches_far_below_balance_point() {
        let p = deepseek_v3_h100();
        let limit = p.cluster.flops_per_byte() / 50.0;
        for b in 1..64 {
            let oi = operational_intensity(b, &p).unwrap();
            assert!(oi < limit, "batch {b}: {oi} vs {limit}");
            assert_eq!(regime(oi, &p.cluster), Regime::MemoryBound);
        }
    }

    #[test]
    fn large_decode_batch_still_memory_bound() {
        for name in PRESETS {
            let p = by_name(name).unwrap();
            let oi = operational_intensity(1024, &p).unwrap();
            assert_eq!(regime(oi, &p.cluster), Regime::MemoryBound, "{name}");
        }
    }
}
