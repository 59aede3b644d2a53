use serde::{Deserialize, Serialize};

use crate::types::RoutingAssignment;

#[derive(Serialize)]
struct Record {
    expert: usize,
    gpu: usize,
    tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub lambda: u64,
    pub max_tokens_per_gpu: u64,
}

impl AssignmentSummary {
    pub fn of(a: &RoutingAssignment) -> Self {
        Self { lambda: a.lambda, max_tokens_per_gpu: a.max_tokens_per_gpu() }
    }
}

/// One `{"expert","gpu","tokens"}` line per non-zero `x[i,g]` (expert, then
/// GPU ascending), followed by the `{"lambda","max_tokens_per_gpu"}` summary line.
pub fn assignment_to_jsonl(a: &RoutingAssignment) -> String {
    let mut out = String::new();
    for expert in 0..a.num_experts() {
        for gpu in 0..a.num_gpus() {
            let tokens = a.x(expert, gpu);
            if tokens > 0 {
                out.push_str(&serde_json::to_string(&Record { expert, gpu, tokens }).expect("plain record"));
                out.push('\n');
            }
        }
    }
    out.push_str(&serde_json::to_string(&AssignmentSummary::of(a)).expect("plain record"));
    out.push('\n');
    out
}
