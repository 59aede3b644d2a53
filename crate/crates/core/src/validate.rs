//! Checks a [`RoutingAssignment`] against the routing problem's constraints:
//!
//! 1. per-GPU activated experts do not exceed `lambda`;
//! 2. every expert's tokens are fully routed;
//! 3. tokens and activations only land on GPUs hosting the expert;
//! 4. tokens only land on GPUs where the expert is activated.
//!
//! Optionally also checks single-replica form (each expert's tokens go to at
//! most one GPU), which every expert-level router must produce.

use std::fmt;

use crate::error::{Error, Result};
use crate::types::{lambda_of, ExpertLoadVector, PlacementMap, RoutingAssignment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Constraint (1): GPU activates more experts than `lambda`.
    Capacity { gpu: usize, activated: u64, lambda: u64 },
    /// Constraint (2): routed tokens do not add up to the expert's load.
    Conservation { expert: usize, routed: u64, expected: u64 },
    /// Constraint (3): routing to, or activating on, a GPU without a replica.
    Placement { expert: usize, gpu: usize },
    /// Constraint (4): tokens routed to a GPU where the expert is not activated.
    Activation { expert: usize, gpu: usize },
    /// Tokens of one expert spread over several replicas.
    SplitExpert { expert: usize, gpus: Vec<usize> },
    /// Stored `lambda` differs from the maximum column sum of `y`.
    LambdaNotTight { stored: u64, actual: u64 },
}

impl Violation {
    /// Constraint number for the four problem constraints; `None` for the extra checks.
    pub fn constraint(&self) -> Option<u8> {
        match self {
            Violation::Capacity { .. } => Some(1),
            Violation::Conservation { .. } => Some(2),
            Violation::Placement { .. } => Some(3),
            Violation::Activation { .. } => Some(4),
            Violation::SplitExpert { .. } | Violation::LambdaNotTight { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Capacity { gpu, activated, lambda } => {
                write!(f, "(1) GPU {gpu} activates {activated} experts > lambda {lambda}")
            }
            Violation::Conservation { expert, routed, expected } => {
                write!(f, "(2) expert {expert} routes {routed} of {expected} tokens")
            }
            Violation::Placement { expert, gpu } => {
                write!(f, "(3) expert {expert} used on GPU {gpu} which does not host it")
            }
            Violation::Activation { expert, gpu } => {
                write!(f, "(4) expert {expert} sends tokens to GPU {gpu} without activation")
            }
            Violation::SplitExpert { expert, gpus } => {
                write!(f, "expert {expert} split across GPUs {gpus:?}")
            }
            Violation::LambdaNotTight { stored, actual } => {
                write!(f, "stored lambda {stored} != max activated {actual}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when constraints (1)-(4) hold, ignoring the extra checks.
    pub fn constraints_hold(&self) -> bool {
        self.violations.iter().all(|v| v.constraint().is_none())
    }

    pub fn violates(&self, constraint: u8) -> bool {
        self.violations.iter().any(|v| v.constraint() == Some(constraint))
    }

    pub fn has_split(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::SplitExpert { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_assignment(
    a: &RoutingAssignment,
    placement: &PlacementMap,
    loads: &ExpertLoadVector,
    require_single_replica: bool,
) -> Result<ValidationReport> {
    let (n, g) = (a.num_experts(), a.num_gpus());
    if placement.num_experts() != n || placement.num_gpus() != g || loads.len() != n {
        return Err(Error::Dimension(format!(
            "assignment {n}x{g}, placement {}x{}, loads {}",
            placement.num_experts(),
            placement.num_gpus(),
            loads.len()
        )));
    }
    let mut violations = Vec::new();

    for (gpu, &activated) in a.activated_per_gpu().iter().enumerate() {
        if activated > a.lambda {
            violations.push(Violation::Capacity { gpu, activated, lambda: a.lambda });
        }
    }
    for expert in 0..n {
        let routed: u64 = (0..g).map(|gpu| a.x(expert, gpu)).sum();
        if routed != loads[expert] {
            violations.push(Violation::Conservation { expert, routed, expected: loads[expert] });
        }
        for gpu in 0..g {
            let (x, y) = (a.x(expert, gpu), a.y(expert, gpu));
            if !placement.hosts(expert, gpu) && (x > 0 || y) {
                violations.push(Violation::Placement { expert, gpu });
            }
            if x > loads[expert] * u64::from(y) {
                violations.push(Violation::Activation { expert, gpu });
            }
        }
        if require_single_replica {
            let gpus: Vec<usize> = (0..g).filter(|&gpu| a.x(expert, gpu) > 0).collect();
            if gpus.len() > 1 {
                violations.push(Violation::SplitExpert { expert, gpus });
            }
        }
    }
    let actual = lambda_of(a);
    if actual != a.lambda {
        violations.push(Violation::LambdaNotTight { stored: a.lambda, actual });
    }
    Ok(ValidationReport { violations })
}
