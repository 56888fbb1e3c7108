//! Algorithm-design tasks: admissible sets (ASP), TSP and CVRP.
//!
//! Each task knows how to generate instances, score a solution, and turn
//! objectives into percentage gaps against a reference. Small instances get
//! exact references from brute-force oracles.

pub mod asp;
pub mod cvrp;
pub mod instances;
pub mod tsp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asp::AspParams;
pub use cvrp::CvrpInstance;
pub use instances::{InstanceSet, ProblemInstance};
pub use tsp::TspInstance;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task `{0}` (expected asp, asp-N-W, tspN, cvrpN or cvrpN-cC)")]
    UnknownTask(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("reference objective must be positive, got {0}")]
    BadReference(f64),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite priority score at candidate {0}")]
    NonFiniteScore(usize),
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Asp,
    Tsp,
    Cvrp,
}

impl TaskKind {
    /// Name of the function a candidate program must define.
    pub fn function_name(self) -> &'static str {
        match self {
            TaskKind::Asp => "priority",
            TaskKind::Tsp | TaskKind::Cvrp => "select_next_node",
        }
    }

    /// The hand-written starting heuristic for this task.
    pub fn seed_source(self) -> &'static str {
        match self {
            TaskKind::Asp => include_str!("../../assets/seeds/asp.py"),
            TaskKind::Tsp => include_str!("../../assets/seeds/tsp.py"),
            TaskKind::Cvrp => include_str!("../../assets/seeds/cvrp.py"),
        }
    }

    pub fn sense(self) -> Sense {
        match self {
            TaskKind::Asp => Sense::Maximize,
            TaskKind::Tsp | TaskKind::Cvrp => Sense::Minimize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A concrete task configuration. Its [`fmt::Display`] form is the task id
/// stored with every database record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskSpec {
    Asp { n: usize, w: usize },
    Tsp { n: usize },
    Cvrp { customers: usize, capacity: u32 },
}

/// Default capacity for generated CVRP sets of a given size.
pub fn default_cvrp_capacity(customers: usize) -> u32 {
    match customers {
        0..=20 => 30,
        21..=50 => 40,
        _ => 50,
    }
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Asp { .. } => TaskKind::Asp,
            TaskSpec::Tsp { .. } => TaskKind::Tsp,
            TaskSpec::Cvrp { .. } => TaskKind::Cvrp,
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        match *self {
            TaskSpec::Asp { n, w } if w == 0 || w > n => {
                Err(TaskError::BadParams(format!("ASP needs 0 < w <= n, got n={n} w={w}")))
            }
            TaskSpec::Tsp { n } if n < 2 => {
                Err(TaskError::BadParams(format!("TSP needs n >= 2, got {n}")))
            }
            TaskSpec::Cvrp { customers: 0, .. } => {
                Err(TaskError::BadParams("CVRP needs at least one customer".into()))
            }
            TaskSpec::Cvrp { capacity, .. } if capacity < cvrp::MAX_DEMAND => Err(
                TaskError::BadParams(format!(
                    "CVRP capacity {capacity} is below the largest possible demand {}",
                    cvrp::MAX_DEMAND
                )),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TaskSpec::Asp { n, w } => write!(f, "asp-{n}-{w}"),
            TaskSpec::Tsp { n } => write!(f, "tsp{n}"),
            TaskSpec::Cvrp { customers, capacity } if capacity == default_cvrp_capacity(customers) => {
                write!(f, "cvrp{customers}")
            }
            TaskSpec::Cvrp { customers, capacity } => write!(f, "cvrp{customers}-c{capacity}"),
        }
    }
}

impl FromStr for TaskSpec {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || TaskError::UnknownTask(s.to_string());
        let num = |t: &str| t.parse::<usize>().map_err(|_| unknown());
        let lower = s.trim().to_ascii_lowercase();
        let spec = if lower == "asp" {
            TaskSpec::Asp { n: 15, w: 10 }
        } else if let Some(rest) = lower.strip_prefix("asp-") {
            let (n, w) = rest.split_once('-').ok_or_else(unknown)?;
            TaskSpec::Asp { n: num(n)?, w: num(w)? }
        } else if let Some(rest) = lower.strip_prefix("tsp") {
            TaskSpec::Tsp { n: num(rest)? }
        } else if let Some(rest) = lower.strip_prefix("cvrp") {
            match rest.split_once("-c") {
                Some((n, c)) => TaskSpec::Cvrp {
                    customers: num(n)?,
                    capacity: num(c)? as u32,
                },
                None => {
                    let customers = num(rest)?;
                    TaskSpec::Cvrp {
                        customers,
                        capacity: default_cvrp_capacity(customers),
                    }
                }
            }
        } else {
            return Err(unknown());
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Percentage gap of `objective` against `reference`; positive means worse.
pub fn compute_gap(objective: f64, reference: f64, sense: Sense) -> Result<f64, TaskError> {
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(TaskError::BadReference(reference));
    }
    Ok(match sense {
        Sense::Minimize => 100.0 * (objective - reference) / reference,
        Sense::Maximize => 100.0 * (reference - objective) / reference,
    })
}

/// Per-instance objectives and gaps for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub per_instance_objective: Vec<f64>,
    pub per_instance_gap: Vec<f64>,
    /// `None` exactly when the report is infeasible.
    pub average_gap: Option<f64>,
    pub feasible: bool,
}

impl FitnessReport {
    pub fn infeasible(objectives: Vec<f64>) -> Self {
        Self {
            per_instance_objective: objectives,
            per_instance_gap: Vec::new(),
            average_gap: None,
            feasible: false,
        }
    }
}

/// Gaps per instance plus their arithmetic mean.
pub fn aggregate(
    objectives: &[f64],
    references: &[f64],
    sense: Sense,
) -> Result<FitnessReport, TaskError> {
    if objectives.len() != references.len() {
        return Err(TaskError::LengthMismatch(objectives.len(), references.len()));
    }
    if objectives.is_empty() {
        return Err(TaskError::BadParams("no instances to aggregate".into()));
    }
    let gaps = objectives
        .iter()
        .zip(references)
        .map(|(&o, &r)| compute_gap(o, r, sense))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(FitnessReport {
        per_instance_objective: objectives.to_vec(),
        per_instance_gap: gaps,
        average_gap: Some(mean),
        feasible: true,
    })
}
