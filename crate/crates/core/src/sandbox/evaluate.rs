use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use thiserror::Error;

use super::{
    default_interpreter, render_scaffold, run_program, ExecutionOutcome, ExecutionRequest,
    ExecutionStatus, SandboxError, DEFAULT_TIMEOUT,
};
use crate::tasks::{
    aggregate, asp, cvrp, tsp, FitnessReport, InstanceSet, ProblemInstance, TaskKind,
};

/// When the host re-checks the solutions a scaffold reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Revalidate {
    Always,
    Never,
    /// A fixed fraction of candidates, picked by hashing the source.
    Sampled(f64),
}

impl Revalidate {
    fn applies_to(self, source: &str) -> bool {
        match self {
            Revalidate::Always => true,
            Revalidate::Never => false,
            Revalidate::Sampled(fraction) => {
                let h = Sha256::digest(source.as_bytes());
                let x = u64::from_be_bytes(h[..8].try_into().expect("8 bytes"));
                (x as f64 / u64::MAX as f64) < fraction
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalFailure {
    #[error("render failed: {0}")]
    Render(String),
    #[error("timed out after {wall_time:.2}s")]
    Timeout { wall_time: f64 },
    #[error("crashed: {stderr}")]
    Crash { stderr: String },
    #[error("malformed output")]
    Malformed { stderr: String },
    #[error("solution failed host validation: {0}")]
    Invalid(String),
    #[error("sandbox configuration error: {0}")]
    Config(String),
}

impl EvalFailure {
    /// Whether a child process actually ran, which is what a search budget
    /// charges for.
    pub fn charged(&self) -> bool {
        !matches!(self, EvalFailure::Render(_) | EvalFailure::Config(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: Result<FitnessReport, EvalFailure>,
    pub wall_time: f64,
}

impl Evaluation {
    pub fn charged(&self) -> bool {
        match &self.result {
            Ok(_) => true,
            Err(e) => e.charged(),
        }
    }

    pub fn fitness(&self) -> Option<f64> {
        self.result.as_ref().ok().and_then(|r| r.average_gap)
    }
}

/// Evaluates candidate sources against one fixed instance set.
#[derive(Debug)]
pub struct Evaluator {
    instances: InstanceSet,
    _dir: TempDir,
    instance_path: PathBuf,
    pub timeout: Duration,
    pub interpreter_cmd: Vec<String>,
    pub revalidate: Revalidate,
}

impl Evaluator {
    pub fn new(instances: InstanceSet) -> Result<Self, SandboxError> {
        let dir = tempfile::Builder::new().prefix("heurpref-inst-").tempdir()?;
        let instance_path = dir.path().join("instances.jsonl");
        instances
            .save(&instance_path)
            .map_err(|e| SandboxError::Io(std::io::Error::other(e.to_string())))?;
        Ok(Self {
            instances,
            _dir: dir,
            instance_path,
            timeout: DEFAULT_TIMEOUT,
            interpreter_cmd: default_interpreter(),
            revalidate: Revalidate::Sampled(0.1),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_interpreter(mut self, cmd: Vec<String>) -> Self {
        self.interpreter_cmd = cmd;
        self
    }

    pub fn with_revalidate(mut self, revalidate: Revalidate) -> Self {
        self.revalidate = revalidate;
        self
    }

    pub fn instances(&self) -> &InstanceSet {
        &self.instances
    }

    pub fn instance_path(&self) -> &Path {
        &self.instance_path
    }

    pub fn kind(&self) -> TaskKind {
        self.instances.task.kind()
    }

    pub fn request(&self, source: &str) -> ExecutionRequest {
        ExecutionRequest {
            task: self.kind(),
            heuristic_source: source.to_string(),
            instance_path: self.instance_path.clone(),
            expected_objectives: self.instances.len(),
            timeout: self.timeout,
            interpreter_cmd: self.interpreter_cmd.clone(),
        }
    }

    /// Raw sandbox outcome without validation or gap computation.
    pub fn execute(&self, source: &str) -> Result<ExecutionOutcome, SandboxError> {
        super::execute(&self.request(source))
    }

    pub fn evaluate(&self, source: &str) -> Evaluation {
        let program = match render_scaffold(self.kind(), source) {
            Ok(p) => p,
            Err(e) => {
                return Evaluation {
                    result: Err(EvalFailure::Render(e.to_string())),
                    wall_time: 0.0,
                }
            }
        };
        let outcome = tempfile::Builder::new()
            .prefix("heurpref-cand-")
            .tempdir()
            .map_err(SandboxError::from)
            .and_then(|jail| run_program(&program, jail.path(), &self.request(source)));
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                return Evaluation {
                    result: Err(EvalFailure::Config(e.to_string())),
                    wall_time: 0.0,
                }
            }
        };
        let wall_time = outcome.wall_time;
        let result = match outcome.status {
            ExecutionStatus::Timeout => Err(EvalFailure::Timeout { wall_time }),
            ExecutionStatus::Crash => Err(EvalFailure::Crash {
                stderr: outcome.stderr_excerpt,
            }),
            ExecutionStatus::MalformedOutput => Err(EvalFailure::Malformed {
                stderr: outcome.stderr_excerpt,
            }),
            ExecutionStatus::Ok => self.score(source, &outcome),
        };
        Evaluation { result, wall_time }
    }

    fn score(&self, source: &str, outcome: &ExecutionOutcome) -> Result<FitnessReport, EvalFailure> {
        if self.revalidate.applies_to(source) {
            let text = outcome
                .solutions
                .as_deref()
                .ok_or_else(|| EvalFailure::Invalid("no solution file".into()))?;
            validate_solutions(&self.instances, &outcome.objectives, text).map_err(EvalFailure::Invalid)?;
        }
        aggregate(
            &outcome.objectives,
            &self.instances.references(),
            self.kind().sense(),
        )
        .map_err(|e| EvalFailure::Invalid(e.to_string()))
    }

    /// Evaluates every source with at most `parallelism` children alive at
    /// once. Results are indexed like `sources`, whatever the finishing order.
    pub fn batch_evaluate(&self, sources: &[String], parallelism: usize) -> Vec<Evaluation> {
        let workers = parallelism.max(1).min(sources.len());
        if workers <= 1 {
            return sources.iter().map(|s| self.evaluate(s)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Evaluation>>> = Mutex::new(vec![None; sources.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= sources.len() {
                        break;
                    }
                    let eval = self.evaluate(&sources[i]);
                    slots.lock().expect("no poisoned workers")[i] = Some(eval);
                });
            }
        });
        slots
            .into_inner()
            .expect("no poisoned workers")
            .into_iter()
            .map(|e| e.expect("every index evaluated"))
            .collect()
    }
}

const OBJECTIVE_TOLERANCE: f64 = 1e-9;

fn close(reported: f64, recomputed: f64) -> bool {
    (reported - recomputed).abs() <= OBJECTIVE_TOLERANCE * recomputed.abs().max(1.0)
}

/// Re-checks the scaffold's solutions against the instances and the
/// objectives it printed.
pub fn validate_solutions(set: &InstanceSet, objectives: &[f64], text: &str) -> Result<(), String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let per_instance = value.as_array().ok_or("solution file is not a list")?;
    if per_instance.len() != set.len() || objectives.len() != set.len() {
        return Err(format!(
            "{} solutions and {} objectives for {} instances",
            per_instance.len(),
            objectives.len(),
            set.len()
        ));
    }
    for (idx, ((inst, sol), &obj)) in set.instances.iter().zip(per_instance).zip(objectives).enumerate() {
        let fail = |msg: &str| Err(format!("instance {idx}: {msg}"));
        match inst {
            ProblemInstance::Asp(p) => {
                let vectors: Vec<Vec<u8>> = serde_json::from_value(sol.clone()).map_err(|e| e.to_string())?;
                if vectors.len() as f64 != obj {
                    return fail("set size differs from reported objective");
                }
                if !asp::is_admissible(&vectors, p.n, p.w) {
                    return fail("set is not admissible");
                }
            }
            ProblemInstance::Tsp(t) => {
                let route: Vec<usize> = serde_json::from_value(sol.clone()).map_err(|e| e.to_string())?;
                if !tsp::validate(&route, t.n()) {
                    return fail("route is not a permutation");
                }
                if !close(obj, tsp::tour_length(&route, &t.dist)) {
                    return fail("tour length differs from reported objective");
                }
            }
            ProblemInstance::Cvrp(c) => {
                let routes: Vec<Vec<usize>> = serde_json::from_value(sol.clone()).map_err(|e| e.to_string())?;
                if !cvrp::cvrp_feasible(&routes, c) {
                    return fail("routes are infeasible");
                }
                if !close(obj, cvrp::cvrp_cost(&routes, c)) {
                    return fail("route cost differs from reported objective");
                }
            }
        }
    }
    Ok(())
}
