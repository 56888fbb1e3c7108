//! Runs candidate heuristics in a child process with a hard wall-clock limit.
//!
//! Each candidate is rendered into a task scaffold (a complete Python
//! program), written to a fresh temporary directory, and executed there with
//! a cleared environment. The child gets its own process group so a timeout
//! kills everything it spawned. Isolation stops at the process level: there is
//! no filesystem or network lockdown beyond the scratch working directory.
//!
//! Protocol: `argv[1]` is the instance file, stdout carries one objective per
//! line, exit status 0 means success. The scaffold also writes the
//! constructed solutions to `solutions.json` in its working directory.

mod evaluate;

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskKind;

pub use evaluate::{EvalFailure, Evaluation, Evaluator, Revalidate};

pub const HEURISTIC_PLACEHOLDER: &str = "{{HEURISTIC}}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const KILL_GRACE: Duration = Duration::from_secs(2);
pub const MAX_OUTPUT_BYTES: usize = 1 << 20;
pub const STDERR_EXCERPT_BYTES: usize = 4 << 10;
pub const SOLUTION_FILE: &str = "solutions.json";

const PRELUDE: &str = include_str!("../../assets/scaffolds/common.py");
const ASP_TEMPLATE: &str = include_str!("../../assets/scaffolds/asp.py");
const TSP_TEMPLATE: &str = include_str!("../../assets/scaffolds/tsp.py");
const CVRP_TEMPLATE: &str = include_str!("../../assets/scaffolds/cvrp.py");

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("interpreter `{0}` not found")]
    InterpreterNotFound(String),
    #[error("interpreter command is empty")]
    EmptyInterpreter,
    #[error("timeout must be positive")]
    BadTimeout,
    #[error("candidate does not define a top-level `{0}` function")]
    MissingFunction(&'static str),
    #[error("instance file {0} does not exist")]
    MissingInstances(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scaffold template text for a task, with the placeholder still in place.
pub fn scaffold_template(kind: TaskKind) -> String {
    let body = match kind {
        TaskKind::Asp => ASP_TEMPLATE,
        TaskKind::Tsp => TSP_TEMPLATE,
        TaskKind::Cvrp => CVRP_TEMPLATE,
    };
    format!("{PRELUDE}\n\n{body}")
}

/// True if some unindented line starts a definition of `name`.
pub fn defines_function(source: &str, name: &str) -> bool {
    source.lines().any(|line| {
        line.strip_prefix("def ")
            .and_then(|rest| rest.trim_start().strip_prefix(name))
            .is_some_and(|rest| rest.trim_start().starts_with('('))
    })
}

/// Embeds `heuristic_source` into the scaffold for `kind`.
pub fn render_scaffold(kind: TaskKind, heuristic_source: &str) -> Result<String, SandboxError> {
    let name = kind.function_name();
    if !defines_function(heuristic_source, name) {
        return Err(SandboxError::MissingFunction(name));
    }
    Ok(scaffold_template(kind).replacen(HEURISTIC_PLACEHOLDER, heuristic_source.trim_end(), 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    Timeout,
    Crash,
    MalformedOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    /// Filled only when `status` is `Ok`; every value is finite.
    pub objectives: Vec<f64>,
    pub stderr_excerpt: String,
    pub wall_time: f64,
    /// Contents of the scaffold's solution file, when it produced one.
    #[serde(skip)]
    pub solutions: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExecutionRequest {
    pub task: TaskKind,
    pub heuristic_source: String,
    pub instance_path: PathBuf,
    /// Number of objectives a successful run must print.
    pub expected_objectives: usize,
    pub timeout: Duration,
    pub interpreter_cmd: Vec<String>,
}

pub fn default_interpreter() -> Vec<String> {
    vec!["python3".into(), "-I".into()]
}

/// Reads at most `cap` bytes, then keeps draining so the child never blocks
/// on a full pipe. Returns the kept bytes and whether anything was dropped.
fn capture<R: Read + Send + 'static>(mut pipe: R, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut overflow = false;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(k) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..k.min(room)]);
                    overflow |= k > room;
                }
            }
        }
        (kept, overflow)
    })
}

fn kill_group(child: &Child) {
    // the child leads its own group, so its pid is the group id
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

fn wait_with_deadline(child: &mut Child, timeout: Duration) -> std::io::Result<Option<ExitStatus>> {
    let start = Instant::now();
    let mut pause = Duration::from_millis(2);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        let elapsed = start.elapsed();
        if elapsed >= timeout {
            return Ok(None);
        }
        thread::sleep(pause.min(timeout - elapsed));
        pause = (pause * 2).min(Duration::from_millis(25));
    }
}

fn tail_excerpt(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    if text.len() <= STDERR_EXCERPT_BYTES {
        return text.into_owned();
    }
    let mut start = text.len() - STDERR_EXCERPT_BYTES;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

fn parse_objectives(stdout: &[u8], expected: usize) -> Option<Vec<f64>> {
    let text = std::str::from_utf8(stdout).ok()?;
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()?;
    (values.len() == expected).then_some(values)
}

/// Runs a rendered program in `workdir`. Configuration problems are errors;
/// anything the candidate does wrong is reported through the outcome status.
pub fn run_program(
    program: &str,
    workdir: &Path,
    request: &ExecutionRequest,
) -> Result<ExecutionOutcome, SandboxError> {
    let (exe, args) = request
        .interpreter_cmd
        .split_first()
        .ok_or(SandboxError::EmptyInterpreter)?;
    if request.timeout.is_zero() {
        return Err(SandboxError::BadTimeout);
    }
    if !request.instance_path.exists() {
        return Err(SandboxError::MissingInstances(request.instance_path.clone()));
    }
    let instance_path = request.instance_path.canonicalize()?;
    let script = workdir.join("candidate.py");
    std::fs::write(&script, program)?;

    let mut cmd = Command::new(exe);
    cmd.args(args)
        .arg(&script)
        .arg(&instance_path)
        .current_dir(workdir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("HOME", workdir)
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("OMP_NUM_THREADS", "1")
        .env("OPENBLAS_NUM_THREADS", "1")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SandboxError::InterpreterNotFound(exe.clone()))
        }
        Err(e) => return Err(e.into()),
    };
    let stdout = capture(child.stdout.take().expect("piped"), MAX_OUTPUT_BYTES);
    let stderr = capture(child.stderr.take().expect("piped"), MAX_OUTPUT_BYTES);

    let waited = wait_with_deadline(&mut child, request.timeout);
    // also reaps anything the candidate left running after a normal exit
    kill_group(&child);
    let exit = match waited {
        Ok(Some(status)) => Some(status),
        Ok(None) => {
            child.wait()?;
            None
        }
        Err(e) => {
            let _ = child.wait();
            return Err(e.into());
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    let (out, out_overflow) = stdout.join().unwrap_or_default();
    let (err, _) = stderr.join().unwrap_or_default();
    let stderr_excerpt = tail_excerpt(&err);

    let (status, objectives) = match exit {
        None => (ExecutionStatus::Timeout, Vec::new()),
        Some(s) if !s.success() => (ExecutionStatus::Crash, Vec::new()),
        Some(_) if out_overflow => (ExecutionStatus::MalformedOutput, Vec::new()),
        Some(_) => match parse_objectives(&out, request.expected_objectives) {
            Some(v) => (ExecutionStatus::Ok, v),
            None => (ExecutionStatus::MalformedOutput, Vec::new()),
        },
    };
    let solutions = if status == ExecutionStatus::Ok {
        read_capped(&workdir.join(SOLUTION_FILE))
    } else {
        None
    };
    Ok(ExecutionOutcome {
        status,
        objectives,
        stderr_excerpt,
        wall_time,
        solutions,
    })
}

fn read_capped(path: &Path) -> Option<String> {
    let file = std::fs::File::open(path).ok()?;
    let mut text = String::new();
    file.take(16 * MAX_OUTPUT_BYTES as u64).read_to_string(&mut text).ok()?;
    Some(text)
}

/// Renders the candidate and runs it in a fresh scratch directory.
pub fn execute(request: &ExecutionRequest) -> Result<ExecutionOutcome, SandboxError> {
    let program = render_scaffold(request.task, &request.heuristic_source)?;
    let jail = tempfile::Builder::new().prefix("heurpref-cand-").tempdir()?;
    run_program(&program, jail.path(), request)
}
