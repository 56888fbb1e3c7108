//! Fixed task prompts, operator prompts, and code extraction from replies.

use std::fmt::Write as _;

use crate::sandbox::defines_function;
use crate::tasks::{TaskKind, TaskSpec};

const ASP_PROMPT: &str = include_str!("../../assets/prompts/asp.txt");
const TSP_PROMPT: &str = include_str!("../../assets/prompts/tsp.txt");
const CVRP_PROMPT: &str = include_str!("../../assets/prompts/cvrp.txt");

/// The fixed prompt `x` for a task: a task description followed by the
/// function template. ASP prompts carry the instance size, so `asp-15-10`
/// gets the bundled text unchanged and other sizes get it rewritten.
pub fn build_prompt(task: &TaskSpec) -> String {
    match *task {
        TaskSpec::Asp { n: 15, w: 10 } => ASP_PROMPT.to_string(),
        TaskSpec::Asp { n, w } => ASP_PROMPT
            .replace("we set n=15 and w=10", &format!("we set n={n} and w={w}"))
            .replace("n: int = 15, w: int = 10", &format!("n: int = {n}, w: int = {w}")),
        TaskSpec::Tsp { .. } => TSP_PROMPT.to_string(),
        TaskSpec::Cvrp { .. } => CVRP_PROMPT.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractError {
    NoCode,
    MissingFunction(&'static str),
}

impl std::fmt::Display for ExtractError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtractError::NoCode => write!(f, "no code in response"),
            ExtractError::MissingFunction(name) => write!(f, "code does not define `{name}`"),
        }
    }
}

impl std::error::Error for ExtractError {}

/// Contents of the first fenced block, or everything from the first `def`
/// when the reply has no fence. The result must define the task function.
pub fn extract_code(response: &str, kind: TaskKind) -> Result<String, ExtractError> {
    let code = first_fenced_block(response)
        .or_else(|| from_first_def(response))
        .map(|c| c.trim_end().to_string())
        .filter(|c| !c.trim().is_empty())
        .ok_or(ExtractError::NoCode)?;
    let name = kind.function_name();
    if !defines_function(&code, name) {
        return Err(ExtractError::MissingFunction(name));
    }
    Ok(code + "\n")
}

fn first_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let mut body = String::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(body);
        }
        body.push_str(line);
        body.push('\n');
    }
    // an unterminated fence still counts
    Some(body)
}

fn from_first_def(text: &str) -> Option<String> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.starts_with("def ") {
            return Some(text[offset..].to_string());
        }
        offset += line.len();
    }
    None
}

/// A program shown to the model inside an operator prompt.
#[derive(Debug, Clone, Copy)]
pub struct ShownProgram<'a> {
    pub source: &'a str,
    pub fitness: f64,
}

fn fenced(out: &mut String, source: &str) {
    let _ = writeln!(out, "```python\n{}\n```", source.trim_end());
}

/// Asks for a new algorithm unlike the two parents.
pub fn combine_prompt(task: &TaskSpec, a: ShownProgram<'_>, b: ShownProgram<'_>) -> String {
    let mut p = String::from("I have 2 existing algorithms with their codes as follows:\n\n");
    for (i, prog) in [a, b].iter().enumerate() {
        let _ = writeln!(p, "No.{} algorithm (average gap {:.4}%):", i + 1, prog.fitness);
        fenced(&mut p, prog.source);
        p.push('\n');
    }
    p.push_str(
        "Please create a new algorithm that has a different form from the given ones \
         and aims for a lower average gap.\n\n",
    );
    p + &build_prompt(task)
}

/// Asks for an improved version of one parent.
pub fn refine_prompt(task: &TaskSpec, parent: ShownProgram<'_>) -> String {
    let mut p = format!(
        "I have one algorithm with its code as follows (average gap {:.4}%):\n\n",
        parent.fitness
    );
    fenced(&mut p, parent.source);
    p.push_str("\nPlease modify it to obtain a version with a lower average gap.\n\n");
    p + &build_prompt(task)
}

/// Best-shot prompt: earlier versions in ascending quality, then a request
/// for the next one.
pub fn versions_prompt(task: &TaskSpec, versions: &[ShownProgram<'_>]) -> String {
    let mut p = String::from("Below are previous versions of the function, from worst to best.\n\n");
    for (i, v) in versions.iter().enumerate() {
        let _ = writeln!(p, "v{i}:");
        fenced(&mut p, v.source);
        p.push('\n');
    }
    let _ = writeln!(
        p,
        "Write v{}, an improved version of `{}`. Keep the function name unchanged.\n",
        versions.len(),
        task.kind().function_name()
    );
    p + &build_prompt(task)
}
