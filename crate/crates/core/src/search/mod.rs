//! Model-driven heuristic search: simplified EoH and FunSearch loops plus
//! repeated sampling from the fixed prompt. Every evaluated candidate lands
//! in the algorithm database.

pub mod eoh;
pub mod funsearch;
pub mod llm;
pub mod prompt;
pub mod random;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algodb::{AlgoDb, DbError, InsertOutcome, NewRecord, Origin, RecordId};
use crate::sandbox::{EvalFailure, Evaluator};
use crate::tasks::TaskSpec;

pub use eoh::run_eoh;
pub use funsearch::run_funsearch;
pub use llm::{ChatClient, LlmEndpoint, LlmError, ScriptedGenerator, StubGenerator, TextGenerator};
pub use prompt::{build_prompt, extract_code, ExtractError};
pub use random::run_random_sampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eoh,
    Funsearch,
    RandomSampling,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "eoh" => Ok(Method::Eoh),
            "funsearch" => Ok(Method::Funsearch),
            "random_sampling" | "random" => Ok(Method::RandomSampling),
            _ => Err(format!("unknown method `{s}` (eoh, funsearch, random_sampling)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub method: Method,
    /// Charged sandbox evaluations allowed (EoH and FunSearch).
    pub eval_budget: usize,
    pub population_size: usize,
    pub islands: usize,
    pub parents_per_prompt: usize,
    /// FunSearch resets the worse half of its islands this often.
    pub reset_period: usize,
    /// Feasible samples wanted from random sampling.
    pub n_feasible: usize,
    /// Prompts per FunSearch or random-sampling step. Fixed so results do
    /// not depend on `parallelism`.
    pub batch_size: usize,
    pub parallelism: usize,
    /// Stop after this many model calls; defaults to 20 per budgeted
    /// evaluation, which only matters when replies are mostly unusable.
    pub max_calls: Option<u64>,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            method: Method::Eoh,
            eval_budget: 2000,
            population_size: 20,
            islands: 4,
            parents_per_prompt: 2,
            reset_period: 500,
            n_feasible: 1000,
            batch_size: 4,
            parallelism: 1,
            max_calls: None,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.eval_budget == 0 {
            return bad("eval_budget must be >= 1");
        }
        if self.method == Method::Eoh && self.population_size < 2 {
            return bad("population_size must be >= 2");
        }
        if self.islands == 0 || self.parents_per_prompt == 0 {
            return bad("islands and parents_per_prompt must be >= 1");
        }
        if self.reset_period == 0 || self.batch_size == 0 {
            return bad("reset_period and batch_size must be >= 1");
        }
        Ok(())
    }

    fn call_limit(&self) -> u64 {
        self.max_calls
            .unwrap_or_else(|| (self.eval_budget as u64).saturating_mul(20).saturating_add(100))
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("seed program is not valid: {0}")]
    InvalidSeed(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("fewer than {k} valid records for {task} (have {have})")]
    TooFewRecords { task: String, k: usize, have: usize },
    #[error("convergence log line {line}: {message}")]
    LogFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why a run ended. Everything except `Budget` and `Target` leaves a
/// partial but consistent database and log behind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Target,
    Endpoint { message: String },
    Sandbox { message: String },
    LowFeasibility { calls: u64, feasible: u64 },
    Stalled { calls: u64 },
}

impl StopReason {
    pub fn is_complete(&self) -> bool {
        matches!(self, StopReason::Budget | StopReason::Target)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub calls: u64,
    pub charged: usize,
    pub parse_failures: usize,
    pub duplicates: usize,
    pub invalid: usize,
    pub inserted: usize,
    pub feasible: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eval_index: usize,
    pub best_1: Option<f64>,
    pub best_5_mean: Option<f64>,
    pub best_10_mean: Option<f64>,
}

/// One row per charged evaluation, summarizing the valid candidates seen
/// so far in the run. Means over fewer than k candidates are left empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_HEADER: &str = "eval_index,best_1,best_5_mean,best_10_mean";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ConvergenceLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_best(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.best_1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CONVERGENCE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.eval_index,
                cell(r.best_1),
                cell(r.best_5_mean),
                cell(r.best_10_mean)
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SearchError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SearchError> {
        let mut rows = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let err = |message: String| SearchError::LogFormat { line: i + 1, message };
            if i == 0 {
                if line.trim() != CONVERGENCE_HEADER {
                    return Err(err(format!("expected header `{CONVERGENCE_HEADER}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", fields.len())));
            }
            let opt = |s: &str| -> Result<Option<f64>, SearchError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| err(format!("bad number `{s}`")))
                }
            };
            rows.push(ConvergenceRow {
                eval_index: fields[0].parse().map_err(|_| err("bad eval_index".into()))?,
                best_1: opt(fields[1])?,
                best_5_mean: opt(fields[2])?,
                best_10_mean: opt(fields[3])?,
            });
        }
        Ok(Self { rows })
    }

    pub fn load_csv(path: &Path) -> Result<Self, SearchError> {
        Self::read_csv(BufReader::new(std::fs::File::open(path)?))
    }
}

/// Outcome of a search run.
#[derive(Debug, Clone)]
pub struct SearchRun {
    pub log: ConvergenceLog,
    pub stats: SearchStats,
    pub stop: StopReason,
    /// Population size after each EoH iteration; empty for other methods.
    pub population_sizes: Vec<usize>,
}

/// Everything a search loop needs besides its configuration.
pub struct SearchContext<'a> {
    pub task: TaskSpec,
    pub evaluator: &'a Evaluator,
    pub generator: &'a dyn TextGenerator,
    /// Starting program; the task's bundled seed when `None`.
    pub seed_source: Option<String>,
}

/// A program with a valid fitness taking part in selection.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Member {
    pub id: RecordId,
    pub source: String,
    pub fitness: f64,
}

pub(crate) fn sort_members(members: &mut [Member]) {
    members.sort_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.id.cmp(&b.id)));
}

/// Result of one prompt in a batch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Offspring {
    /// No usable code, or over budget; nothing was evaluated.
    Discarded,
    /// Evaluated now or earlier and stored; `member` is set when valid.
    Known { member: Option<Member>, cached: bool },
}

impl Offspring {
    pub fn member(&self) -> Option<&Member> {
        match self {
            Offspring::Known { member, .. } => member.as_ref(),
            Offspring::Discarded => None,
        }
    }

    pub fn feasible(&self) -> bool {
        self.member().is_some()
    }
}

/// Budget accounting, database insertion and logging shared by all loops.
/// Model calls and sandbox runs happen in parallel; their results are
/// applied in prompt order, so runs only depend on the seed.
pub(crate) struct Engine<'a> {
    ctx: &'a SearchContext<'a>,
    task_id: String,
    db: &'a mut AlgoDb,
    budget: Option<usize>,
    parallelism: usize,
    call_limit: u64,
    best: Vec<f64>,
    pub log: ConvergenceLog,
    pub stats: SearchStats,
}

impl<'a> Engine<'a> {
    pub fn new(
        ctx: &'a SearchContext<'a>,
        db: &'a mut AlgoDb,
        config: &SearchConfig,
        budget: Option<usize>,
    ) -> Self {
        Self {
            task_id: ctx.task.id(),
            ctx,
            db,
            budget,
            parallelism: config.parallelism.max(1),
            call_limit: match budget {
                Some(_) => config.call_limit(),
                None => config.max_calls.unwrap_or(u64::MAX),
            },
            best: Vec::new(),
            log: ConvergenceLog::default(),
            stats: SearchStats::default(),
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.ctx.task
    }

    pub fn remaining(&self) -> usize {
        self.budget.map_or(usize::MAX, |b| b.saturating_sub(self.stats.charged))
    }

    pub fn finish(self, stop: StopReason, population_sizes: Vec<usize>) -> SearchRun {
        log::info!(
            "search stopped ({stop:?}): {} charged evaluations, {} calls",
            self.stats.charged,
            self.stats.calls
        );
        SearchRun {
            log: self.log,
            stats: self.stats,
            stop,
            population_sizes,
        }
    }

    /// Valid records of this task already in the database, best first.
    pub fn existing_members(&self) -> Vec<Member> {
        self.db
            .ranked(&self.task_id)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|id| self.db.get(id))
            .map(|r| Member {
                id: r.id,
                source: r.source_text.clone(),
                fitness: r.fitness.expect("valid records have fitness"),
            })
            .collect()
    }

    /// Evaluates the starting program, or reuses its stored fitness.
    pub fn seed(&mut self) -> Result<Result<Member, StopReason>, SearchError> {
        let kind = self.ctx.task.kind();
        let source = self
            .ctx
            .seed_source
            .clone()
            .unwrap_or_else(|| kind.seed_source().to_string());
        if let Some(rec) = self.db.find_source(&source).filter(|r| r.task_id == self.task_id) {
            return match rec.fitness {
                Some(fitness) if rec.valid => {
                    let m = Member { id: rec.id, source: rec.source_text.clone(), fitness };
                    self.observe(fitness);
                    Ok(Ok(m))
                }
                _ => Err(SearchError::InvalidSeed("stored as invalid in the database".into())),
            };
        }
        if self.remaining() == 0 {
            return Ok(Err(StopReason::Budget));
        }
        let eval = self.ctx.evaluator.evaluate(&source);
        match &eval.result {
            Err(EvalFailure::Config(m)) => {
                return Ok(Err(StopReason::Sandbox { message: m.clone() }))
            }
            Err(e) => return Err(SearchError::InvalidSeed(e.to_string())),
            Ok(_) => {}
        }
        let fitness = eval
            .fitness()
            .ok_or_else(|| SearchError::InvalidSeed("no fitness".into()))?;
        let id = self
            .db
            .insert(NewRecord::valid(&self.task_id, &source, fitness, Origin::Seed))?
            .id();
        self.stats.charged += 1;
        self.stats.inserted += 1;
        self.observe(fitness);
        self.push_row();
        Ok(Ok(Member { id, source, fitness }))
    }

    fn observe(&mut self, fitness: f64) {
        let pos = self.best.partition_point(|&b| b <= fitness);
        if pos < 10 {
            self.best.insert(pos, fitness);
            self.best.truncate(10);
        }
    }

    fn push_row(&mut self) {
        let mean = |k: usize| (self.best.len() >= k).then(|| self.best[..k].iter().sum::<f64>() / k as f64);
        self.log.rows.push(ConvergenceRow {
            eval_index: self.stats.charged,
            best_1: self.best.first().copied(),
            best_5_mean: mean(5),
            best_10_mean: mean(10),
        });
    }

    fn generate_all(&mut self, prompts: &[String]) -> Vec<Result<String, LlmError>> {
        let first = self.stats.calls;
        self.stats.calls += prompts.len() as u64;
        let gen = self.ctx.generator;
        let workers = self.parallelism.min(prompts.len());
        if workers <= 1 {
            return prompts
                .iter()
                .enumerate()
                .map(|(i, p)| gen.generate(p, first + i as u64))
                .collect();
        }
        let mut out: Vec<Option<Result<String, LlmError>>> = vec![None; prompts.len()];
        let chunk = prompts.len().div_ceil(workers);
        std::thread::scope(|scope| {
            for (c, slots) in out.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    for (j, slot) in slots.iter_mut().enumerate() {
                        let i = c * chunk + j;
                        *slot = Some(gen.generate(&prompts[i], first + i as u64));
                    }
                });
            }
        });
        out.into_iter().map(|r| r.expect("every prompt answered")).collect()
    }

    /// Sends each prompt to the model, evaluates new programs within the
    /// remaining budget, and records the results.
    pub fn run_batch(&mut self, prompts: &[String]) -> Result<Vec<Offspring>, StopReason> {
        if self.stats.calls >= self.call_limit {
            return Err(StopReason::Stalled { calls: self.stats.calls });
        }
        let replies = self.generate_all(prompts);
        if let Some(Err(e)) = replies.iter().find(|r| r.is_err()) {
            return Err(StopReason::Endpoint { message: e.to_string() });
        }
        let kind = self.ctx.task.kind();
        let mut results = vec![Offspring::Discarded; prompts.len()];
        let mut queued: Vec<(usize, String)> = Vec::new();
        let mut pending_dupes: Vec<(usize, usize)> = Vec::new();
        let budget = self.remaining();
        for (i, reply) in replies.into_iter().enumerate() {
            let code = match extract_code(&reply.expect("checked above"), kind) {
                Ok(c) => c,
                Err(_) => {
                    self.stats.parse_failures += 1;
                    continue;
                }
            };
            if let Some(rec) = self.db.find_source(&code).filter(|r| r.task_id == self.task_id) {
                self.stats.duplicates += 1;
                results[i] = Offspring::Known {
                    member: rec.fitness.filter(|_| rec.valid).map(|fitness| Member {
                        id: rec.id,
                        source: rec.source_text.clone(),
                        fitness,
                    }),
                    cached: true,
                };
                continue;
            }
            let norm = crate::algodb::normalize_source(&code);
            if let Some(q) = queued
                .iter()
                .position(|(_, c)| crate::algodb::normalize_source(c) == norm)
            {
                self.stats.duplicates += 1;
                pending_dupes.push((i, queued[q].0));
                continue;
            }
            if queued.len() < budget {
                queued.push((i, code));
            }
        }

        let sources: Vec<String> = queued.iter().map(|(_, c)| c.clone()).collect();
        let evals = self.ctx.evaluator.batch_evaluate(&sources, self.parallelism);
        let mut stop = None;
        for ((i, code), eval) in queued.into_iter().zip(evals) {
            match &eval.result {
                Err(EvalFailure::Config(m)) => {
                    stop.get_or_insert(StopReason::Sandbox { message: m.clone() });
                    continue;
                }
                Err(EvalFailure::Render(_)) => {
                    self.stats.parse_failures += 1;
                    continue;
                }
                _ => {}
            }
            self.stats.charged += 1;
            let fitness = eval.fitness();
            let record = match fitness {
                Some(f) => NewRecord::valid(&self.task_id, &code, f, Origin::Generated),
                None => {
                    self.stats.invalid += 1;
                    NewRecord::invalid(&self.task_id, &code, Origin::Generated)
                }
            };
            let id = match self.db.insert(record) {
                Ok(InsertOutcome::Inserted(id)) => {
                    self.stats.inserted += 1;
                    Some(id)
                }
                // same text stored under another task id; keep the earlier record
                Ok(InsertOutcome::Duplicate(_)) => None,
                Err(e) => {
                    log::warn!("not stored: {e}");
                    None
                }
            };
            if let Some(f) = fitness {
                self.observe(f);
            }
            self.push_row();
            results[i] = Offspring::Known {
                member: fitness.zip(id).map(|(fitness, id)| Member { id, source: code, fitness }),
                cached: false,
            };
        }
        for (i, src) in pending_dupes {
            if let Offspring::Known { member, .. } = results[src].clone() {
                results[i] = Offspring::Known { member, cached: true };
            }
        }
        match stop {
            Some(s) => Err(s),
            None => Ok(results),
        }
    }
}

/// Picks an index from `n` ranked items (0 = best) with probability
/// proportional to `1 / (rank + 1 + n)`.
pub(crate) fn rank_select<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    let weights: Vec<f64> = (0..n).map(|r| 1.0 / (r + 1 + n) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    n - 1
}

/// `k` distinct rank-selected indices.
pub(crate) fn rank_select_distinct<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut left: Vec<usize> = (0..n).collect();
    let mut picked = Vec::with_capacity(k.min(n));
    while picked.len() < k && !left.is_empty() {
        let j = rank_select(left.len(), rng);
        picked.push(left.remove(j));
    }
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkSummary {
    /// Best `k` gaps, ascending.
    pub gaps: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn topk_summary(db: &AlgoDb, task_id: &str, k: usize) -> Result<TopkSummary, SearchError> {
    let ranked = db.ranked(task_id).unwrap_or_default();
    if k == 0 || ranked.len() < k {
        return Err(SearchError::TooFewRecords {
            task: task_id.to_string(),
            k,
            have: ranked.len(),
        });
    }
    let gaps: Vec<f64> = ranked[..k]
        .iter()
        .map(|id| db.get(*id).and_then(|r| r.fitness).expect("ranked records are valid"))
        .collect();
    let mean = gaps.iter().sum::<f64>() / k as f64;
    let std = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(TopkSummary { gaps, mean, std })
}
