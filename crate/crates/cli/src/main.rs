//! `heurpref`: run heuristic searches, build preference datasets from the
//! resulting databases, and report on them.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, StrategyName};
use heurpref_core::search::Method;

#[derive(Debug, Parser)]
#[command(name = "heurpref", version, about = "Heuristic search and preference dataset construction")]
struct Cli {
    /// Log filter, e.g. `info` or `heurpref_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for heuristics with a text-generation endpoint.
    Search(SearchArgs),
    /// Build a preference dataset from an algorithm database.
    Sample(SampleArgs),
    /// Delta tables, top-k summaries and convergence overlays.
    Report(ReportArgs),
    /// Evaluate one heuristic source file and print the result as JSON.
    Evaluate(EvaluateArgs),
    /// Write a synthetic database with uniformly distributed gaps.
    SynthDb(SynthDbArgs),
    /// Generate an instance file for a task.
    GenInstances(GenInstancesArgs),
}

/// Options shared by commands that read a run configuration.
#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task id: asp, asp-N-W, tspN, cvrpN or cvrpN-cC.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Per-candidate time limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Number of generated evaluation instances.
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    method: Option<Method>,
    /// Charged evaluation budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    islands: Option<usize>,
    /// Feasible programs wanted by random sampling.
    #[arg(long)]
    n_feasible: Option<usize>,
    /// `stub` for the offline generator, otherwise the API base URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Starting program instead of the bundled seed.
    #[arg(long)]
    seed_program: Option<PathBuf>,
    /// Continue from an existing database.
    #[arg(long)]
    resume_db: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Algorithm database (JSON lines).
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyName>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Pool size in percent for `--strategy topk`.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Preference dataset files to compare.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Convergence CSV files to overlay.
    #[arg(long = "log")]
    logs: Vec<PathBuf>,
    /// Databases to summarize by their best programs.
    #[arg(long = "db")]
    dbs: Vec<PathBuf>,
    /// Programs per top-k summary.
    #[arg(long, default_value_t = 50)]
    k: usize,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Heuristic source file.
    #[arg(long)]
    source: PathBuf,
    /// Evaluate on this instance file instead of generated instances.
    #[arg(long)]
    instance_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthDbArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 60_000)]
    n: usize,
    #[arg(long, default_value_t = 100.0)]
    max_gap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenInstancesArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = heurpref_core::tasks::instances::DEFAULT_INSTANCE_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn merged(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(t) = &common.task {
        cfg.task = Some(t.clone());
    }
    macro_rules! set {
        ($($field:ident <- $flag:expr),*) => {
            $(if let Some(v) = $flag.clone() { cfg.$field = v; })*
        };
    }
    set!(seed <- common.seed, out_dir <- common.out_dir, parallelism <- common.parallelism,
         timeout_secs <- common.timeout, instances <- common.instances);
    if let Some(r) = &common.run_id {
        cfg.run_id = Some(r.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Search(a) => {
            let mut cfg = merged(&a.common)?;
            let s = &mut cfg.search;
            if let Some(v) = a.method {
                s.method = v;
            }
            if let Some(v) = a.budget {
                s.budget = v;
            }
            if let Some(v) = a.population {
                s.population_size = v;
            }
            if let Some(v) = a.islands {
                s.islands = v;
            }
            if let Some(v) = a.n_feasible {
                s.n_feasible = v;
            }
            if a.seed_program.is_some() {
                s.seed_program = a.seed_program;
            }
            if a.resume_db.is_some() {
                s.resume_db = a.resume_db;
            }
            let e = &mut cfg.endpoint;
            if let Some(v) = a.endpoint {
                e.base_url = v;
            }
            if let Some(v) = a.model {
                e.model_name = v;
            }
            if a.api_key_env.is_some() {
                e.api_key_env = a.api_key_env;
            }
            if let Some(v) = a.temperature {
                e.temperature = v;
            }
            if let Some(v) = a.max_tokens {
                e.max_tokens = v;
            }
            commands::search(&cfg)
        }
        Command::Sample(a) => {
            let mut cfg = merged(&a.common)?;
            let s = &mut cfg.sample;
            if a.db.is_some() {
                s.db = a.db;
            }
            if let Some(v) = a.strategy {
                s.strategy = v;
            }
            if let Some(v) = a.m {
                s.m = v;
            }
            if let Some(v) = a.tau {
                s.tau = v;
            }
            if let Some(v) = a.k {
                s.k = v;
            }
            if let Some(v) = a.pairs {
                s.pairs = v;
            }
            commands::sample(&cfg)
        }
        Command::Report(a) => {
            let cfg = merged(&a.common)?;
            commands::report(&cfg, &a.datasets, &a.logs, &a.dbs, a.k)
        }
        Command::Evaluate(a) => {
            let cfg = merged(&a.common)?;
            commands::evaluate(&cfg, &a.source, a.instance_file.as_deref())
        }
        Command::SynthDb(a) => commands::synth_db(&a.task, a.n, a.max_gap, a.seed, &a.out),
        Command::GenInstances(a) => commands::gen_instances(&a.task, a.count, a.seed, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
