//! Run configuration: a TOML file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use heurpref_core::search::{LlmEndpoint, Method, SearchConfig};
use heurpref_core::Strategy;

/// Endpoint value that selects the built-in offline generator.
pub const STUB_ENDPOINT: &str = "stub";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Option<String>,
    /// Every random choice of a command derives from this.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub run_id: Option<String>,
    pub parallelism: usize,
    pub timeout_secs: f64,
    /// Generated instances per evaluation set.
    pub instances: usize,
    /// Fraction of candidates whose solutions the host re-checks.
    pub revalidate: f64,
    pub interpreter: Vec<String>,
    pub search: SearchSection,
    pub endpoint: LlmEndpoint,
    pub sample: SampleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            run_id: None,
            parallelism: 1,
            timeout_secs: 30.0,
            instances: heurpref_core::tasks::instances::DEFAULT_INSTANCE_COUNT,
            revalidate: 0.1,
            interpreter: heurpref_core::sandbox::default_interpreter(),
            search: SearchSection::default(),
            endpoint: LlmEndpoint::default(),
            sample: SampleSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub method: Method,
    pub budget: usize,
    pub population_size: usize,
    pub islands: usize,
    pub parents_per_prompt: usize,
    pub reset_period: usize,
    pub n_feasible: usize,
    pub batch_size: usize,
    pub max_calls: Option<u64>,
    /// Starting program; the task's bundled seed when unset.
    pub seed_program: Option<PathBuf>,
    /// Existing database to continue from.
    pub resume_db: Option<PathBuf>,
    /// Size of the top-k summary written after random sampling.
    pub topk: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            method: d.method,
            budget: d.eval_budget,
            population_size: d.population_size,
            islands: d.islands,
            parents_per_prompt: d.parents_per_prompt,
            reset_period: d.reset_period,
            n_feasible: d.n_feasible,
            batch_size: d.batch_size,
            max_calls: None,
            seed_program: None,
            resume_db: None,
            topk: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Dar,
    Top1,
    Topk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub db: Option<PathBuf>,
    pub strategy: StrategyName,
    pub m: usize,
    pub tau: f64,
    /// Pool size in percent for the top-k strategy.
    pub k: f64,
    pub pairs: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            db: None,
            strategy: StrategyName::Dar,
            m: 10,
            tau: 3.0,
            k: 5.0,
            pairs: 250,
        }
    }
}

impl SampleSection {
    pub fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyName::Dar => Strategy::Dar,
            StrategyName::Top1 => Strategy::Top1,
            StrategyName::Topk => Strategy::TopkPercent(self.k),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            method: s.method,
            eval_budget: s.budget,
            population_size: s.population_size,
            islands: s.islands,
            parents_per_prompt: s.parents_per_prompt,
            reset_period: s.reset_period,
            n_feasible: s.n_feasible,
            batch_size: s.batch_size,
            parallelism: self.parallelism,
            max_calls: s.max_calls,
            rng_seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }
}
