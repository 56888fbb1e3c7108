//! Search harness and preference-data factory for LLM-driven heuristic design.
//!
//! The pipeline: candidate heuristics for a combinatorial task are generated
//! by a text-generation endpoint ([`search`]), run in a sandboxed child process
//! ([`sandbox`]) against task instances ([`tasks`]), and stored with their
//! fitness in a deduplicated database ([`algodb`]). The database is then turned
//! into chosen/rejected preference pairs by rank-based sampling ([`sampler`])
//! and written out for preference training ([`dataset`]).

pub mod algodb;
pub mod dataset;
pub mod plot;
pub mod sampler;
pub mod sandbox;
pub mod search;
pub mod tasks;

pub use algodb::{synthetic_db, AlgoDb, AlgorithmRecord, InsertOutcome, NewRecord, Origin, RecordId};
pub use dataset::{DatasetManifest, DeltaRow};
pub use sampler::{PreferencePair, RankPartition, SamplerConfig, Strategy};
pub use search::{ConvergenceLog, Method, SearchConfig, SearchRun, StopReason};
pub use tasks::{FitnessReport, InstanceSet, TaskKind, TaskSpec};
