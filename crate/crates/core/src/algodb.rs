//! Deduplicated store of evaluated candidate algorithms.
//!
//! Records are keyed by a normalized form of their source text so the same
//! program is never stored twice. Invalid candidates (crashes, timeouts) are
//! kept for auditing but never appear in [`AlgoDb::ranked`].

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type RecordId = u64;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("record rejected: source text is empty")]
    EmptySource,
    #[error("record rejected: valid record has non-finite fitness {0}")]
    NonFiniteFitness(f64),
    #[error("record rejected: valid record has no fitness")]
    MissingFitness,
    #[error("no valid records for task `{0}`")]
    Empty(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate record id {id}")]
    DuplicateId { line: usize, id: RecordId },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Generated,
    Imported,
}

/// One evaluated candidate program.
///
/// `fitness` is the average gap in percent (lower is better). It is `None`
/// only for invalid records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmRecord {
    pub id: RecordId,
    pub task_id: String,
    pub source_text: String,
    pub fitness: Option<f64>,
    pub origin: Origin,
    pub valid: bool,
    pub created_at: u64,
}

/// A record before the store assigns its id and sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub task_id: String,
    pub source_text: String,
    pub fitness: Option<f64>,
    pub origin: Origin,
    pub valid: bool,
}

impl NewRecord {
    pub fn valid(task_id: &str, source: &str, fitness: f64, origin: Origin) -> Self {
        Self {
            task_id: task_id.to_string(),
            source_text: source.to_string(),
            fitness: Some(fitness),
            origin,
            valid: true,
        }
    }

    pub fn invalid(task_id: &str, source: &str, origin: Origin) -> Self {
        Self {
            task_id: task_id.to_string(),
            source_text: source.to_string(),
            fitness: None,
            origin,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted(RecordId),
    Duplicate(RecordId),
}

impl InsertOutcome {
    pub fn id(self) -> RecordId {
        match self {
            InsertOutcome::Inserted(id) | InsertOutcome::Duplicate(id) => id,
        }
    }

    pub fn is_duplicate(self) -> bool {
        matches!(self, InsertOutcome::Duplicate(_))
    }
}

/// Trims the whole text and every line. Nothing else is normalized, so two
/// programs that differ in any token are distinct.
pub fn normalize_source(source: &str) -> String {
    source
        .trim()
        .lines()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_invariants(source: &str, valid: bool, fitness: Option<f64>) -> Result<(), DbError> {
    if source.trim().is_empty() {
        return Err(DbError::EmptySource);
    }
    if valid {
        match fitness {
            None => return Err(DbError::MissingFitness),
            Some(f) if !f.is_finite() => return Err(DbError::NonFiniteFitness(f)),
            Some(_) => {}
        }
    }
    Ok(())
}

/// In-memory algorithm database with line-delimited JSON persistence.
///
/// Mutation goes through `&mut self`; share it behind an `RwLock` when
/// several readers need it.
#[derive(Debug, Clone, Default)]
pub struct AlgoDb {
    records: BTreeMap<RecordId, AlgorithmRecord>,
    by_source: HashMap<String, RecordId>,
    next_id: RecordId,
    next_seq: u64,
}

impl PartialEq for AlgoDb {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl AlgoDb {
    pub fn new() -> Self {
        Self {
            next_id: 1,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: RecordId) -> Option<&AlgorithmRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &AlgorithmRecord> {
        self.records.values()
    }

    /// Looks up a record by source, using the same normalization as insert.
    pub fn find_source(&self, source: &str) -> Option<&AlgorithmRecord> {
        self.by_source
            .get(&normalize_source(source))
            .and_then(|id| self.records.get(id))
    }

    pub fn insert(&mut self, record: NewRecord) -> Result<InsertOutcome, DbError> {
        check_invariants(&record.source_text, record.valid, record.fitness)?;
        let key = normalize_source(&record.source_text);
        if let Some(&existing) = self.by_source.get(&key) {
            return Ok(InsertOutcome::Duplicate(existing));
        }
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        let created_at = self.next_seq;
        self.next_seq += 1;
        self.by_source.insert(key, id);
        self.records.insert(
            id,
            AlgorithmRecord {
                id,
                task_id: record.task_id,
                source_text: record.source_text,
                fitness: if record.valid { record.fitness } else { None },
                origin: record.origin,
                valid: record.valid,
                created_at,
            },
        );
        Ok(InsertOutcome::Inserted(id))
    }

    /// Valid records of `task_id`, best (lowest gap) first. Ties go to the
    /// earlier insertion.
    pub fn ranked(&self, task_id: &str) -> Result<Vec<RecordId>, DbError> {
        let mut valid: Vec<&AlgorithmRecord> = self
            .records
            .values()
            .filter(|r| r.valid && r.task_id == task_id)
            .collect();
        if valid.is_empty() {
            return Err(DbError::Empty(task_id.to_string()));
        }
        valid.sort_by(|a, b| {
            let (fa, fb) = (a.fitness.unwrap_or(f64::INFINITY), b.fitness.unwrap_or(f64::INFINITY));
            fa.total_cmp(&fb).then(a.created_at.cmp(&b.created_at))
        });
        Ok(valid.into_iter().map(|r| r.id).collect())
    }

    pub fn remove(&mut self, ids: &[RecordId]) -> usize {
        let mut removed = 0;
        for id in ids {
            if let Some(rec) = self.records.remove(id) {
                self.by_source.remove(&normalize_source(&rec.source_text));
                removed += 1;
            }
        }
        removed
    }

    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.values().map(|r| r.task_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<usize, DbError> {
        for rec in self.records.values() {
            let line = serde_json::to_string(rec).expect("record serializes");
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(self.records.len())
    }

    pub fn export_jsonl(&self, path: &Path) -> Result<usize, DbError> {
        let file = File::create(path)?;
        self.write_jsonl(BufWriter::new(file))
    }

    /// Reads records into this store. Ids and sequence numbers are kept as
    /// written; a source that duplicates an existing record is skipped.
    pub fn read_jsonl<R: BufRead>(&mut self, input: R) -> Result<usize, DbError> {
        let mut count = 0;
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AlgorithmRecord =
                serde_json::from_str(&line).map_err(|e| DbError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            check_invariants(&rec.source_text, rec.valid, rec.fitness).map_err(|e| {
                DbError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                }
            })?;
            if self.records.contains_key(&rec.id) {
                return Err(DbError::DuplicateId { line: line_no, id: rec.id });
            }
            let key = normalize_source(&rec.source_text);
            if self.by_source.contains_key(&key) {
                continue;
            }
            self.next_id = self.next_id.max(rec.id + 1);
            self.next_seq = self.next_seq.max(rec.created_at + 1);
            self.by_source.insert(key, rec.id);
            self.records.insert(rec.id, rec);
            count += 1;
        }
        Ok(count)
    }

    pub fn import_jsonl(&mut self, path: &Path) -> Result<usize, DbError> {
        let file = File::open(path)?;
        self.read_jsonl(BufReader::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, DbError> {
        let mut db = Self::new();
        db.import_jsonl(path)?;
        Ok(db)
    }

    /// Hex SHA-256 of the canonical export bytes.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        hex_string(&Sha256::digest(&buf))
    }
}

/// A database of `n` distinct placeholder programs for `task_id` whose gaps
/// are drawn uniformly from `[0, max_gap)`. Used for sampler experiments and
/// benchmarks where real search output is not needed.
pub fn synthetic_db(task_id: &str, n: usize, max_gap: f64, seed: u64) -> AlgoDb {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut db = AlgoDb::new();
    for i in 0..n {
        let gap = rng.random::<f64>() * max_gap;
        let source = format!("def synthetic_{i}():\n    return {gap}\n");
        db.insert(NewRecord::valid(task_id, &source, gap, Origin::Imported))
            .expect("finite gap and non-empty source");
    }
    db
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
