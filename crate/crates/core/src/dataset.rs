//! Preference dataset files, their manifests, and delta reports.
//!
//! A dataset is UTF-8 JSON lines, one [`PreferencePair`] per line with the
//! keys `prompt`, `chosen`, `rejected`, `chosen_fitness`,
//! `rejected_fitness`, `chosen_tier` and `rejected_tier`. The manifest sits
//! next to it as `<stem>.manifest.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::{delta_stats, PreferencePair, SamplerConfig, Strategy};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no preference pairs")]
    Empty,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("dataset `{0}` needs at least 2 pairs for a delta report")]
    TooSmall(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub task_id: String,
    /// `dar`, `top1` or `top{k}%`.
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_percent: Option<f64>,
    pub n_pairs: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
    /// SHA-256 of the exported source database.
    pub db_digest: String,
    pub rng_seed: u64,
}

/// Where a dataset came from, echoed into its manifest.
#[derive(Debug, Clone)]
pub struct DatasetSource<'a> {
    pub task_id: &'a str,
    pub sampler: &'a SamplerConfig,
    pub db_digest: &'a str,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    data_path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn build_manifest(
    pairs: &[PreferencePair],
    source: &DatasetSource<'_>,
) -> Result<DatasetManifest, DatasetError> {
    let stats = delta_stats(pairs).map_err(|_| DatasetError::Empty)?;
    let cfg = source.sampler;
    let (m, tau, k_percent) = match cfg.strategy {
        Strategy::Dar => (Some(cfg.m), Some(cfg.tau), None),
        Strategy::Top1 => (None, None, None),
        Strategy::TopkPercent(k) => (None, None, Some(k)),
    };
    Ok(DatasetManifest {
        task_id: source.task_id.to_string(),
        strategy: cfg.strategy.label(),
        m,
        tau,
        k_percent,
        n_pairs: pairs.len(),
        mean_delta: stats.mean,
        std_delta: stats.std,
        db_digest: source.db_digest.to_string(),
        rng_seed: cfg.rng_seed,
    })
}

pub fn write_preference_jsonl<W: Write>(pairs: &[PreferencePair], mut out: W) -> Result<(), DatasetError> {
    for p in pairs {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the pairs and the manifest next to them.
pub fn emit_preference_jsonl(
    pairs: &[PreferencePair],
    path: &Path,
    source: &DatasetSource<'_>,
) -> Result<DatasetManifest, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::Empty);
    }
    let manifest = build_manifest(pairs, source)?;
    write_preference_jsonl(pairs, BufWriter::new(File::create(path)?))?;
    save_manifest(&manifest, &manifest_path(path))?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))
}

pub fn read_preference_jsonl<R: BufRead>(input: R) -> Result<Vec<PreferencePair>, DatasetError> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn load_preference_jsonl(path: &Path) -> Result<Vec<PreferencePair>, DatasetError> {
    read_preference_jsonl(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub strategy: String,
    pub mean_delta: f64,
    pub std_delta: f64,
}

pub const DELTA_HEADER: &str = "strategy,mean_delta,std_delta";

/// Mean and population standard deviation of the deltas of each labelled
/// dataset, in input order.
pub fn delta_report(datasets: &[(String, Vec<PreferencePair>)]) -> Result<Vec<DeltaRow>, DatasetError> {
    if datasets.is_empty() {
        return Err(DatasetError::Empty);
    }
    datasets
        .iter()
        .map(|(label, pairs)| {
            if pairs.len() < 2 {
                return Err(DatasetError::TooSmall(label.clone()));
            }
            let s = delta_stats(pairs).map_err(|_| DatasetError::Empty)?;
            Ok(DeltaRow {
                strategy: label.clone(),
                mean_delta: s.mean,
                std_delta: s.std,
            })
        })
        .collect()
}

pub fn delta_csv(rows: &[DeltaRow]) -> String {
    let mut out = format!("{DELTA_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.strategy, r.mean_delta, r.std_delta));
    }
    out
}
