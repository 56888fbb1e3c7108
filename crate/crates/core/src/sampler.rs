//! Diversity-aware rank-based (DAR) preference sampling and the Top-1 /
//! Top-k% baselines.
//!
//! DAR splits the ranked database into `M` equally sized tiers. A positive
//! tier `i` is chosen from the first `M - 2` tiers with probability
//! proportional to `exp((M - 2 - i) / tau)`, the chosen program is drawn
//! uniformly from tier `i`, and the rejected program uniformly from tiers
//! `i + 2 ..= M`. The tier directly below `i` is never used for the rejected
//! side, so every pair spans at least one full quality tier. Both programs are
//! removed from the working partition after each draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algodb::{AlgoDb, DbError, RecordId};

/// Consecutive failed tier draws tolerated before a build gives up.
pub const MAX_TIER_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("subset count M must be at least 3, got {0}")]
    TooFewSubsets(usize),
    #[error("need at least M={m} ranked records, got {n}")]
    TooFewRecords { n: usize, m: usize },
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("k must lie strictly between 0 and 100, got {0}")]
    BadPercent(f64),
    #[error("tier {tier} or its negative pool is exhausted")]
    Depleted { tier: usize },
    #[error("database exhausted after {} of {requested} pairs", built.len())]
    Partial {
        built: Vec<PreferencePair>,
        requested: usize,
    },
    #[error("cannot summarize an empty pair list")]
    NoPairs,
    #[error(transparent)]
    Db(#[from] DbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Strategy {
    Dar,
    Top1,
    TopkPercent(f64),
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Dar => "dar".into(),
            Strategy::Top1 => "top1".into(),
            Strategy::TopkPercent(k) => format!("top{k}%"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub m: usize,
    pub tau: f64,
    pub strategy: Strategy,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            m: 10,
            tau: 3.0,
            strategy: Strategy::Dar,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.m < 3 {
            return Err(SampleError::TooFewSubsets(self.m));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SampleError::BadTemperature(self.tau));
        }
        if let Strategy::TopkPercent(k) = self.strategy {
            if !(k > 0.0 && k < 100.0) {
                return Err(SampleError::BadPercent(k));
            }
        }
        Ok(())
    }
}

/// A training triple. Tiers are 1-based; baselines record 0 for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencePair {
    pub prompt: String,
    #[serde(rename = "chosen")]
    pub chosen_source: String,
    #[serde(rename = "rejected")]
    pub rejected_source: String,
    pub chosen_fitness: f64,
    pub rejected_fitness: f64,
    pub chosen_tier: usize,
    pub rejected_tier: usize,
}

/// The ranked ids split into `M` equally sized, fitness-ordered tiers.
///
/// Tier contents shrink as pairs are drawn; their order inside a tier is not
/// meaningful after the first removal.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPartition {
    subsets: Vec<Vec<RecordId>>,
    subset_size: usize,
    discarded: Vec<RecordId>,
}

impl RankPartition {
    /// `ranked` must be best-first. The `N mod M` worst ids are discarded.
    pub fn new(ranked: &[RecordId], m: usize) -> Result<Self, SampleError> {
        if m < 3 {
            return Err(SampleError::TooFewSubsets(m));
        }
        let n = ranked.len();
        if n < m {
            return Err(SampleError::TooFewRecords { n, m });
        }
        let size = n / m;
        let subsets = ranked[..size * m]
            .chunks(size)
            .map(<[RecordId]>::to_vec)
            .collect();
        Ok(Self {
            subsets,
            subset_size: size,
            discarded: ranked[size * m..].to_vec(),
        })
    }

    pub fn m(&self) -> usize {
        self.subsets.len()
    }

    /// Size every tier had when the partition was built.
    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn subsets(&self) -> &[Vec<RecordId>] {
        &self.subsets
    }

    pub fn discarded(&self) -> &[RecordId] {
        &self.discarded
    }

    /// Ids still available for drawing.
    pub fn remaining(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    /// 1-based tier of `id`, if it is still in the partition.
    pub fn tier_of(&self, id: RecordId) -> Option<usize> {
        self.subsets
            .iter()
            .position(|s| s.contains(&id))
            .map(|t| t + 1)
    }

    fn negative_pool(&self, tier: usize) -> usize {
        self.subsets[tier + 2..].iter().map(Vec::len).sum()
    }
}

/// Softmax over tiers `1..=M-2` with weight `exp((M - 2 - i) / tau)`.
pub fn tier_distribution(m: usize, tau: f64) -> Result<Vec<f64>, SampleError> {
    if m < 3 {
        return Err(SampleError::TooFewSubsets(m));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SampleError::BadTemperature(tau));
    }
    let tiers = m - 2;
    // subtracting the largest exponent keeps small tau from overflowing
    let top = (tiers - 1) as f64 / tau;
    let weights: Vec<f64> = (1..=tiers)
        .map(|i| ((tiers - i) as f64 / tau - top).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Cached tier distribution with inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct TierSampler {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TierSampler {
    pub fn new(m: usize, tau: f64) -> Result<Self, SampleError> {
        let probs = tier_distribution(m, tau)?;
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Returns a 0-based tier index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.probs.len() - 1)
    }
}

/// Positions of one draw inside a partition. Tiers are 0-based here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    tier: usize,
    index: usize,
}

/// One DAR draw: 1-based tiers and the drawn record ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub chosen_tier: usize,
    pub chosen: RecordId,
    pub rejected_tier: usize,
    pub rejected: RecordId,
}

fn draw_slots<R: Rng + ?Sized>(
    partition: &RankPartition,
    tiers: &TierSampler,
    rng: &mut R,
) -> Result<(Slot, Slot), SampleError> {
    let i = tiers.sample(rng);
    let pos_len = partition.subsets[i].len();
    let neg_len = partition.negative_pool(i);
    if pos_len == 0 || neg_len == 0 {
        return Err(SampleError::Depleted { tier: i + 1 });
    }
    let chosen = Slot {
        tier: i,
        index: rng.random_range(0..pos_len),
    };
    let mut r = rng.random_range(0..neg_len);
    let mut tier = i + 2;
    while r >= partition.subsets[tier].len() {
        r -= partition.subsets[tier].len();
        tier += 1;
    }
    Ok((chosen, Slot { tier, index: r }))
}

/// Draws one pair without modifying the partition.
pub fn draw_pair<R: Rng + ?Sized>(
    partition: &RankPartition,
    tiers: &TierSampler,
    rng: &mut R,
) -> Result<Draw, SampleError> {
    let (pos, neg) = draw_slots(partition, tiers, rng)?;
    Ok(Draw {
        chosen_tier: pos.tier + 1,
        chosen: partition.subsets[pos.tier][pos.index],
        rejected_tier: neg.tier + 1,
        rejected: partition.subsets[neg.tier][neg.index],
    })
}

/// Draws `n_pairs` pairs, removing both members of each pair from the
/// partition. On depletion returns the draws made so far as the error value.
pub fn draw_without_replacement<R: Rng + ?Sized>(
    partition: &mut RankPartition,
    tiers: &TierSampler,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<Draw>, Vec<Draw>> {
    let mut draws = Vec::with_capacity(n_pairs);
    while draws.len() < n_pairs {
        let mut attempt = 0;
        let (pos, neg) = loop {
            match draw_slots(partition, tiers, rng) {
                Ok(slots) => break slots,
                Err(_) if attempt + 1 < MAX_TIER_REDRAWS => attempt += 1,
                Err(_) => return Err(draws),
            }
        };
        let chosen = partition.subsets[pos.tier].swap_remove(pos.index);
        let rejected = partition.subsets[neg.tier].swap_remove(neg.index);
        draws.push(Draw {
            chosen_tier: pos.tier + 1,
            chosen,
            rejected_tier: neg.tier + 1,
            rejected,
        });
    }
    Ok(draws)
}

fn to_pair(db: &AlgoDb, prompt: &str, draw: &Draw) -> PreferencePair {
    let chosen = db.get(draw.chosen).expect("ranked id present in db");
    let rejected = db.get(draw.rejected).expect("ranked id present in db");
    PreferencePair {
        prompt: prompt.to_string(),
        chosen_source: chosen.source_text.clone(),
        rejected_source: rejected.source_text.clone(),
        chosen_fitness: chosen.fitness.expect("ranked records are valid"),
        rejected_fitness: rejected.fitness.expect("ranked records are valid"),
        chosen_tier: draw.chosen_tier,
        rejected_tier: draw.rejected_tier,
    }
}

fn finish(
    db: &AlgoDb,
    prompt: &str,
    requested: usize,
    draws: Result<Vec<Draw>, Vec<Draw>>,
) -> Result<Vec<PreferencePair>, SampleError> {
    match draws {
        Ok(d) => Ok(d.iter().map(|d| to_pair(db, prompt, d)).collect()),
        Err(d) => Err(SampleError::Partial {
            built: d.iter().map(|d| to_pair(db, prompt, d)).collect(),
            requested,
        }),
    }
}

/// Builds a DAR dataset for `task_id`. Partitioning happens once; the
/// database itself is left untouched.
pub fn build_dataset<R: Rng + ?Sized>(
    db: &AlgoDb,
    task_id: &str,
    prompt: &str,
    n_pairs: usize,
    m: usize,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<PreferencePair>, SampleError> {
    let tiers = TierSampler::new(m, tau)?;
    let mut partition = RankPartition::new(&db.ranked(task_id)?, m)?;
    let draws = draw_without_replacement(&mut partition, &tiers, n_pairs, rng);
    finish(db, prompt, n_pairs, draws)
}

/// Uniformly removes one element of `pool`.
fn take<R: Rng + ?Sized>(pool: &mut Vec<RecordId>, rng: &mut R) -> Option<RecordId> {
    if pool.is_empty() {
        None
    } else {
        let i = rng.random_range(0..pool.len());
        Some(pool.swap_remove(i))
    }
}

/// Top-1 baseline: the best record is the chosen side of every pair; each
/// rejected record is used once.
pub fn baseline_top1<R: Rng + ?Sized>(
    db: &AlgoDb,
    task_id: &str,
    prompt: &str,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PreferencePair>, SampleError> {
    let ranked = db.ranked(task_id)?;
    let best = ranked[0];
    let mut rest = ranked[1..].to_vec();
    let mut draws = Vec::with_capacity(n_pairs);
    while draws.len() < n_pairs {
        let Some(rejected) = take(&mut rest, rng) else {
            return finish(db, prompt, n_pairs, Err(draws));
        };
        draws.push(Draw {
            chosen_tier: 0,
            chosen: best,
            rejected_tier: 0,
            rejected,
        });
    }
    finish(db, prompt, n_pairs, Ok(draws))
}

/// Number of records in the Top-k% pool: `ceil(k * N / 100)`, at least 1.
pub fn topk_pool_size(n: usize, k_percent: f64) -> usize {
    ((k_percent * n as f64 / 100.0).ceil() as usize).clamp(1, n.max(1))
}

/// Top-k% baseline: chosen uniform from the best `ceil(kN/100)` records,
/// rejected uniform from the rest, both consumed.
pub fn baseline_topk<R: Rng + ?Sized>(
    db: &AlgoDb,
    task_id: &str,
    prompt: &str,
    n_pairs: usize,
    k_percent: f64,
    rng: &mut R,
) -> Result<Vec<PreferencePair>, SampleError> {
    if !(k_percent > 0.0 && k_percent < 100.0) {
        return Err(SampleError::BadPercent(k_percent));
    }
    let ranked = db.ranked(task_id)?;
    let pool = topk_pool_size(ranked.len(), k_percent);
    let mut top = ranked[..pool].to_vec();
    let mut rest = ranked[pool..].to_vec();
    let mut draws = Vec::with_capacity(n_pairs);
    while draws.len() < n_pairs {
        if top.is_empty() || rest.is_empty() {
            return finish(db, prompt, n_pairs, Err(draws));
        }
        let chosen = take(&mut top, rng).expect("non-empty");
        let rejected = take(&mut rest, rng).expect("non-empty");
        draws.push(Draw {
            chosen_tier: 0,
            chosen,
            rejected_tier: 0,
            rejected,
        });
    }
    finish(db, prompt, n_pairs, Ok(draws))
}

/// Dispatches on `config.strategy` with an RNG seeded from `config.rng_seed`.
pub fn sample_dataset(
    db: &AlgoDb,
    task_id: &str,
    prompt: &str,
    n_pairs: usize,
    config: &SamplerConfig,
) -> Result<Vec<PreferencePair>, SampleError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    match config.strategy {
        Strategy::Dar => build_dataset(db, task_id, prompt, n_pairs, config.m, config.tau, &mut rng),
        Strategy::Top1 => baseline_top1(db, task_id, prompt, n_pairs, &mut rng),
        Strategy::TopkPercent(k) => baseline_topk(db, task_id, prompt, n_pairs, k, &mut rng),
    }
}

pub fn delta(pair: &PreferencePair) -> f64 {
    (pair.rejected_fitness - pair.chosen_fitness).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub fn delta_stats(pairs: &[PreferencePair]) -> Result<DeltaStats, SampleError> {
    if pairs.is_empty() {
        return Err(SampleError::NoPairs);
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(delta).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (delta(p) - mean).powi(2)).sum::<f64>() / n;
    Ok(DeltaStats {
        mean,
        std: var.sqrt(),
        n: pairs.len(),
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::algodb::{NewRecord, Origin};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distribution_normalized_and_monotone(m in 3usize..40, tau in 0.01f64..100.0) {
            let p = tier_distribution(m, tau).unwrap();
            prop_assert_eq!(p.len(), m - 2);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn partition_tiers_equal_disjoint_ordered(n in 3usize..300, m in 3usize..12) {
            prop_assume!(n >= m);
            let ids: Vec<RecordId> = (0..n as u64).collect();
            let p = RankPartition::new(&ids, m).unwrap();
            prop_assert!(p.subsets().iter().all(|s| s.len() == n / m));
            prop_assert_eq!(p.discarded().len(), n % m);
            let flat: Vec<RecordId> = p.subsets().iter().flatten().copied().chain(p.discarded().iter().copied()).collect();
            prop_assert_eq!(flat, ids);
        }

        #[test]
        fn dataset_ids_distinct_and_ordered(
            gaps in prop::collection::vec(0.0f64..100.0, 30..200),
            m in 3usize..8,
            seed in any::<u64>(),
        ) {
            let mut db = AlgoDb::new();
            for (i, g) in gaps.iter().enumerate() {
                db.insert(NewRecord::valid("t", &format!("p{i}"), *g, Origin::Generated)).unwrap();
            }
            let n_pairs = 5;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tiers = TierSampler::new(m, 1.0).unwrap();
            let mut part = RankPartition::new(&db.ranked("t").unwrap(), m).unwrap();
            let before = part.remaining();
            if let Ok(draws) = draw_without_replacement(&mut part, &tiers, n_pairs, &mut rng) {
                prop_assert_eq!(part.remaining(), before - 2 * n_pairs);
                let mut ids: Vec<_> = draws.iter().flat_map(|d| [d.chosen, d.rejected]).collect();
                ids.sort();
                ids.dedup();
                prop_assert_eq!(ids.len(), 2 * n_pairs);
                for d in &draws {
                    prop_assert!(d.rejected_tier >= d.chosen_tier + 2);
                    prop_assert!(d.chosen_tier <= m - 2);
                    let (c, r) = (db.get(d.chosen).unwrap().fitness.unwrap(), db.get(d.rejected).unwrap().fitness.unwrap());
                    prop_assert!(c <= r);
                }
            }
        }
    }
}
