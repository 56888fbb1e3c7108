//! Island search with best-shot prompting: each prompt shows a few programs
//! from one island, worst first, and asks for the next version.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prompt::{versions_prompt, ShownProgram};
use super::{
    rank_select_distinct, sort_members, Engine, Member, SearchConfig, SearchContext, SearchError,
    SearchRun, StopReason,
};
use crate::algodb::AlgoDb;

/// Programs chosen for one prompt, ordered from worst to best.
pub(crate) fn pick_parents<R: Rng + ?Sized>(island: &[Member], k: usize, rng: &mut R) -> Vec<Member> {
    let mut ranked = island.to_vec();
    sort_members(&mut ranked);
    let mut chosen: Vec<Member> = rank_select_distinct(ranked.len(), k, rng)
        .into_iter()
        .map(|i| ranked[i].clone())
        .collect();
    sort_members(&mut chosen);
    chosen.reverse();
    chosen
}

fn island_best(island: &[Member]) -> f64 {
    island.iter().map(|m| m.fitness).fold(f64::INFINITY, f64::min)
}

/// Replaces the worse half of the islands with the global best program.
fn reset_islands(islands: &mut [Vec<Member>]) {
    let mut order: Vec<usize> = (0..islands.len()).collect();
    order.sort_by(|&a, &b| {
        island_best(&islands[a])
            .total_cmp(&island_best(&islands[b]))
            .then(a.cmp(&b))
    });
    let best = islands
        .iter()
        .flatten()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.id.cmp(&b.id)))
        .cloned()
        .expect("islands are never empty");
    let keep = islands.len() - islands.len() / 2;
    for &i in &order[keep..] {
        islands[i] = vec![best.clone()];
    }
}

pub fn run_funsearch(
    ctx: &SearchContext<'_>,
    config: &SearchConfig,
    db: &mut AlgoDb,
) -> Result<SearchRun, SearchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut engine = Engine::new(ctx, db, config, Some(config.eval_budget));
    let seed = match engine.seed()? {
        Ok(m) => m,
        Err(stop) => return Ok(engine.finish(stop, Vec::new())),
    };
    let mut islands = vec![vec![seed]; config.islands];
    let mut next_reset = config.reset_period;

    loop {
        if engine.remaining() == 0 {
            return Ok(engine.finish(StopReason::Budget, Vec::new()));
        }
        let task = *engine.task();
        let mut targets = Vec::with_capacity(config.batch_size);
        let mut prompts = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let island = rng.random_range(0..islands.len());
            let parents = pick_parents(&islands[island], config.parents_per_prompt, &mut rng);
            let shown: Vec<ShownProgram<'_>> = parents
                .iter()
                .map(|m| ShownProgram { source: &m.source, fitness: m.fitness })
                .collect();
            prompts.push(versions_prompt(&task, &shown));
            targets.push(island);
        }
        let batch = match engine.run_batch(&prompts) {
            Ok(b) => b,
            Err(stop) => return Ok(engine.finish(stop, Vec::new())),
        };
        for (island, offspring) in targets.into_iter().zip(batch) {
            if let Some(m) = offspring.member() {
                if !islands[island].iter().any(|p| p.id == m.id) {
                    islands[island].push(m.clone());
                }
            }
        }
        while engine.stats.charged >= next_reset {
            reset_islands(&mut islands);
            next_reset += config.reset_period;
        }
    }
}
