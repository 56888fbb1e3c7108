//! Population search with two prompt operators: combine two parents into a
//! new algorithm, or refine one parent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::prompt::{build_prompt, combine_prompt, refine_prompt, ShownProgram};
use super::{
    rank_select, rank_select_distinct, sort_members, Engine, Member, SearchConfig, SearchContext,
    SearchError, SearchRun, StopReason,
};
use crate::algodb::AlgoDb;

fn shown(m: &Member) -> ShownProgram<'_> {
    ShownProgram {
        source: &m.source,
        fitness: m.fitness,
    }
}

fn absorb(population: &mut Vec<Member>, offspring: impl IntoIterator<Item = Member>) {
    for m in offspring {
        if !population.iter().any(|p| p.id == m.id) {
            population.push(m);
        }
    }
}

/// Runs until `eval_budget` charged evaluations are used or the endpoint
/// fails. Valid records of the task already in `db` join the initial
/// population, so an interrupted run can be resumed on its database.
pub fn run_eoh(
    ctx: &SearchContext<'_>,
    config: &SearchConfig,
    db: &mut AlgoDb,
) -> Result<SearchRun, SearchError> {
    config.validate()?;
    let pop_size = config.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut engine = Engine::new(ctx, db, config, Some(config.eval_budget));
    let mut sizes = Vec::new();

    let seed = match engine.seed()? {
        Ok(m) => m,
        Err(stop) => return Ok(engine.finish(stop, sizes)),
    };
    let mut population = vec![seed];
    absorb(&mut population, engine.existing_members());
    sort_members(&mut population);
    population.truncate(pop_size);

    let x = build_prompt(engine.task());
    while population.len() < pop_size {
        if engine.remaining() == 0 {
            return Ok(engine.finish(StopReason::Budget, sizes));
        }
        let prompts = vec![x.clone(); pop_size - population.len()];
        match engine.run_batch(&prompts) {
            Ok(batch) => absorb(&mut population, batch.iter().filter_map(|o| o.member().cloned())),
            Err(stop) => return Ok(engine.finish(stop, sizes)),
        }
    }
    sort_members(&mut population);
    population.truncate(pop_size);

    loop {
        if engine.remaining() == 0 {
            return Ok(engine.finish(StopReason::Budget, sizes));
        }
        let task = *engine.task();
        let prompts: Vec<String> = (0..pop_size)
            .map(|j| {
                if j % 2 == 0 {
                    let pair = rank_select_distinct(population.len(), 2, &mut rng);
                    combine_prompt(&task, shown(&population[pair[0]]), shown(&population[pair[1]]))
                } else {
                    let p = rank_select(population.len(), &mut rng);
                    refine_prompt(&task, shown(&population[p]))
                }
            })
            .collect();
        let result = engine.run_batch(&prompts);
        if let Ok(batch) = &result {
            absorb(&mut population, batch.iter().filter_map(|o| o.member().cloned()));
        }
        sort_members(&mut population);
        population.truncate(pop_size);
        sizes.push(population.len());
        if let Err(stop) = result {
            return Ok(engine.finish(stop, sizes));
        }
    }
}
