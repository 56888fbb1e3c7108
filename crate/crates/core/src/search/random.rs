//! Repeated sampling from the fixed task prompt.

use super::prompt::build_prompt;
use super::{Engine, SearchConfig, SearchContext, SearchError, SearchRun, StopReason};
use crate::algodb::AlgoDb;

/// Calls per feasibility window.
pub const FEASIBILITY_WINDOW: u64 = 1000;
/// Sampling aborts when a full window is feasible less often than this.
pub const MIN_FEASIBLE_RATE: f64 = 0.001;

/// Samples until `config.n_feasible` replies evaluate to a valid fitness.
/// Repeats of a stored program count as feasible again but are not
/// re-evaluated. No evaluation budget applies; the feasibility window
/// guards against endless sampling.
pub fn run_random_sampling(
    ctx: &SearchContext<'_>,
    config: &SearchConfig,
    db: &mut AlgoDb,
) -> Result<SearchRun, SearchError> {
    config.validate()?;
    let mut engine = Engine::new(ctx, db, config, None);
    let x = build_prompt(engine.task());
    let target = config.n_feasible as u64;
    let (mut window_calls, mut window_feasible) = (0u64, 0u64);
    while engine.stats.feasible < target {
        let n = (config.batch_size as u64).min(target - engine.stats.feasible) as usize;
        let batch = match engine.run_batch(&vec![x.clone(); n]) {
            Ok(b) => b,
            Err(stop) => return Ok(engine.finish(stop, Vec::new())),
        };
        let feasible = batch.iter().filter(|o| o.feasible()).count() as u64;
        engine.stats.feasible += feasible;
        window_calls += n as u64;
        window_feasible += feasible;
        if window_calls >= FEASIBILITY_WINDOW {
            if (window_feasible as f64) < MIN_FEASIBLE_RATE * window_calls as f64 {
                log::error!(
                    "aborting: {window_feasible} feasible programs in the last {window_calls} calls"
                );
                let stop = StopReason::LowFeasibility {
                    calls: window_calls,
                    feasible: window_feasible,
                };
                return Ok(engine.finish(stop, Vec::new()));
            }
            window_calls = 0;
            window_feasible = 0;
        }
    }
    Ok(engine.finish(StopReason::Target, Vec::new()))
}
