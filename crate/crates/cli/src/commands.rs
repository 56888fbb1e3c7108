use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use log::info;
use serde::Serialize;
use serde_json::json;

use heurpref_core::algodb::AlgoDb;
use heurpref_core::dataset::{
    delta_csv, delta_report, emit_preference_jsonl, load_manifest, load_preference_jsonl, manifest_path,
    DatasetSource,
};
use heurpref_core::plot;
use heurpref_core::sampler::{sample_dataset, SamplerConfig};
use heurpref_core::sandbox::{EvalFailure, Evaluator, Revalidate};
use heurpref_core::search::{
    build_prompt, run_eoh, run_funsearch, run_random_sampling, topk_summary, ChatClient, ConvergenceLog,
    LlmError, Method, SearchContext, SearchError, SearchRun, SearchStats, StopReason, StubGenerator,
    TextGenerator, TopkSummary,
};
use heurpref_core::tasks::{InstanceSet, TaskSpec};

use crate::config::{RunConfig, STUB_ENDPOINT};
use crate::{usage, Failure};

type CmdResult = Result<(), Failure>;

fn task_spec(cfg: &RunConfig) -> Result<TaskSpec, Failure> {
    let Some(id) = cfg.task.as_deref() else {
        return usage("no task given (--task or `task` in the config)");
    };
    let spec: TaskSpec = id.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(spec)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Eoh => "eoh",
        Method::Funsearch => "funsearch",
        Method::RandomSampling => "random_sampling",
    }
}

fn run_dir(cfg: &RunConfig, default_id: String) -> PathBuf {
    cfg.out_dir.join(cfg.run_id.clone().unwrap_or(default_id))
}

fn ensure_dirs(root: &Path, subdirs: &[&str]) -> anyhow::Result<()> {
    for d in subdirs {
        let p = root.join(d);
        fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn evaluator(cfg: &RunConfig, instances: InstanceSet) -> Result<Evaluator, Failure> {
    if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) {
        return usage(format!("timeout must be positive, got {}", cfg.timeout_secs));
    }
    if cfg.interpreter.is_empty() {
        return usage("interpreter command is empty");
    }
    let revalidate = match cfg.revalidate {
        r if r >= 1.0 => Revalidate::Always,
        r if r <= 0.0 => Revalidate::Never,
        r => Revalidate::Sampled(r),
    };
    Ok(Evaluator::new(instances)?
        .with_timeout(Duration::from_secs_f64(cfg.timeout_secs))
        .with_interpreter(cfg.interpreter.clone())
        .with_revalidate(revalidate))
}

fn generator(cfg: &RunConfig, task: TaskSpec) -> Result<Box<dyn TextGenerator>, Failure> {
    let endpoint = &cfg.endpoint;
    if endpoint.base_url.trim().is_empty() {
        return usage("no endpoint configured (--endpoint URL, or `stub` for the offline generator)");
    }
    if endpoint.base_url == STUB_ENDPOINT {
        return Ok(Box::new(StubGenerator::new(task.kind(), cfg.seed)));
    }
    match ChatClient::new(endpoint.clone()) {
        Ok(c) => Ok(Box::new(c)),
        Err(LlmError::Config(m)) => usage(m),
        Err(e) => Err(Failure::Runtime(e.into())),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    task_id: String,
    method: &'static str,
    seed: u64,
    complete: bool,
    stop: &'a StopReason,
    stats: SearchStats,
    evaluations: usize,
    final_best: Option<f64>,
    population_sizes: &'a [usize],
    db_records: usize,
    db_digest: String,
}

pub fn search(cfg: &RunConfig) -> CmdResult {
    let task = task_spec(cfg)?;
    let search_cfg = cfg.search_config();
    search_cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let gen = generator(cfg, task)?;
    let seed_source = match &cfg.search.seed_program {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut db = match &cfg.search.resume_db {
        Some(p) => AlgoDb::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => AlgoDb::new(),
    };

    let method = method_name(cfg.search.method);
    let dir = run_dir(cfg, format!("{task}-{method}-s{}", cfg.seed));
    ensure_dirs(&dir, &["db", "csv", "plots", "manifest"])?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let instances = InstanceSet::generate(task, cfg.instances, cfg.seed).map_err(|e| anyhow!(e))?;
    instances.save(&dir.join("db/instances.jsonl")).map_err(|e| anyhow!(e))?;
    let eval = evaluator(cfg, instances)?;

    let ctx = SearchContext {
        task,
        evaluator: &eval,
        generator: gen.as_ref(),
        seed_source,
    };
    info!("starting {method} on {task} in {}", dir.display());
    let run: SearchRun = match cfg.search.method {
        Method::Eoh => run_eoh(&ctx, &search_cfg, &mut db),
        Method::Funsearch => run_funsearch(&ctx, &search_cfg, &mut db),
        Method::RandomSampling => run_random_sampling(&ctx, &search_cfg, &mut db),
    }
    .map_err(|e| match e {
        SearchError::Config(m) => Failure::Usage(m),
        e => Failure::Runtime(e.into()),
    })?;

    db.export_jsonl(&dir.join("db/algorithms.jsonl"))?;
    run.log.save_csv(&dir.join("csv/convergence.csv"))?;
    plot::plot_convergence(&[(task.id(), &run.log)], &dir.join("plots/convergence.svg")).map_err(|e| anyhow!(e))?;
    if cfg.search.method == Method::RandomSampling {
        match topk_summary(&db, &task.id(), cfg.search.topk) {
            Ok(s) => {
                fs::write(dir.join("csv/topk.csv"), topk_csv(&[(task.id(), s.clone())]))?;
                plot::plot_topk(&[(task.id(), s)], &dir.join("plots/topk.svg")).map_err(|e| anyhow!(e))?;
            }
            Err(e) => log::warn!("no top-k summary: {e}"),
        }
    }
    let manifest = RunManifest {
        task_id: task.id(),
        method,
        seed: cfg.seed,
        complete: run.stop.is_complete(),
        stop: &run.stop,
        stats: run.stats,
        evaluations: run.log.len(),
        final_best: run.log.final_best(),
        population_sizes: &run.population_sizes,
        db_records: db.len(),
        db_digest: db.digest(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest/run.json"), text)?;

    println!(
        "{}: {} evaluations, best gap {}, stop {}",
        dir.display(),
        run.log.len(),
        run.log.final_best().map_or("none".into(), |b| format!("{b:.4}")),
        serde_json::to_string(&run.stop)?
    );
    if run.stop.is_complete() {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("search stopped early: {:?}; partial results kept", run.stop)))
    }
}

pub fn sample(cfg: &RunConfig) -> CmdResult {
    let s = &cfg.sample;
    let Some(db_path) = &s.db else {
        return usage("no database given (--db or `sample.db` in the config)");
    };
    let db = AlgoDb::load(db_path).with_context(|| format!("loading {}", db_path.display()))?;
    let task_id = match &cfg.task {
        Some(t) => t.clone(),
        None => match db.task_ids().as_slice() {
            [one] => one.clone(),
            ids => return usage(format!("database holds tasks {ids:?}; pick one with --task")),
        },
    };
    let prompt = task_id.parse::<TaskSpec>().map(|t| build_prompt(&t)).unwrap_or_default();
    let sampler = SamplerConfig {
        m: s.m,
        tau: s.tau,
        strategy: s.strategy(),
        rng_seed: cfg.seed,
    };
    sampler.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let pairs = sample_dataset(&db, &task_id, &prompt, s.pairs, &sampler)?;

    let dir = run_dir(cfg, format!("{task_id}-sample-s{}", cfg.seed));
    ensure_dirs(&dir, &["dataset"])?;
    let label = sampler.strategy.label().replace('%', "pct");
    let path = dir.join("dataset").join(format!("{label}.jsonl"));
    let digest = db.digest();
    let source = DatasetSource {
        task_id: &task_id,
        sampler: &sampler,
        db_digest: &digest,
    };
    let m = emit_preference_jsonl(&pairs, &path, &source)?;
    println!(
        "{}: {} pairs, mean delta {:.4}, std {:.4}",
        path.display(),
        m.n_pairs,
        m.mean_delta,
        m.std_delta
    );
    Ok(())
}

fn dataset_label(path: &Path) -> String {
    match load_manifest(&manifest_path(path)) {
        Ok(m) => m.strategy,
        Err(_) => stem(path),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs are named after their directory when the file sits in the usual
/// `<run>/csv/convergence.csv` place.
fn log_label(path: &Path) -> String {
    let parent = path.parent();
    if parent.and_then(Path::file_name).is_some_and(|n| n == "csv") {
        if let Some(run) = parent.and_then(Path::parent).and_then(Path::file_name) {
            return run.to_string_lossy().into_owned();
        }
    }
    stem(path)
}

fn topk_csv(rows: &[(String, TopkSummary)]) -> String {
    let mut out = String::from("label,k,mean,std\n");
    for (label, s) in rows {
        out.push_str(&format!("{label},{},{},{}\n", s.gaps.len(), s.mean, s.std));
    }
    out
}

fn merged_convergence_csv(logs: &[(String, ConvergenceLog)]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("run,eval_index,best_1,best_5_mean,best_10_mean\n");
    for (label, log) in logs {
        for r in &log.rows {
            out.push_str(&format!(
                "{label},{},{},{},{}\n",
                r.eval_index,
                cell(r.best_1),
                cell(r.best_5_mean),
                cell(r.best_10_mean)
            ));
        }
    }
    out
}

pub fn report(cfg: &RunConfig, datasets: &[PathBuf], logs: &[PathBuf], dbs: &[PathBuf], k: usize) -> CmdResult {
    if datasets.is_empty() && logs.is_empty() && dbs.is_empty() {
        return usage("nothing to report (--dataset, --log or --db)");
    }
    let dir = run_dir(cfg, "report".into());
    ensure_dirs(&dir, &["csv", "plots"])?;

    if !datasets.is_empty() {
        let mut loaded = Vec::new();
        for p in datasets {
            let pairs = load_preference_jsonl(p).with_context(|| format!("reading {}", p.display()))?;
            loaded.push((dataset_label(p), pairs));
        }
        let rows = delta_report(&loaded)?;
        let csv = delta_csv(&rows);
        fs::write(dir.join("csv/delta.csv"), &csv)?;
        plot::plot_deltas(&rows, &dir.join("plots/delta.svg")).map_err(|e| anyhow!(e))?;
        print!("{csv}");
    }

    if !logs.is_empty() {
        let mut loaded = Vec::new();
        for p in logs {
            let log = ConvergenceLog::load_csv(p).with_context(|| format!("reading {}", p.display()))?;
            loaded.push((log_label(p), log));
        }
        fs::write(dir.join("csv/convergence_merged.csv"), merged_convergence_csv(&loaded))?;
        let refs: Vec<(String, &ConvergenceLog)> = loaded.iter().map(|(l, g)| (l.clone(), g)).collect();
        plot::plot_convergence(&refs, &dir.join("plots/convergence.svg")).map_err(|e| anyhow!(e))?;
        for (label, log) in &loaded {
            let best = log.final_best().map_or("none".into(), |b| b.to_string());
            println!("{label}: {} evaluations, best {best}", log.len());
        }
    }

    if !dbs.is_empty() {
        let mut rows = Vec::new();
        for p in dbs {
            let db = AlgoDb::load(p).with_context(|| format!("loading {}", p.display()))?;
            let tasks = match &cfg.task {
                Some(t) => vec![t.clone()],
                None => db.task_ids(),
            };
            for t in tasks {
                let label = if dbs.len() > 1 { format!("{}:{t}", p.display()) } else { t.clone() };
                rows.push((label, topk_summary(&db, &t, k)?));
            }
        }
        let csv = topk_csv(&rows);
        fs::write(dir.join("csv/topk.csv"), &csv)?;
        plot::plot_topk(&rows, &dir.join("plots/topk.svg")).map_err(|e| anyhow!(e))?;
        print!("{csv}");
    }
    Ok(())
}

fn failure_status(f: &EvalFailure) -> &'static str {
    match f {
        EvalFailure::Render(_) => "render",
        EvalFailure::Timeout { .. } => "timeout",
        EvalFailure::Crash { .. } => "crash",
        EvalFailure::Malformed { .. } => "malformed",
        EvalFailure::Invalid(_) => "invalid",
        EvalFailure::Config(_) => "config",
    }
}

pub fn evaluate(cfg: &RunConfig, source: &Path, instance_file: Option<&Path>) -> CmdResult {
    let code = fs::read_to_string(source).with_context(|| format!("reading {}", source.display()))?;
    let instances = match instance_file {
        Some(p) => InstanceSet::load(p).map_err(|e| anyhow!("{}: {e}", p.display()))?,
        None => InstanceSet::generate(task_spec(cfg)?, cfg.instances, cfg.seed).map_err(|e| anyhow!(e))?,
    };
    let task = instances.task;
    let eval = evaluator(cfg, instances)?;
    let result = eval.evaluate(&code);
    let out = match &result.result {
        Ok(r) => json!({
            "task_id": task.id(),
            "status": if r.feasible { "ok" } else { "infeasible" },
            "average_gap": r.average_gap,
            "gaps": r.per_instance_gap,
            "objectives": r.per_instance_objective,
            "wall_time": result.wall_time,
        }),
        Err(f) => json!({
            "task_id": task.id(),
            "status": failure_status(f),
            "error": f.to_string(),
            "wall_time": result.wall_time,
        }),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    match &result.result {
        Ok(r) if r.feasible => Ok(()),
        Ok(_) => Err(Failure::Runtime(anyhow!("candidate produced infeasible solutions"))),
        Err(EvalFailure::Config(m)) => usage(m.clone()),
        Err(f) => Err(Failure::Runtime(anyhow!("{f}"))),
    }
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

pub fn synth_db(task: &str, n: usize, max_gap: f64, seed: u64, out: &Path) -> CmdResult {
    if n == 0 || !(max_gap > 0.0 && max_gap.is_finite()) {
        return usage("synth-db needs n > 0 and a positive finite max gap");
    }
    create_parent(out)?;
    let db = heurpref_core::synthetic_db(task, n, max_gap, seed);
    db.export_jsonl(out)?;
    println!("{}: {n} records for {task}", out.display());
    Ok(())
}

pub fn gen_instances(task: &str, count: usize, seed: u64, out: &Path) -> CmdResult {
    let spec: TaskSpec = task.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
    let set = InstanceSet::generate(spec, count, seed).map_err(|e| Failure::Usage(e.to_string()))?;
    create_parent(out)?;
    set.save(out).map_err(|e| anyhow!(e))?;
    println!("{}: {} instances of {spec}", out.display(), set.len());
    Ok(())
}
