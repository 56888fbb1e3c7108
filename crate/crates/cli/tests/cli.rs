use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn heurpref(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heurpref"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

const STUB_SEARCH: &[&str] = &[
    "search", "--task", "cvrp50", "--method", "eoh", "--budget", "50", "--endpoint", "stub",
    "--instances", "2", "--timeout", "20",
];

#[test]
fn stub_search_writes_a_reproducible_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = STUB_SEARCH.to_vec();
    args.extend(["--out-dir", "a", "--parallelism", "4"]);
    let out = heurpref(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("a/cvrp50-eoh-s0");
    for f in ["config.toml", "db/algorithms.jsonl", "db/instances.jsonl", "csv/convergence.csv", "plots/convergence.svg", "manifest/run.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(run.join("csv/convergence.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows > 0 && rows <= 50, "{rows} rows");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["stop"]["reason"], "budget");
    assert_eq!(manifest["evaluations"], rows);

    let mut args = STUB_SEARCH.to_vec();
    args.extend(["--out-dir", "b", "--parallelism", "1"]);
    assert_eq!(code(&heurpref(&args, dir.path())), 0);
    let again = fs::read_to_string(dir.path().join("b/cvrp50-eoh-s0/csv/convergence.csv")).unwrap();
    assert_eq!(again, csv);
    let db_a = fs::read(run.join("db/algorithms.jsonl")).unwrap();
    let db_b = fs::read(dir.path().join("b/cvrp50-eoh-s0/db/algorithms.jsonl")).unwrap();
    assert_eq!(db_a, db_b);
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["search", "--task", "tsp10", "--method", "funsearch", "--budget", "12", "--endpoint", "stub", "--instances", "2", "--out-dir", "a"];
    assert_eq!(code(&heurpref(&args, dir.path())), 0);
    let first = dir.path().join("a/tsp10-funsearch-s0");
    let cfg = first.join("config.toml");
    let out = heurpref(&["search", "--config", cfg.to_str().unwrap(), "--out-dir", "b"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(first.join("csv/convergence.csv")).unwrap(),
        fs::read_to_string(dir.path().join("b/tsp10-funsearch-s0/csv/convergence.csv")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = heurpref(&["search", "--task", "cvrp50", "--budget", "5"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));

    write(&dir.path().join("bad.toml"), "task = \"cvrp50\"\n[search]\nbugdet = 5\n");
    assert_eq!(code(&heurpref(&["search", "--config", "bad.toml", "--endpoint", "stub"], dir.path())), 2);

    assert_eq!(code(&heurpref(&["search", "--task", "knapsack", "--endpoint", "stub"], dir.path())), 2);
    assert_eq!(code(&heurpref(&["search", "--task", "tsp10", "--endpoint", "stub", "--budget", "0"], dir.path())), 2);
    let missing_key = heurpref(
        &["search", "--task", "tsp10", "--endpoint", "http://127.0.0.1:9", "--api-key-env", "HEURPREF_TEST_UNSET_KEY"],
        dir.path(),
    );
    assert_eq!(code(&missing_key), 2);
}

#[test]
fn unreachable_endpoint_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "task = \"tsp10\"\ninstances = 2\n[search]\nbudget = 10\n[endpoint]\nbase_url = \"http://127.0.0.1:9\"\nmax_retries = 0\nrequest_timeout_secs = 2.0\n";
    write(&dir.path().join("c.toml"), cfg);
    let out = heurpref(&["search", "--config", "c.toml", "--out-dir", "o"], dir.path());
    assert_eq!(code(&out), 1);
    let run = dir.path().join("o/tsp10-eoh-s0");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["stop"]["reason"], "endpoint");
    // the seed was evaluated before the first model call
    assert_eq!(fs::read_to_string(run.join("csv/convergence.csv")).unwrap().lines().count(), 2);
}

#[test]
fn sampling_from_a_synthetic_database() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&heurpref(&["synth-db", "--task", "cvrp50", "--n", "60000", "--out", "db.jsonl"], p)), 0);

    let out = heurpref(&["sample", "--db", "db.jsonl", "--strategy", "dar", "--pairs", "250", "--out-dir", "o"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = p.join("o/cvrp50-sample-s0/dataset/dar.jsonl");
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 250);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["chosen_fitness"].as_f64().unwrap() < v["rejected_fitness"].as_f64().unwrap());
        assert!(v["prompt"].as_str().unwrap().contains("select_next_node"));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("o/cvrp50-sample-s0/dataset/dar.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["n_pairs"], 250);
    assert_eq!(manifest["m"], 10);

    let out = heurpref(&["sample", "--db", "db.jsonl", "--strategy", "topk", "--k", "5", "--out-dir", "o"], p);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(p.join("o/cvrp50-sample-s0/dataset/top5pct.jsonl")).unwrap().lines().count(), 250);

    assert_eq!(code(&heurpref(&["synth-db", "--task", "cvrp50", "--n", "100", "--out", "small.jsonl"], p)), 0);
    let out = heurpref(&["sample", "--db", "small.jsonl", "--strategy", "dar", "--pairs", "250", "--out-dir", "s"], p);
    assert_eq!(code(&out), 1);
}

#[test]
fn report_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&heurpref(&["synth-db", "--task", "tsp50", "--n", "5000", "--out", "db.jsonl"], p)), 0);
    assert_eq!(code(&heurpref(&["sample", "--db", "db.jsonl", "--pairs", "100", "--run-id", "s"], p)), 0);

    let out = heurpref(&["report", "--dataset", "runs/s/dataset/dar.jsonl", "--run-id", "r"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(p.join("runs/r/csv/delta.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "strategy,mean_delta,std_delta");
    assert!(lines[1].starts_with("dar,"));
    assert!(p.join("runs/r/plots/delta.svg").is_file());

    assert_eq!(code(&heurpref(&["report"], p)), 2);

    let log = "eval_index,best_1,best_5_mean,best_10_mean\n1,5,,\n2,4,,\n";
    for run in ["x", "y", "z"] {
        write(&p.join(format!("{run}/csv/convergence.csv")), log);
    }
    let out = heurpref(
        &["report", "--log", "x/csv/convergence.csv", "--log", "y/csv/convergence.csv", "--log", "z/csv/convergence.csv", "--run-id", "r2"],
        p,
    );
    assert_eq!(code(&out), 0);
    let merged = fs::read_to_string(p.join("runs/r2/csv/convergence_merged.csv")).unwrap();
    assert_eq!(merged.lines().count(), 7);
    assert!(merged.lines().nth(3).unwrap().starts_with("y,1,5,"));
    assert!(p.join("runs/r2/plots/convergence.svg").is_file());

    let out = heurpref(&["report", "--db", "db.jsonl", "--k", "50", "--run-id", "r3"], p);
    assert_eq!(code(&out), 0);
    let topk = fs::read_to_string(p.join("runs/r3/csv/topk.csv")).unwrap();
    assert!(topk.lines().nth(1).unwrap().starts_with("tsp50,50,"));
}

#[test]
fn evaluate_reports_gaps_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(&p.join("seed_cvrp.py"), heurpref_core::TaskKind::Cvrp.seed_source());
    let out = heurpref(&["evaluate", "--task", "cvrp20", "--source", "seed_cvrp.py", "--instances", "2"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["status"], "ok");
    assert!(v["average_gap"].as_f64().unwrap().is_finite());
    assert_eq!(v["gaps"].as_array().unwrap().len(), 2);

    write(&p.join("seed_asp.py"), heurpref_core::TaskKind::Asp.seed_source());
    let out = heurpref(&["evaluate", "--task", "asp-3-2", "--source", "seed_asp.py"], p);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["average_gap"].as_f64(), Some(0.0));

    let spin = "def select_next_node(current_node, depot, unvisited_nodes, rest_capacity, demands, distance_matrix):\n    while True:\n        pass\n";
    write(&p.join("spin.py"), spin);
    let out = heurpref(&["evaluate", "--task", "cvrp20", "--source", "spin.py", "--instances", "1", "--timeout", "1"], p);
    assert_eq!(code(&out), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["status"], "timeout");
}

#[test]
fn instance_files_round_trip_through_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&heurpref(&["gen-instances", "--task", "tsp8", "--count", "3", "--out", "inst.jsonl"], p)), 0);
    // a header line, then one line per instance
    assert_eq!(fs::read_to_string(p.join("inst.jsonl")).unwrap().lines().count(), 4);
    write(&p.join("seed.py"), heurpref_core::TaskKind::Tsp.seed_source());
    let out = heurpref(&["evaluate", "--source", "seed.py", "--instance-file", "inst.jsonl"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["task_id"], "tsp8");
    assert_eq!(v["gaps"].as_array().unwrap().len(), 3);
}
