use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use heurpref_core::sandbox::{Evaluator, Revalidate};
use heurpref_core::search::{
    run_eoh, run_funsearch, run_random_sampling, ChatClient, LlmEndpoint, LlmError, Method,
    ScriptedGenerator, SearchConfig, SearchContext, StopReason, StubGenerator, TextGenerator,
};
use heurpref_core::{AlgoDb, InstanceSet, Origin, TaskKind};

fn tsp_evaluator() -> Evaluator {
    let set = InstanceSet::generate("tsp8".parse().unwrap(), 3, 11).unwrap();
    Evaluator::new(set).unwrap().with_revalidate(Revalidate::Never)
}

fn ctx<'a>(eval: &'a Evaluator, gen: &'a dyn TextGenerator) -> SearchContext<'a> {
    SearchContext {
        task: eval.instances().task,
        evaluator: eval,
        generator: gen,
        seed_source: None,
    }
}

fn fenced(code: &str) -> String {
    format!("Try this:\n```python\n{code}```\n")
}

/// Nearest neighbour, then variants that differ only in a constant, so the
/// script controls which replies are new programs.
fn nn(tag: usize) -> String {
    format!(
        "import numpy as np\n\ndef select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    \
         tag = {tag}\n    \
         return unvisited_nodes[int(np.argmin(distance_matrix[current_node][unvisited_nodes]))]\n"
    )
}

#[test]
fn scripted_improvement_is_monotone() {
    let eval = tsp_evaluator();
    // replies: prose, a crasher, nearest neighbour, then duplicates of it
    let crasher = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    raise RuntimeError('x')\n";
    let mut replies = vec!["no idea".to_string(), fenced(crasher), fenced(&nn(0))];
    replies.extend((0..40).map(|_| fenced(&nn(0))));
    let gen = ScriptedGenerator::cycling(replies);
    let config = SearchConfig {
        eval_budget: 10,
        population_size: 2,
        max_calls: Some(60),
        ..Default::default()
    };
    let mut db = AlgoDb::new();
    let run = run_eoh(&ctx(&eval, &gen), &config, &mut db).unwrap();
    // the loop can only produce duplicates after the first three replies
    assert!(matches!(run.stop, StopReason::Stalled { .. }), "{:?}", run.stop);
    assert_eq!(run.stats.charged, 3);
    assert_eq!(run.log.len(), 3);
    assert!(run.stats.parse_failures >= 1);
    let best: Vec<f64> = run.log.rows.iter().filter_map(|r| r.best_1).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    // nearest neighbour beats the seed at row 3
    assert!(best[2] < best[0]);
    assert_eq!(db.len(), 3);
    assert_eq!(db.records().filter(|r| r.origin == Origin::Seed).count(), 1);
    assert_eq!(db.records().filter(|r| !r.valid).count(), 1);
}

#[test]
fn eoh_with_stub_respects_budget_and_is_reproducible() {
    let eval = tsp_evaluator();
    let gen = StubGenerator::new(TaskKind::Tsp, 5);
    let config = SearchConfig {
        eval_budget: 30,
        population_size: 6,
        parallelism: 4,
        rng_seed: 9,
        ..Default::default()
    };
    let mut db1 = AlgoDb::new();
    let run1 = run_eoh(&ctx(&eval, &gen), &config, &mut db1).unwrap();
    assert_eq!(run1.stop, StopReason::Budget);
    assert_eq!(run1.stats.charged, 30);
    assert_eq!(run1.log.len(), 30);
    assert!(!run1.population_sizes.is_empty());
    assert!(run1.population_sizes.iter().all(|&n| n == 6));

    let serial = SearchConfig { parallelism: 1, ..config.clone() };
    let mut db2 = AlgoDb::new();
    let run2 = run_eoh(&ctx(&eval, &gen), &serial, &mut db2).unwrap();
    assert_eq!(run1.log.to_csv(), run2.log.to_csv());
    assert_eq!(db1.digest(), db2.digest());
}

#[test]
fn funsearch_single_island_and_dominance() {
    let eval = tsp_evaluator();
    let gen = StubGenerator::new(TaskKind::Tsp, 1);
    for islands in [1, 3] {
        let config = SearchConfig {
            method: Method::Funsearch,
            eval_budget: 12,
            islands,
            reset_period: 5,
            parallelism: 3,
            ..Default::default()
        };
        let mut db = AlgoDb::new();
        let run = run_funsearch(&ctx(&eval, &gen), &config, &mut db).unwrap();
        assert_eq!(run.stop, StopReason::Budget);
        assert!(run.stats.charged <= 12);
        let seed_fitness = run.log.rows[0].best_1.unwrap();
        assert!(run.log.final_best().unwrap() <= seed_fitness);
    }
}

#[test]
fn random_sampling_counts_repeats_before_dedup() {
    let eval = tsp_evaluator();
    let seed = TaskKind::Tsp.seed_source().to_string();
    let gen = ScriptedGenerator::cycling(vec![fenced(&seed)]);
    let config = SearchConfig {
        method: Method::RandomSampling,
        n_feasible: 30,
        batch_size: 8,
        ..Default::default()
    };
    let mut db = AlgoDb::new();
    let run = run_random_sampling(&ctx(&eval, &gen), &config, &mut db).unwrap();
    assert_eq!(run.stop, StopReason::Target);
    assert_eq!(run.stats.feasible, 30);
    assert_eq!(run.stats.charged, 1);
    assert_eq!(db.len(), 1);

    let none = SearchConfig { n_feasible: 0, ..config };
    let run = run_random_sampling(&ctx(&eval, &gen), &none, &mut AlgoDb::new()).unwrap();
    assert!(run.log.is_empty());
}

#[test]
fn random_sampling_aborts_when_nothing_is_feasible() {
    let eval = tsp_evaluator();
    let gen = ScriptedGenerator::cycling(vec!["I cannot help with that.".into()]);
    let config = SearchConfig {
        method: Method::RandomSampling,
        n_feasible: 5,
        batch_size: 50,
        ..Default::default()
    };
    let run = run_random_sampling(&ctx(&eval, &gen), &config, &mut AlgoDb::new()).unwrap();
    assert_eq!(run.stop, StopReason::LowFeasibility { calls: 1000, feasible: 0 });
}

#[test]
fn endpoint_failure_keeps_partial_results() {
    let eval = tsp_evaluator();
    let gen = ScriptedGenerator::new(vec![fenced(&nn(1)), fenced(&nn(2))]);
    let config = SearchConfig {
        eval_budget: 50,
        population_size: 2,
        ..Default::default()
    };
    let mut db = AlgoDb::new();
    let run = run_eoh(&ctx(&eval, &gen), &config, &mut db).unwrap();
    assert!(matches!(run.stop, StopReason::Endpoint { .. }), "{:?}", run.stop);
    assert!(!run.stop.is_complete());
    assert_eq!(db.len(), run.stats.charged);
    assert_eq!(run.log.len(), run.stats.charged);

    // resuming on the same database reuses the stored seed without charging it
    let gen = ScriptedGenerator::cycling(vec![fenced(&nn(3))]);
    let config = SearchConfig { eval_budget: 1, ..config };
    let again = run_eoh(&ctx(&eval, &gen), &config, &mut db).unwrap();
    assert_eq!(again.stop, StopReason::Budget);
    assert_eq!(again.stats.charged, 1);
}

#[test]
fn invalid_seed_is_rejected() {
    let eval = tsp_evaluator();
    let gen = StubGenerator::new(TaskKind::Tsp, 0);
    let mut c = ctx(&eval, &gen);
    c.seed_source = Some("def select_next_node(a, b, c, d):\n    return -5\n".into());
    assert!(run_eoh(&c, &SearchConfig::default(), &mut AlgoDb::new()).is_err());
}

/// Serves canned HTTP statuses in order, one connection per request.
fn serve(statuses: Vec<u16>, reply: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for (stream, status) in listener.incoming().zip(statuses) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(req["messages"][0]["role"], "user");
            assert!(req["model"].is_string() && req["max_tokens"].is_u64());
            counter.fetch_add(1, Ordering::SeqCst);
            let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": reply}}]})
                .to_string();
            let text = if status == 200 { payload } else { "{}".to_string() };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    (url, hits)
}

fn client(url: String, max_retries: u32) -> ChatClient {
    ChatClient::new(LlmEndpoint {
        base_url: url,
        model_name: "m".into(),
        max_retries,
        backoff_ms: 1,
        request_timeout_secs: 5.0,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn chat_client_passes_content_through() {
    let (url, _) = serve(vec![200], "def f(): pass");
    assert_eq!(client(url, 0).generate("hi", 0).unwrap(), "def f(): pass");
}

#[test]
fn chat_client_retries_server_errors() {
    let (url, hits) = serve(vec![500, 500, 200], "ok");
    assert_eq!(client(url, 3).generate("hi", 0).unwrap(), "ok");
    assert_eq!(hits.load(Ordering::SeqCst), 3);

    let (url, _) = serve(vec![500], "ok");
    assert!(matches!(client(url, 0).generate("hi", 0), Err(LlmError::Endpoint(_))));
}

#[test]
fn chat_client_does_not_retry_client_errors() {
    let (url, hits) = serve(vec![401, 200], "ok");
    assert!(matches!(client(url, 3).generate("hi", 0), Err(LlmError::Config(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn chat_client_needs_its_key_variable() {
    let e = LlmEndpoint {
        base_url: "http://127.0.0.1:9".into(),
        api_key_env: Some("HEURPREF_TEST_UNSET_KEY".into()),
        ..Default::default()
    };
    assert!(matches!(ChatClient::new(e), Err(LlmError::Config(_))));
}
