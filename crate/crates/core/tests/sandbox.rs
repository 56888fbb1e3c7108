use std::time::{Duration, Instant};

use heurpref_core::sandbox::{EvalFailure, Evaluator, Revalidate};
use heurpref_core::tasks::cvrp::CvrpInstance;
use heurpref_core::tasks::tsp::TspInstance;
use heurpref_core::tasks::{InstanceSet, ProblemInstance, TaskKind, TaskSpec};

fn two_customer_set() -> InstanceSet {
    let mut inst =
        CvrpInstance::new(vec![[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]], vec![0, 1, 1], 2).unwrap();
    inst.reference_cost = Some(4.0);
    InstanceSet {
        task: TaskSpec::Cvrp { customers: 2, capacity: 2 },
        seed: 0,
        instances: vec![ProblemInstance::Cvrp(inst)],
    }
}

fn square_set() -> InstanceSet {
    let mut inst = TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    inst.reference_length = Some(4.0);
    InstanceSet {
        task: TaskSpec::Tsp { n: 4 },
        seed: 0,
        instances: vec![ProblemInstance::Tsp(inst)],
    }
}

fn tsp_evaluator() -> Evaluator {
    Evaluator::new(square_set())
        .unwrap()
        .with_revalidate(Revalidate::Always)
}

const TSP_LOOP: &str = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    while True:\n        pass\n";
const TSP_RAISE: &str = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    raise ValueError('boom')\n";

#[test]
fn cvrp_seed_on_two_customers() {
    let eval = Evaluator::new(two_customer_set())
        .unwrap()
        .with_revalidate(Revalidate::Always);
    let r = eval.evaluate(TaskKind::Cvrp.seed_source());
    let report = r.result.expect("seed runs");
    assert_eq!(report.per_instance_objective, vec![4.0]);
    assert_eq!(report.average_gap, Some(0.0));
}

#[test]
fn tsp_seed_on_square() {
    let r = tsp_evaluator().evaluate(TaskKind::Tsp.seed_source());
    let report = r.result.expect("seed runs");
    assert_eq!(report.per_instance_objective, vec![4.0]);
}

#[test]
fn missing_function_is_not_charged() {
    let r = tsp_evaluator().evaluate("def helper(x):\n    return x\n");
    assert!(matches!(r.result, Err(EvalFailure::Render(_))));
    assert!(!r.charged());
}

#[test]
fn infinite_loop_times_out() {
    let eval = tsp_evaluator().with_timeout(Duration::from_secs(1));
    let start = Instant::now();
    let r = eval.evaluate(TSP_LOOP);
    assert!(matches!(r.result, Err(EvalFailure::Timeout { .. })), "{:?}", r.result);
    assert!(start.elapsed() < Duration::from_secs(3));
    assert!(r.charged());
}

#[test]
fn raising_candidate_crashes_with_stderr() {
    let r = tsp_evaluator().evaluate(TSP_RAISE);
    match r.result {
        Err(EvalFailure::Crash { stderr }) => assert!(stderr.contains("boom"), "{stderr}"),
        other => panic!("expected crash, got {other:?}"),
    }
}

#[test]
fn invalid_choice_is_a_crash() {
    let src = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    return 99\n";
    assert!(matches!(
        tsp_evaluator().evaluate(src).result,
        Err(EvalFailure::Crash { .. })
    ));
}

#[test]
fn stdout_noise_does_not_corrupt_objectives() {
    let src = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    print('hello 1.5')\n    return unvisited_nodes[0]\n";
    let report = tsp_evaluator().evaluate(src).result.unwrap();
    assert_eq!(report.per_instance_objective, vec![4.0]);
}

#[test]
fn batch_keeps_order_and_is_deterministic() {
    let good = TaskKind::Tsp.seed_source().to_string();
    let far = "def select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    return unvisited_nodes[-1]\n".to_string();
    let sources: Vec<String> = (0..10)
        .map(|i| match i {
            3 | 7 => TSP_RAISE.to_string(),
            i if i % 2 == 0 => good.clone(),
            _ => far.clone(),
        })
        .collect();
    let eval = tsp_evaluator();
    let serial = eval.batch_evaluate(&sources, 1);
    let parallel = eval.batch_evaluate(&sources, 4);
    assert_eq!(serial.len(), 10);
    for (i, (a, b)) in serial.iter().zip(&parallel).enumerate() {
        assert_eq!(a.result.is_ok(), b.result.is_ok(), "index {i}");
        if i == 3 || i == 7 {
            assert!(matches!(a.result, Err(EvalFailure::Crash { .. })));
        } else {
            assert_eq!(a.fitness(), b.fitness());
            assert!(a.fitness().is_some());
        }
    }
    // square visited 0,3,2,1 is also the perimeter
    assert_eq!(serial[0].fitness(), Some(0.0));
    assert_eq!(serial[1].fitness(), Some(0.0));
}

#[test]
fn empty_batch() {
    assert!(tsp_evaluator().batch_evaluate(&[], 4).is_empty());
}

#[test]
fn missing_interpreter_is_config_error() {
    let eval = tsp_evaluator().with_interpreter(vec!["no-such-python-xyz".into()]);
    let r = eval.evaluate(TaskKind::Tsp.seed_source());
    assert!(matches!(r.result, Err(EvalFailure::Config(_))), "{:?}", r.result);
    assert!(!r.charged());
}

fn alive(pid: i32) -> bool {
    match std::fs::read_to_string(format!("/proc/{pid}/stat")) {
        // zombies are dead, only waiting for a reaper
        Ok(stat) => !stat
            .rsplit(')')
            .next()
            .is_some_and(|rest| rest.trim_start().starts_with('Z')),
        Err(_) => false,
    }
}

#[test]
fn spawned_children_die_with_the_candidate() {
    let src = "import subprocess, sys\n\ndef select_next_node(current_node, destination_node, unvisited_nodes, distance_matrix):\n    p = subprocess.Popen(['sleep', '60'])\n    sys.stderr.write('child=%d\\n' % p.pid)\n    sys.stderr.flush()\n    while True:\n        pass\n";
    let eval = tsp_evaluator().with_timeout(Duration::from_secs(1));
    let outcome = eval.execute(src).unwrap();
    let pid: i32 = outcome
        .stderr_excerpt
        .lines()
        .find_map(|l| l.strip_prefix("child="))
        .expect("child pid reported")
        .trim()
        .parse()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(2);
    while alive(pid) && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    assert!(!alive(pid), "grandchild {pid} survived");
}
