use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heurpref_core::tasks::{asp, cvrp, tsp};

fn tasks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t8 = tsp::generate(8, &mut rng);
    let t50 = tsp::generate(50, &mut rng);
    let v6 = cvrp::generate(6, 12, &mut rng);

    c.bench_function("tsp8 brute force", |b| b.iter(|| tsp::brute_force(black_box(&t8)).unwrap()));
    c.bench_function("tsp50 nearest neighbour + 2-opt", |b| b.iter(|| black_box(&t50).default_reference()));
    c.bench_function("cvrp6 brute force", |b| b.iter(|| cvrp::brute_force(black_box(&v6)).unwrap()));

    let candidates = asp::enumerate_candidates(8, 4).unwrap();
    let scores: Vec<f64> = (0..candidates.len()).map(|_| rng.random()).collect();
    c.bench_function("asp(8,4) greedy", |b| {
        b.iter(|| asp::greedy_construct_over(&candidates, black_box(&scores)).unwrap())
    });
}

criterion_group!(benches, tasks);
criterion_main!(benches);
