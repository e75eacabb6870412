use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curvflow::curvature::{curvature_field, CurvatureConfig};
use curvflow::graph::init_weights;
use curvflow::harness::generators::random_regular;
use curvflow::Execution;

fn serial_vs_parallel(c: &mut Criterion) {
    let mut group = c.benchmark_group("curvature_field");
    group.sample_size(10);
    for n in [500usize, 2_000, 8_000] {
        let graph = random_regular(n, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let metric = init_weights(&graph, 1.0, 1e-6).unwrap();
        for exec in [Execution::Serial, Execution::Parallel] {
            let cfg = CurvatureConfig::default().with_execution(exec);
            let label = format!("{exec:?}").to_lowercase();
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                b.iter(|| curvature_field(&graph, &metric, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, serial_vs_parallel);
criterion_main!(benches);
