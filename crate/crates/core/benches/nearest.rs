use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat_core::geometry::KdTree;
use splat_core::Execution;

fn cloud(n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    (0..n).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect()
}

fn nearest(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points = cloud(50_000, &mut rng);
    let queries = cloud(50_000, &mut rng);
    c.bench_function("kdtree_build_50k", |b| b.iter(|| KdTree::build(&points)));

    let tree = KdTree::build(&points);
    let mut group = c.benchmark_group("nearest_batch_50k");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| tree.nearest_batch(&queries, exec)));
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = nearest
}
criterion_main!(benches);
