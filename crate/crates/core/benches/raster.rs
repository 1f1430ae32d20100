use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use splat_core::raster::{render_backward, render_forward, RenderSettings};
use splat_core::synthetic::{build, SyntheticSpec};
use splat_core::train::compute_loss;
use splat_core::Execution;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn raster(c: &mut Criterion) {
    let spec = SyntheticSpec { num_gaussians: 2000, num_views: 2, ..SyntheticSpec::default() };
    let scene = build(&spec).expect("synthetic scene");
    let view = &scene.views[1];
    let model = &scene.teacher;

    let mut group = c.benchmark_group("render_forward");
    for (name, execution) in modes() {
        let settings = RenderSettings { execution, ..RenderSettings::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| render_forward(model, &view.camera, &settings).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("render_backward");
    for (name, execution) in modes() {
        let settings = RenderSettings { execution, ..RenderSettings::default() };
        let (img, binning) = render_forward(model, &view.camera, &settings).unwrap();
        let target = splat_core::ImageBuffer::filled(img.width, img.height, [0.5; 3]);
        let (_, d_img) = compute_loss(&img, &target, 0.2).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| render_backward(model, &view.camera, &settings, &binning, &d_img).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = raster
}
criterion_main!(benches);
