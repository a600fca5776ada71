//! Compares the rayon-parallel data paths against the same code pinned to
//! a single worker thread. Run with `cargo bench -p lfrecon-core`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lfrecon_core::exec;
use lfrecon_core::fusion::{gridfit, GridFitSpec, PointCloud};
use lfrecon_core::lightfield::CameraRig;
use lfrecon_core::oracle::{estimate_depthmap, SlopeSearchSpec};
use lfrecon_core::rng::derive_rng;
use lfrecon_core::synth::{make_scene, render_lightfield_with, Difficulty, Pose, RenderOptions};
use rand::Rng;

const RES: usize = 48;

fn render_once() -> (lfrecon_core::lightfield::LightField, CameraRig) {
    let scene = make_scene(17, Difficulty::FaceLike);
    let rig = CameraRig::default_for_res(RES, RES);
    let opts = RenderOptions {
        angular_res: (9, 9),
        ..Default::default()
    };
    let (lf, _) =
        render_lightfield_with(&scene, &rig, &Pose::frontal(), (RES, RES), &opts).unwrap();
    (lf, rig)
}

fn bench_render(c: &mut Criterion) {
    let scene = make_scene(17, Difficulty::FaceLike);
    let rig = CameraRig::default_for_res(RES, RES);
    let opts = RenderOptions {
        angular_res: (5, 5),
        ..Default::default()
    };
    let run = || render_lightfield_with(&scene, &rig, &Pose::frontal(), (RES, RES), &opts).unwrap();

    let mut group = c.benchmark_group("render_lightfield_48px_5x5");
    group.sample_size(10);
    group.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(run));
    group.bench_function(BenchmarkId::from_parameter("sequential"), |b| {
        b.iter(|| exec::run_single_threaded(run))
    });
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let (lf, rig) = render_once();
    let spec = SlopeSearchSpec::default();
    let run = || estimate_depthmap(&lf, &spec, &rig).unwrap();

    let mut group = c.benchmark_group("oracle_depthmap_48px_9x9");
    group.sample_size(10);
    group.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(run));
    group.bench_function(BenchmarkId::from_parameter("sequential"), |b| {
        b.iter(|| exec::run_single_threaded(run))
    });
    group.finish();
}

fn bench_gridfit(c: &mut Criterion) {
    let mut rng = derive_rng(3, "bench-gridfit");
    let points: Vec<[f64; 3]> = (0..20_000)
        .map(|_| {
            let x: f64 = rng.gen_range(-60.0..60.0);
            let y: f64 = rng.gen_range(-60.0..60.0);
            [x, y, 300.0 + (x / 15.0).sin() * 4.0 + (y / 12.0).cos() * 3.0]
        })
        .collect();
    let pc = PointCloud::new(points);
    let spec = GridFitSpec::new(64, 64);
    let run = || gridfit(&pc, &spec).unwrap();

    let mut group = c.benchmark_group("gridfit_64x64_20k_points");
    group.sample_size(10);
    group.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(run));
    group.bench_function(BenchmarkId::from_parameter("sequential"), |b| {
        b.iter(|| exec::run_single_threaded(run))
    });
    group.finish();
}

criterion_group!(benches, bench_render, bench_oracle, bench_gridfit);
criterion_main!(benches);
