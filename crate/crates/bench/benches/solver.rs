use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stosqp_bench::fixture;
use stosqp_core::rng::auxiliary_stream;
use stosqp_core::sketch::{contraction_audit, solve_exact, solve_inexact};
use stosqp_core::{NoiseModel, RunConfig, RunState, Schedule, SketchDistribution, SketchKind};

fn bench_sketch_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton_solve");
    for name in ["eq_quadratic", "hs48"] {
        let f = fixture(name);
        let n = f.kkt.nrows();
        group.bench_with_input(BenchmarkId::new("exact", name), &f, |b, f| {
            b.iter(|| solve_exact(black_box(&f.kkt), black_box(&f.rhs)).unwrap())
        });
        for kind in [
            SketchKind::Coordinate,
            SketchKind::BlockCoordinate(2),
            SketchKind::Gaussian(2),
        ] {
            let dist = SketchDistribution::new(kind, n).unwrap();
            let mut rng = auxiliary_stream(0, 0);
            group.bench_with_input(
                BenchmarkId::new(format!("{kind}/tau50"), name),
                &f,
                |b, f| {
                    b.iter(|| {
                        solve_inexact(black_box(&f.kkt), black_box(&f.rhs), 50, &dist, &mut rng)
                            .unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

fn bench_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration");
    for (name, sketch) in [
        ("eq_quadratic", SketchKind::Exact),
        ("eq_quadratic", SketchKind::Coordinate),
        ("hs48", SketchKind::Coordinate),
        ("eq_logistic", SketchKind::Coordinate),
    ] {
        let f = fixture(name);
        let mut config = RunConfig::new(Schedule::new(2.0, 0.6, 2.0).unwrap(), 1e-2, 0);
        config.sketch = sketch;
        let noise = NoiseModel::new(1e-2, f.problem.dim_primal()).unwrap();
        let mut state = RunState::new(&f.problem, 0, 0);
        for _ in 0..100 {
            state.step(&f.problem, &noise, &config).unwrap();
        }
        group.bench_function(BenchmarkId::new(sketch.to_string(), name), |b| {
            b.iter_batched_ref(
                || state.clone(),
                |s| s.step(&f.problem, &noise, &config).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_audit(c: &mut Criterion) {
    let f = fixture("hs48");
    let n = f.kkt.nrows();
    let coordinate = SketchDistribution::new(SketchKind::Coordinate, n).unwrap();
    let gaussian = SketchDistribution::new(SketchKind::Gaussian(3), n).unwrap();
    let mut rng = auxiliary_stream(0, 1);
    c.bench_function("audit/kaczmarz_closed_form", |b| {
        b.iter(|| contraction_audit(black_box(&f.kkt), &coordinate, 0, &mut rng).unwrap())
    });
    c.bench_function("audit/gaussian_mc_1000", |b| {
        b.iter(|| contraction_audit(black_box(&f.kkt), &gaussian, 1000, &mut rng).unwrap())
    });
}

criterion_group!(benches, bench_sketch_solves, bench_iteration, bench_audit);
criterion_main!(benches);
