//! Hot-path benchmarks: series evaluation, the L1 history sum, dense
//! matrix kernels, and a short closed-loop integration.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use fracstab::fracderiv::{self, CaputoOrder, SampledFn};
use fracstab::matrix::{self, Mat};
use fracstab::model::{self, GainForm, LoopForm};
use fracstab::sim::{self, SimConfig};
use fracstab::specfun::{self, MLParams};

fn bench_mittag_leffler(c: &mut Criterion) {
    let p = MLParams::new(0.6, 1.0).unwrap();
    c.bench_function("mittag_leffler alpha 0.6 z -5", |b| {
        b.iter(|| specfun::mittag_leffler(black_box(p), black_box(-5.0)).unwrap().value)
    });
    c.bench_function("mittag_leffler alpha 0.6 z 20", |b| {
        b.iter(|| specfun::mittag_leffler(black_box(p), black_box(20.0)).unwrap().value)
    });
}

fn bench_l1_track(c: &mut Criterion) {
    let order = CaputoOrder::new(2.0 / 3.0).unwrap();
    let f = SampledFn::sample(1e-3, 4001, |t| (t * t).sin()).unwrap();
    c.bench_function("caputo_l1_track 4000 steps", |b| {
        b.iter(|| fracderiv::caputo_l1_track(black_box(&f), order))
    });
}

fn bench_matrix_kernels(c: &mut Criterion) {
    let a = Mat::from_rows(&[
        vec![-15.0, 15.0, 0.0],
        vec![110.0, -1.0, 0.0],
        vec![0.0, 0.0, -1.0],
    ])
    .unwrap();
    c.bench_function("expm 3x3 t 1", |b| {
        b.iter(|| matrix::expm(black_box(&a), black_box(1.0)).unwrap())
    });
    c.bench_function("eigenvalues 3x3", |b| {
        b.iter(|| matrix::eigenvalues(black_box(&a)).unwrap())
    });
    let e = matrix::expm(&a, 0.05).unwrap();
    c.bench_function("spectral_norm 3x3", |b| {
        b.iter(|| matrix::spectral_norm(black_box(&e)).unwrap())
    });
}

fn bench_integrate(c: &mut Criterion) {
    let cls =
        model::close_loop(model::builtin_example(LoopForm::Closed, GainForm::AsPrinted)).unwrap();
    let cfg = SimConfig {
        t_end: 2.0,
        dt: 1e-3,
        divergence_cap: 1e6,
        record_stride: 10,
    };
    c.bench_function("integrate closed loop 2000 steps", |b| {
        b.iter_batched(
            || cfg,
            |cfg| sim::integrate(black_box(&cls), &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_mittag_leffler,
    bench_l1_track,
    bench_matrix_kernels,
    bench_integrate
);
criterion_main!(benches);
