use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use expnls_core::dynamics::{evolve, EvolveConfig};
use expnls_core::profile::solve_default;
use expnls_core::spectral::{spectral_report, DEFAULT_L_MAX};
use expnls_core::stability::growing_mode;
use expnls_core::{Complex64, ModelParams, RadialField};

fn profile(c: &mut Criterion) {
    let mut group = c.benchmark_group("profile");
    group.sample_size(10);
    let p = ModelParams::new(1.0, 0).unwrap();
    for n in [1024, 4096, 8192] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| solve_default(black_box(&p), n).unwrap())
        });
    }
    group.finish();
}

fn spectra(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectra");
    group.sample_size(10);
    let sol = solve_default(&ModelParams::new(1.0, 1).unwrap(), 4096).unwrap();
    group.bench_function("report", |b| b.iter(|| spectral_report(black_box(&sol), DEFAULT_L_MAX).unwrap()));
    group.bench_function("growing_mode", |b| b.iter(|| growing_mode(black_box(&sol)).unwrap()));
    group.finish();
}

fn dynamics(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    let sol = solve_default(&ModelParams::new(1.0, 0).unwrap(), 4096).unwrap();
    let u0 = RadialField::new(
        sol.grid().clone(),
        sol.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )
    .unwrap();
    let cfg = EvolveConfig { t_end: 0.1, ..EvolveConfig::default_for(1.0) };
    group.bench_function("100_steps", |b| b.iter(|| evolve(black_box(&u0), &sol.params, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, profile, spectra, dynamics);
criterion_main!(benches);
