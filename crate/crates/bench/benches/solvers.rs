use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ltirelay::*;

fn params(a: f64, b: f64, p: f64) -> ChannelParams {
    ChannelParams::real(a, b, 1.0, p, 1.0).unwrap()
}

fn mode_optimizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimize_lti_real");
    group.sample_size(10);
    let opts = SolverOptions::default();
    for (a, b, p) in [(1.0, 2.0, 0.1), (2.0, 1.0, 1.0)] {
        let q = params(a, b, p);
        group.bench_function(format!("a={a},b={b},P={p}"), |bench| {
            bench.iter(|| optimize_lti_real(black_box(&q), &opts).unwrap())
        });
    }
    group.finish();
}

fn bin_oracle(c: &mut Criterion) {
    let q = params(1.0, 2.0, 0.1);
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("oracle_optimize");
    group.sample_size(10);
    for n in [32, 128] {
        group.bench_function(format!("n={n}"), |bench| {
            bench.iter(|| oracle_optimize(black_box(&q), n, &opts).unwrap())
        });
    }
    group.finish();
}

fn block_mi(c: &mut Criterion) {
    let q = params(1.0, 2.0, 1.0);
    let fs = smooth_test_spectrum(4096, 1.0);
    let taps = FilterTaps::from_real(&[0.2, 0.5, 0.2]).unwrap();
    let mut group = c.benchmark_group("toeplitz_mi");
    for n in [64, 256] {
        group.bench_function(format!("n={n}"), |bench| {
            bench.iter(|| toeplitz_mi(black_box(&fs), &taps, &q, n).unwrap())
        });
    }
    group.finish();
}

fn synthesis(c: &mut Criterion) {
    let q = params(2.0, 1.0, 0.1);
    let sol = optimize_lti_real(&q, &SolverOptions::default()).unwrap();
    let plan = plan_bands(&sol.allocation, &q, 0.01 * PI).unwrap();
    let mut group = c.benchmark_group("synthesize_taps");
    for l in [1024, 4096] {
        group.bench_function(format!("L={l}"), |bench| {
            bench.iter(|| synthesize_taps(black_box(&plan), l).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mode_optimizer, bin_oracle, block_mi, synthesis);
criterion_main!(benches);
