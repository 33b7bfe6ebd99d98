//! Microbenchmarks for the numerical kernels the estimators lean on.

use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use mgp_core::prior::{sample_variance_path, MgpHyperparams};
use mgp_core::shrinkage::{cdf_gap, estimate_quantile_table};
use mgp_core::specfun::{bessel_k, ln_bessel_k, log_gamma, reg_gamma_q};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn specfun(c: &mut Criterion) {
    let mut g = c.benchmark_group("specfun");
    g.bench_function("log_gamma", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 1..100 {
                acc += log_gamma(black_box(0.07 * i as f64)).unwrap();
            }
            acc
        })
    });
    g.bench_function("reg_gamma_q", |b| {
        b.iter(|| reg_gamma_q(black_box(2.5), black_box(3.0)).unwrap())
    });
    g.bench_function("bessel_k0", |b| b.iter(|| bessel_k(0.0, black_box(2.0)).unwrap()));
    g.bench_function("ln_bessel_k_small_arg", |b| {
        b.iter(|| ln_bessel_k(black_box(1.7), black_box(0.05)).unwrap())
    });
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let hp = MgpHyperparams::new(2.0, 3.0, 5).unwrap();
    let mut g = c.benchmark_group("sampling");
    g.throughput(Throughput::Elements(1));
    g.bench_function("variance_path_k5", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        b.iter(|| sample_variance_path(&hp, &mut rng))
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let hp = MgpHyperparams::new(2.0, 2.0, 5).unwrap();
    let mut g = c.benchmark_group("estimators");
    g.sample_size(20);
    g.bench_function("quantile_table_10k", |b| {
        b.iter(|| estimate_quantile_table(&hp, &[0.25, 0.5, 0.75], 10_000, 7).unwrap())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let paths: Vec<_> = (0..10_000)
        .map(|_| sample_variance_path(&hp, &mut rng).unwrap())
        .collect();
    g.bench_function("cdf_gap_10k_paths", |b| {
        b.iter(|| cdf_gap(black_box(2), black_box(1.5), &hp, &paths).unwrap())
    });
    g.finish();
}

criterion_group!(benches, specfun, sampling, estimators);
criterion_main!(benches);
