//! Cost of one Gibbs sweep at the study dimensions.

use criterion::{criterion_group, criterion_main, Criterion};
use mgp_core::factor::{gibbs_step, sample_prior_state, simulate_dataset, FactorModelConfig};
use mgp_core::prior::MgpHyperparams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gibbs_sweep(c: &mut Criterion) {
    let cfg = FactorModelConfig {
        hp: MgpHyperparams::new(2.0, 2.0, 10).unwrap(),
        ..FactorModelConfig::default()
    };
    let data = simulate_dataset(cfg.p, cfg.n, cfg.k0, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut state = sample_prior_state(&cfg, &mut rng).unwrap();
    let mut g = c.benchmark_group("gibbs");
    g.sample_size(50);
    g.bench_function("sweep_p10_n100_k10", |b| {
        b.iter(|| gibbs_step(&mut state, &data.y, &cfg, &mut rng).unwrap())
    });
    g.finish();
}

criterion_group!(benches, gibbs_sweep);
criterion_main!(benches);
