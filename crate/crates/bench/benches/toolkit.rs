use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use martapprox::criteria::{alpha_coefficient, AlphaMode};
use martapprox::montecarlo::simulate;
use martapprox::spectral::spectral_measure;
use martapprox::{FiniteMarkovChain, Observable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reversible_chain(n: usize, seed: u64) -> FiniteMarkovChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper: Vec<Vec<f64>> = (0..n).map(|i| (i..n).map(|_| rng.random_range(0.1..1.0)).collect()).collect();
    let weight = |i: usize, j: usize| if i <= j { upper[i][j - i] } else { upper[j][i - j] };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| weight(i, j)).collect::<Vec<f64>>())
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect();
    FiniteMarkovChain::from_rows(&rows).expect("valid chain")
}

fn observable(chain: &FiniteMarkovChain) -> Observable {
    let values = (0..chain.n_states()).map(|i| (i as f64 * 0.7).sin()).collect();
    Observable::centered(chain, values).expect("valid observable").0
}

fn chain_ops(c: &mut Criterion) {
    let mut g = c.benchmark_group("chain");
    for n in [4, 16, 64] {
        let rows: Vec<Vec<f64>> = {
            let chain = reversible_chain(n, 1);
            (0..n).map(|i| (0..n).map(|j| chain.transition(i, j)).collect()).collect()
        };
        g.bench_with_input(BenchmarkId::new("build_chain", n), &rows, |b, rows| {
            b.iter(|| FiniteMarkovChain::from_rows(black_box(rows)).unwrap())
        });
        let chain = reversible_chain(n, 1);
        let f = observable(&chain);
        g.bench_with_input(BenchmarkId::new("poisson_solve", n), &n, |b, _| {
            b.iter(|| chain.poisson_solve(black_box(&f)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("spectral_measure", n), &n, |b, _| {
            b.iter(|| spectral_measure(&chain, black_box(&f)).unwrap())
        });
    }
    g.finish();
}

fn exact_alpha(c: &mut Criterion) {
    let mut g = c.benchmark_group("alpha_exact");
    g.sample_size(10);
    for n in [8, 12, 16] {
        let chain = reversible_chain(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| alpha_coefficient(&chain, black_box(3), AlphaMode::Exact).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let chain = reversible_chain(8, 3);
    for n in [1024, 8192] {
        g.bench_with_input(BenchmarkId::new("1000_replicas", n), &n, |b, &n| {
            b.iter(|| simulate(&chain, n, 1000, black_box(42)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, chain_ops, exact_alpha, sampling);
criterion_main!(benches);
