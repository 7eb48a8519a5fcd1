use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use glmf_bench::{binomial_problem, dataset};
use glmf_core::irls::{self, IrlsProblem, Partition};
use glmf_core::{glmf, impute, Family, FitConfig, ImputeConfig, Method};
use std::hint::black_box;

fn irls_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("irls_binomial_columns");
    for cols in [50, 200] {
        let (props, trials, design) = binomial_problem(200, cols, 3);
        group.bench_with_input(BenchmarkId::from_parameter(cols), &cols, |b, _| {
            b.iter(|| {
                let parts = vec![Partition::new(0..200, Family::Binomial, 1.0)];
                irls::solve_rows(black_box(&IrlsProblem::new(&props, &trials, parts, &design))).unwrap()
            })
        });
    }
    group.finish();
}

fn glmf_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("glmf_fit");
    group.sample_size(10);
    for n in [50, 100] {
        let (data, _) = dataset(n, 3, 0.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| glmf::fit(black_box(&data), &FitConfig::new(3)).unwrap())
        });
    }
    group.finish();
}

fn imputation(c: &mut Criterion) {
    let mut group = c.benchmark_group("impute_60x60");
    group.sample_size(10);
    let (data, _) = dataset(60, 2, 0.2);
    for method in [Method::Glmf, Method::Lpca, Method::Pca, Method::Log5] {
        group.bench_with_input(BenchmarkId::from_parameter(method), &method, |b, &m| {
            b.iter(|| impute::impute(black_box(&data), m, 2, &ImputeConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, irls_sweep, glmf_fit, imputation);
criterion_main!(benches);
