use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flmtest_bench::brownian_sample;
use flmtest_core::fda::FpcaRoute;
use flmtest_core::{
    dimension_collection, fisher_upper_quantile, fisher_upper_tail, fpca, fpca_with_route, monte_carlo_weight,
    AdaptiveTester, RngStream,
};

fn bench_fpca(c: &mut Criterion) {
    let mut group = c.benchmark_group("fpca");
    group.sample_size(10);
    for n in [100, 500] {
        let sample = brownian_sample(n, 1);
        let k = dimension_collection(n, None).unwrap().kbar();
        group.bench_with_input(BenchmarkId::new("gram", n), &sample, |b, s| {
            b.iter(|| fpca_with_route(s.curves(), s.grid(), k, FpcaRoute::Gram).unwrap())
        });
    }
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_weight");
    group.sample_size(10);
    for n in [100, 500] {
        let sample = brownian_sample(n, 2);
        let collection = dimension_collection(n, None).unwrap();
        let decomposition = fpca(&sample, collection.kbar()).unwrap();
        let tester = AdaptiveTester::new(&decomposition, collection).unwrap();
        group.bench_with_input(BenchmarkId::new("B=1000", n), &tester, |b, t| {
            b.iter(|| monte_carlo_weight(t.contexts(), 0.05, 1000, RngStream::new(3)).unwrap())
        });
    }
    group.finish();
}

fn bench_fisher(c: &mut Criterion) {
    c.bench_function("fisher_upper_tail", |b| {
        b.iter(|| {
            (1..=64)
                .map(|k| fisher_upper_tail(1.3, k, 436).unwrap().value())
                .sum::<f64>()
        })
    });
    c.bench_function("fisher_upper_quantile", |b| {
        b.iter(|| fisher_upper_quantile(0.05 / 8.0, 32, 468).unwrap())
    });
}

criterion_group!(benches, bench_fpca, bench_monte_carlo, bench_fisher);
criterion_main!(benches);
