use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dvip::train::objective_and_gradients;
use dvip_bench::fixture;

fn by_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective_and_gradients/batch");
    for b in [25, 50, 100, 200] {
        let f = fixture(400, b, 20, 2);
        group.bench_with_input(BenchmarkId::from_parameter(b), &f, |bench, f| {
            bench.iter(|| objective_and_gradients(&f.model, &f.data, &f.batch, &f.config, 0).unwrap())
        });
    }
    group.finish();
}

fn by_samples(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective_and_gradients/samples");
    for s in [10, 20, 40, 80] {
        let f = fixture(400, 100, s, 2);
        group.bench_with_input(BenchmarkId::from_parameter(s), &f, |bench, f| {
            bench.iter(|| objective_and_gradients(&f.model, &f.data, &f.batch, &f.config, 0).unwrap())
        });
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let f = fixture(400, 100, 20, 2);
    let (x, _) = f.data.batch(&f.batch);
    c.bench_function("predict/100x100", |bench| bench.iter(|| f.model.predict(&x, 100, 0).unwrap()));
}

criterion_group!(benches, by_batch, by_samples, prediction);
criterion_main!(benches);
