use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use score_bench::{batch, datastore, model, samples};
use score_core::{
    knn_query, loss_gradients, posterior, predict_batch, InferenceConfig, TrainConfig,
};

fn bench_project(c: &mut Criterion) {
    let data = samples(50);
    let m = model(128, 15);
    c.bench_function("project", |b| {
        b.iter(|| m.project(black_box(&data[0].x)).unwrap())
    });
}

fn bench_loss_gradients(c: &mut Criterion) {
    let data = samples(100);
    let m = model(128, 15);
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("loss_gradients");
    for n in [32, 128] {
        let (xs, y) = batch(&data, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| loss_gradients(&m, black_box(&xs), &y, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_knn(c: &mut Criterion) {
    let m = model(64, 15);
    let mut group = c.benchmark_group("knn_query");
    for per_cluster in [200, 2000] {
        let data = samples(per_cluster);
        let store = datastore(&m, &data);
        let q = m.project(&data[3].x).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(store.len()), &store, |b, s| {
            b.iter(|| knn_query(s, black_box(&q), 50).unwrap())
        });
    }
    group.finish();
}

fn bench_posterior(c: &mut Criterion) {
    let m = model(64, 15);
    let data = samples(500);
    let store = datastore(&m, &data);
    let q = m.project(&data[3].x).unwrap();
    let cfg = InferenceConfig {
        k: 100,
        ..Default::default()
    };
    let nn = knn_query(&store, &q, cfg.k).unwrap();
    c.bench_function("posterior", |b| {
        b.iter(|| posterior(&store, black_box(&nn), &cfg))
    });
}

fn bench_predict_batch(c: &mut Criterion) {
    let m = model(64, 15);
    let data = samples(500);
    let (store_part, test) = data.split_at(2400);
    let store = datastore(&m, store_part);
    let cfg = InferenceConfig::default();
    c.bench_function("predict_batch", |b| {
        b.iter(|| predict_batch(&m, &store, black_box(test), &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    bench_project,
    bench_loss_gradients,
    bench_knn,
    bench_posterior,
    bench_predict_batch
);
criterion_main!(benches);
