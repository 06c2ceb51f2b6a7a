use aidtopics::clustering::{build_mst, core_distances, hdbscan};
use aidtopics::labeling::{ctfidf, tokenize};
use aidtopics::reduction::{knn_graph, KnnMode};
use aidtopics::validity::silhouette;
use aidtopics::{ClusterParams, Metric};
use aidtopics_bench::{clustered_points, corpus};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    group.sample_size(10);
    for n in [1_000usize, 4_000] {
        let (x, _) = clustered_points(n, 32, 8, 1);
        group.bench_with_input(BenchmarkId::new("exact", n), &x, |b, x| {
            b.iter(|| knn_graph(x, 15, Metric::Euclidean, KnnMode::Exact, 0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("approximate", n), &x, |b, x| {
            b.iter(|| knn_graph(x, 15, Metric::Euclidean, KnnMode::Approximate, 0).unwrap())
        });
    }
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("hdbscan");
    group.sample_size(10);
    for n in [1_000usize, 3_000] {
        let (x, _) = clustered_points(n, 12, 6, 2);
        let core = core_distances(&x, 15).unwrap();
        group.bench_with_input(BenchmarkId::new("mst", n), &x, |b, x| {
            b.iter(|| build_mst(x, &core))
        });
        group.bench_with_input(BenchmarkId::new("full", n), &x, |b, x| {
            b.iter(|| hdbscan(x, &ClusterParams::with_min_cluster_size(50)).unwrap())
        });
    }
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("silhouette");
    group.sample_size(10);
    for n in [1_000usize, 4_000] {
        let (x, labels) = clustered_points(n, 12, 6, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(x, labels), |b, (x, l)| {
            b.iter(|| silhouette(x, l).unwrap())
        });
    }
}

fn labeling(c: &mut Criterion) {
    let (corpus, labels) = corpus(5_000);
    let tokens: Vec<Vec<String>> = corpus.texts().map(tokenize).collect();
    c.bench_function("ctfidf/5000", |b| {
        b.iter(|| ctfidf(&tokens, &labels, std::f64::consts::E).unwrap())
    });
}

criterion_group!(benches, knn, clustering, metrics, labeling);
criterion_main!(benches);
