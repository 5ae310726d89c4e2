use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use skillforge::retrieval::Bm25Index;
use skillforge_bench::library;
use std::hint::black_box;

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("bm25 build");
    for n in [100, 1000] {
        let (lib, _) = library(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &lib, |b, l| b.iter(|| Bm25Index::build(black_box(l))));
    }
    group.finish();
}

fn query(c: &mut Criterion) {
    let mut group = c.benchmark_group("bm25 top-5");
    for n in [100, 1000] {
        let (lib, queries) = library(n);
        let index = Bm25Index::build(&lib);
        group.bench_with_input(BenchmarkId::from_parameter(n), &queries, |b, qs| {
            b.iter(|| {
                for q in qs {
                    black_box(index.retrieve(q, 5));
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, build, query);
criterion_main!(benches);
