use criterion::{BenchmarkId, Criterion, Throughput};
use scr_core::entropy::{discretize_cdf, DEFAULT_PRECISION};
use scr_core::range_coder::{decode, encode};

use crate::common::coding_workload;

pub fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("range_coder");
    for n in [1_000, 10_000] {
        let (symbols, cdfs) = coding_workload(n);
        let stream = encode(&symbols, &cdfs).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("encode", n), &n, |b, _| {
            b.iter(|| encode(&symbols, &cdfs).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("decode", n), &n, |b, _| {
            b.iter(|| decode(&stream, &cdfs).unwrap())
        });
    }
    for sigma in [0.5, 5.0, 50.0] {
        group.bench_with_input(BenchmarkId::new("discretize_cdf", sigma), &sigma, |b, &s| {
            b.iter(|| discretize_cdf(0.3, s, DEFAULT_PRECISION))
        });
    }
    group.finish();
}
