mod common;
mod range_coder;

use criterion::{criterion_group, criterion_main};

criterion_group!(benches, range_coder::bench, decode::bench);
criterion_main!(benches);
