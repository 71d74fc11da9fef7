use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use esr_bench::{filters, luma};
use esr_core::tensor::{conv2d, conv2d_transposed, demultiplex_filter, pixel_shuffle};

fn conv(c: &mut Criterion) {
    let x = luma(270, 480, 1);
    let mut group = c.benchmark_group("conv2d");
    group.throughput(Throughput::Elements(x.len() as u64));
    for (out, k) in [(8, 3), (16, 5), (16, 7)] {
        let w = filters(out, 1, k, 2);
        group.bench_with_input(BenchmarkId::new(format!("{out}x{k}x{k}"), "480x270"), &w, |b, w| {
            b.iter(|| conv2d(&x, w, 1, (k - 1) / 2).unwrap())
        });
    }
    group.finish();
}

fn split_vs_transposed(c: &mut Criterion) {
    let x = luma(135, 240, 3);
    let mut group = c.benchmark_group("upscale_filter");
    for s in [2, 3, 4] {
        let k = 3 * s;
        let w = filters(1, 1, k, 4);
        let split = demultiplex_filter(&w, s).unwrap();
        group.bench_with_input(BenchmarkId::new("transposed", s), &s, |b, &s| {
            b.iter(|| conv2d_transposed(&x, &w, s).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("split", s), &s, |b, &s| {
            b.iter(|| pixel_shuffle(&conv2d(&x, &split, 1, (split.kh() - 1) / 2).unwrap(), s).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conv, split_vs_transposed);
criterion_main!(benches);
