use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use esr_bench::{luma, model, MODELS};

fn forward(c: &mut Criterion) {
    // a quarter of the 960x540 protocol input keeps runs short
    let x = luma(270, 480, 7);
    let mut group = c.benchmark_group("forward");
    group.sample_size(20);
    group.throughput(Throughput::Elements(4 * x.len() as u64));
    for name in MODELS {
        let bank = model(name);
        group.bench_with_input(BenchmarkId::from_parameter(name), &bank, |b, bank| {
            b.iter(|| bank.forward(&x).unwrap())
        });
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let x = luma(39, 39, 8);
    let mut group = c.benchmark_group("train_step");
    for name in ["eSR-TM_s2_K3_C4", "FSRCNN_s2_D25_S5_M1"] {
        let bank = model(name);
        let trace = bank.forward_trace(&x).unwrap();
        let up = trace.output.clone();
        group.bench_function(name, |b| b.iter(|| bank.backward(&trace, &up).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, forward, backward);
criterion_main!(benches);
