use aes_imc_core::metrics::{audit, build_report, bundled_baselines, MetricsInput};
use aes_imc_core::{encrypt_block, BankFarm, Pipeline, SimConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn blocks(n: usize) -> Vec<([u8; 16], [u8; 16])> {
    (0..n)
        .map(|i| {
            let b = (i as u128).wrapping_mul(0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c835);
            (b.to_be_bytes(), (!b).to_be_bytes())
        })
        .collect()
}

fn reference(c: &mut Criterion) {
    let (pt, key) = blocks(1)[0];
    c.bench_function("reference_encrypt_block", |b| b.iter(|| encrypt_block(black_box(&pt), black_box(&key))));
}

fn simulated_block(c: &mut Criterion) {
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let (pt, key) = blocks(1)[0];
    c.bench_function("simulated_block", |b| b.iter(|| p.run_block(black_box(&pt), black_box(&key)).unwrap()));
    c.bench_function("simulated_block_traced", |b| {
        b.iter(|| p.run_block_traced(black_box(&pt), black_box(&key)).unwrap())
    });
}

fn banked_stream(c: &mut Criterion) {
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let input = blocks(256);
    let mut group = c.benchmark_group("banked_stream");
    group.throughput(Throughput::Elements(input.len() as u64));
    for banks in [1usize, 4, 16] {
        let farm = BankFarm::new(banks).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(banks), &farm, |b, farm| {
            b.iter(|| p.run_banked(farm, black_box(&input), false).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let rows = bundled_baselines();
    c.bench_function("metrics_report", |b| b.iter(|| build_report(black_box(&MetricsInput::aes_imc(26))).unwrap()));
    c.bench_function("baseline_audit", |b| b.iter(|| audit(black_box(&rows), Default::default())));
}

criterion_group!(benches, reference, simulated_block, banked_stream, metrics);
criterion_main!(benches);
