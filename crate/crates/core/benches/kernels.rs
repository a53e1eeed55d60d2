//! Fused vs per-gate gradients, and the rayon core against its sequential
//! fallback. Run `cargo bench -p qfuse` and
//! `cargo bench -p qfuse --no-default-features`; group names carry the
//! build flavor so both reports sit side by side.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use qfuse::fusion::FusedOp;
use qfuse::*;

const FLAVOR: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
const N: usize = 14;
const BATCH: usize = 8;

fn thread_counts() -> Vec<usize> {
    let max = Engine::new().threads();
    if max > 1 {
        vec![1, max]
    } else {
        vec![1]
    }
}

fn gradients(c: &mut Criterion) {
    let circuit = build_hea(N, 2, 1).unwrap();
    let fused = fuse_circuit(&circuit, FusionPolicy::default()).unwrap();
    let state = BatchedState::<f32>::random(N, BATCH, 2).unwrap();
    let pauli = PauliString::repeating_ixyz(N).unwrap();

    let mut group = c.benchmark_group(format!("gradient/{FLAVOR}"));
    group.throughput(Throughput::Elements(BATCH as u64));
    group.sample_size(10);
    for threads in thread_counts() {
        let mut engine = Engine::with_threads(Some(threads));
        group.bench_function(BenchmarkId::new("fused", threads), |b| {
            b.iter(|| engine.gradient(&fused, black_box(&state), circuit.theta(), &pauli, LedgerMode::Full).unwrap())
        });
        group.bench_function(BenchmarkId::new("fused_mem_save", threads), |b| {
            b.iter(|| engine.gradient(&fused, black_box(&state), circuit.theta(), &pauli, LedgerMode::MemSave).unwrap())
        });
        group.bench_function(BenchmarkId::new("naive", threads), |b| {
            b.iter(|| engine.naive_gradient(&circuit, black_box(&state), circuit.theta(), &pauli).unwrap())
        });
        group.bench_function(BenchmarkId::new("checkpointed_b1", threads), |b| {
            b.iter(|| {
                run_checkpointed(&mut engine, &fused, black_box(&state), circuit.theta(), &pauli, 1, LedgerMode::Full).unwrap()
            })
        });
    }
    group.finish();
}

fn single_ops(c: &mut Criterion) {
    let circuit = build_hea(N, 1, 3).unwrap();
    let fused = fuse_circuit(&circuit, FusionPolicy::default()).unwrap();
    let state = BatchedState::<f32>::random(N, BATCH, 4).unwrap();
    let pauli = PauliString::repeating_ixyz(N).unwrap();
    let (block, cz) = match (&fused.ops()[0], fused.ops().last().unwrap()) {
        (FusedOp::Unitary(b), FusedOp::Cz(z)) => (b.clone(), z.clone()),
        _ => unreachable!("an HEA layer starts with rotations and ends with the CZ ring"),
    };
    let lambda = BatchedState::<f32>::random(N, BATCH, 5).unwrap();

    let mut group = c.benchmark_group(format!("kernel/{FLAVOR}"));
    group.throughput(Throughput::Bytes(state.bytes()));
    for threads in thread_counts() {
        let mut engine = Engine::with_threads(Some(threads));
        group.bench_function(BenchmarkId::new("fused_unitary", threads), |b| {
            b.iter(|| engine.apply_fused_unitary(black_box(&state), &block, circuit.theta()).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward_block", threads), |b| {
            b.iter(|| engine.backward_block(black_box(&state), &lambda, &block, circuit.theta()).unwrap())
        });
        group.bench_function(BenchmarkId::new("fused_cz", threads), |b| {
            b.iter(|| engine.apply_fused_cz(black_box(&state), &cz).unwrap())
        });
        group.bench_function(BenchmarkId::new("expectation", threads), |b| {
            b.iter(|| engine.expectation(black_box(&state), &pauli).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, single_ops);
criterion_main!(benches);
