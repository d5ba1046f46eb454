// SPDX-License-Identifier: MIT OR Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ivtrace_core::patching::{grid_scan, MediationOptions};
use ivtrace_core::tasks::{PromptRecord, TaskSet};
use ivtrace_core::toy::{gen_toy_model, gen_toy_tasks, ToyTaskSpec};
use ivtrace_core::{build_surrogates, enumerate_paths, forward, EnumerateOptions, Intervention, ModelConfig};
use std::hint::black_box;

fn forward_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for (layers, dim) in [(2, 16), (4, 32), (8, 64)] {
        let bundle = gen_toy_model(1, &ModelConfig::toy(layers, 2, dim, 64)).unwrap();
        let tokens: Vec<usize> = (0..16).map(|i| (i * 7) % 64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(format!("L{layers}_d{dim}")), &tokens, |b, t| {
            b.iter(|| forward(&bundle.model, black_box(t), &Intervention::none()).unwrap())
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let bundle = gen_toy_model(2, &ModelConfig::toy(4, 2, 16, 64)).unwrap();
    let spec = ToyTaskSpec {
        num_tasks: 2,
        samples_per_task: 8,
        rephrasings_per_task: 0,
    };
    let (lines, _) = gen_toy_tasks(2, &bundle.tokenizer, spec).unwrap();
    let records = lines
        .iter()
        .map(|l| PromptRecord::from_line(l, &bundle.tokenizer).unwrap().0)
        .collect();
    let tasks = TaskSet::new(records);
    let opts = MediationOptions::new(bundle.tokenizer.filler_id());
    c.bench_function("grid_scan/L4_16_records", |b| {
        b.iter(|| grid_scan(&bundle.model, black_box(&tasks), 2, opts).unwrap())
    });
}

fn paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_paths");
    group.sample_size(20);
    for layers in [2, 3, 4] {
        let bundle = gen_toy_model(3, &ModelConfig::toy(layers, 2, 16, 64)).unwrap();
        let tokens = [3, 9, 14, 27, 40, 5];
        let trace = forward(&bundle.model, &tokens, &Intervention::none()).unwrap();
        let surr = build_surrogates(&trace, &bundle.model).unwrap();
        let opts = EnumerateOptions::default();
        group.bench_function(BenchmarkId::from_parameter(format!("L{layers}")), |b| {
            b.iter(|| enumerate_paths(&trace, &surr, &bundle.model, 10, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_pass, scan, paths);
criterion_main!(benches);
