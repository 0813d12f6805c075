//! Throughput of the pipeline stages: rasterization, path tracing, the
//! neural forward pass as the transparent-object count grows, and classical
//! compositing.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use glassbuf_bench::{bench_net, panes_instance};
use glassbuf_core::glassnet::forward_full;
use glassbuf_core::oit::{composite_sorted, depth_peel};
use glassbuf_core::pathtrace::trace_image;
use glassbuf_core::raster::{rasterize, synthetic_stack};

fn bench_rasterize(c: &mut Criterion) {
    let (_guard, instance) = panes_instance();
    c.bench_function("rasterize_64", |b| {
        b.iter(|| black_box(rasterize(&instance, 64, 64)))
    });
}

fn bench_trace(c: &mut Criterion) {
    let (_guard, instance) = panes_instance();
    c.bench_function("trace_32_spp8", |b| {
        b.iter(|| black_box(trace_image(&instance, 32, 32, 8, 7)))
    });
}

fn bench_forward_by_t(c: &mut Criterion) {
    let params = bench_net();
    let mut group = c.benchmark_group("forward_full_64");
    for t in [1usize, 2, 4, 8] {
        let stack = synthetic_stack(64, 64, t, 42);
        group.bench_with_input(BenchmarkId::from_parameter(t), &stack, |b, stack| {
            b.iter(|| black_box(forward_full(&params, stack)))
        });
    }
    group.finish();
}

fn bench_composite(c: &mut Criterion) {
    let (_guard, instance) = panes_instance();
    let stack = depth_peel(&instance, 128, 128, 8);
    c.bench_function("composite_sorted_128", |b| {
        b.iter(|| black_box(composite_sorted(&stack)))
    });
}

criterion_group!(
    benches,
    bench_rasterize,
    bench_trace,
    bench_forward_by_t,
    bench_composite
);
criterion_main!(benches);
