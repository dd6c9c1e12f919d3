use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthcond::conditioning::{ntk_matrix, propagate_kernel, verify_top_layer};
use depthcond::montecarlo::{empirical_kernel, sample_network};
use depthcond_bench::{dual, inputs, network};
use std::hint::black_box;

fn dual_eval(c: &mut Criterion) {
    let d = dual();
    c.bench_function("dual eval", |b| b.iter(|| d.eval(black_box(0.37)).unwrap()));
}

fn limit_kernels(c: &mut Criterion) {
    let d = dual();
    let mut g = c.benchmark_group("limit kernels");
    for n in [8, 32] {
        let fx = inputs(n);
        g.bench_with_input(BenchmarkId::new("propagate L=50", n), &fx, |b, fx| {
            b.iter(|| propagate_kernel(&fx.gram, &d, 50).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("ntk L=50", n), &fx, |b, fx| b.iter(|| ntk_matrix(&fx.gram, &d, 50).unwrap()));
        g.bench_with_input(BenchmarkId::new("profile lmax=60", n), &fx, |b, fx| {
            b.iter(|| verify_top_layer(&fx.gram, &d, 60).unwrap())
        });
    }
    g.finish();
}

fn finite_width(c: &mut Criterion) {
    let fx = inputs(8);
    let dim = fx.vectors[0].len();
    let mut g = c.benchmark_group("finite width");
    g.sample_size(20);
    for m in [256, 1024] {
        let cfg = network(dim, m, 3);
        g.bench_with_input(BenchmarkId::new("sample network", m), &cfg, |b, cfg| b.iter(|| sample_network(cfg).unwrap()));
        let net = sample_network(&cfg).unwrap();
        g.bench_with_input(BenchmarkId::new("empirical kernel", m), &net, |b, net| {
            b.iter(|| empirical_kernel(net, &fx.vectors).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dual_eval, limit_kernels, finite_width);
criterion_main!(benches);
