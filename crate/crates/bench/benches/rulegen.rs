// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tabroute::ruleplane;
use tabroute_bench::chorded_ring;

fn bench_rulegen(c: &mut Criterion) {
    let mut g = c.benchmark_group("rulegen");
    for n in [16u32, 32, 64] {
        let t = chorded_ring(n);
        g.bench_with_input(BenchmarkId::new("compile_flat", n), &t, |b, t| {
            b.iter(|| ruleplane::compile(t, None, None).unwrap())
        });
        let p = tabroute::DomainPartition::random(&t, 4, 1).unwrap();
        g.bench_with_input(BenchmarkId::new("compile_hier", n), &t, |b, t| {
            b.iter(|| ruleplane::compile(t, Some(&p), None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_rulegen);
criterion_main!(benches);
