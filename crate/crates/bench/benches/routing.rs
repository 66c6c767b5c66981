// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tabroute::simnet::{self, InjectSpec};
use tabroute::{ruleplane, SwitchId, TraversalMode};
use tabroute_bench::chorded_ring;

fn bench_routing(c: &mut Criterion) {
    let mut g = c.benchmark_group("routing");
    for n in [16u32, 64] {
        let t = Arc::new(chorded_ring(n));
        let rules = Arc::new(ruleplane::compile(&t, None, None).unwrap());
        let mut net = simnet::build_network(
            Arc::clone(&t),
            rules,
            simnet::DEFAULT_STAGES,
            simnet::DEFAULT_PATH_CAP,
        )
        .unwrap();
        // one failure so routes actually divert
        net.set_link(SwitchId(1), SwitchId(2), false).unwrap();
        for mode in [TraversalMode::Bfs, TraversalMode::Iddfs] {
            let label = format!("{}_{n}", mode.name());
            g.bench_with_input(BenchmarkId::new("cross_ring", label), &net, |b, net| {
                b.iter(|| {
                    net.run_packet(&InjectSpec::new(SwitchId(1), SwitchId(n / 2), mode)).unwrap()
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_routing);
criterion_main!(benches);
