// SPDX-License-Identifier: Apache-2.0

//! Exhaustive delivery sweep for depth-bounded traversal under truncated
//! source routes.
//!
//! Truncated routes force downstream recomputation, and a recompute cycle
//! (packet orbiting a set of switches forever) shows up as a hop-limit drop
//! for a reachable destination. This tool hunts such orbits much harder than
//! the acceptance suite: for each topology it walks every (src, dst) pair
//! under the empty failure set, every single- and double-link failure set,
//! and a seeded sample of triple-link failure sets, comparing delivery
//! against graph reachability.
//!
//! Usage: delivery_sweep <topology.graphml> [triple-samples] [seed]

use std::collections::VecDeque;
use std::process::ExitCode;
use std::sync::Arc;

use tabroute::ruleplane::compile;
use tabroute::simnet::{DEFAULT_PATH_CAP, DEFAULT_STAGES};
use tabroute::topology::parse_graphml;
use tabroute::{build_network, InjectSpec, SwitchId, Topology, TraversalMode};

fn reachable(t: &Topology, src: SwitchId, down: &[(SwitchId, SwitchId)]) -> Vec<bool> {
    let max_id = t.switches().iter().map(|s| s.0).max().unwrap_or(0) as usize;
    let mut seen = vec![false; max_id + 1];
    let mut q = VecDeque::new();
    seen[src.0 as usize] = true;
    q.push_back(src);
    while let Some(u) = q.pop_front() {
        for (_, v) in t.out_links(u) {
            let cut = down
                .iter()
                .any(|(a, b)| (*a == u && *b == *v) || (*a == *v && *b == u));
            if !cut && !seen[v.0 as usize] {
                seen[v.0 as usize] = true;
                q.push_back(*v);
            }
        }
    }
    seen
}

struct Sweep {
    net: tabroute::Network,
    topo: Arc<Topology>,
    cases: u64,
    bad: u64,
}

impl Sweep {
    fn run_set(&mut self, down: &[(SwitchId, SwitchId)]) {
        for (a, b) in down {
            self.net.set_link(*a, *b, false).expect("link exists");
        }
        let switches: Vec<SwitchId> = self.topo.switches().to_vec();
        for &src in &switches {
            let seen = reachable(&self.topo, src, down);
            for &dst in &switches {
                if src == dst {
                    continue;
                }
                self.cases += 1;
                let spec = InjectSpec::new(src, dst, TraversalMode::Iddfs);
                let trace = self.net.run_packet(&spec).expect("run");
                if trace.delivered != seen[dst.0 as usize] {
                    self.bad += 1;
                    if self.bad <= 10 {
                        eprintln!(
                            "MISMATCH src={} dst={} down={:?} delivered={} reachable={}",
                            src.0,
                            dst.0,
                            down.iter().map(|(a, b)| (a.0, b.0)).collect::<Vec<_>>(),
                            trace.delivered,
                            seen[dst.0 as usize]
                        );
                    }
                }
            }
        }
        for (a, b) in down {
            self.net.set_link(*a, *b, true).expect("link exists");
        }
    }
}

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let path = args.next().expect("usage: delivery_sweep <topology> [triples] [seed]");
    let triples: u64 = args.next().map(|s| s.parse().expect("triples")).unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);

    let data = std::fs::read_to_string(&path).expect("read topology");
    let name = path.rsplit('/').next().unwrap_or(&path).trim_end_matches(".graphml");
    let topo = Arc::new(parse_graphml(name, &data).expect("parse topology"));
    let rules = Arc::new(compile(&topo, None, None).expect("compile"));
    let net = build_network(Arc::clone(&topo), rules, DEFAULT_STAGES, DEFAULT_PATH_CAP)
        .expect("network");

    let links: Vec<(SwitchId, SwitchId)> = topo.bidirectional_links().collect();
    let n = links.len();
    let mut sweep = Sweep { net, topo: Arc::clone(&topo), cases: 0, bad: 0 };

    sweep.run_set(&[]);
    eprintln!("k=0 done: cases={} bad={}", sweep.cases, sweep.bad);
    for i in 0..n {
        sweep.run_set(&[links[i]]);
    }
    eprintln!("k=1 done: cases={} bad={}", sweep.cases, sweep.bad);
    for i in 0..n {
        for j in (i + 1)..n {
            sweep.run_set(&[links[i], links[j]]);
        }
    }
    eprintln!("k=2 done: cases={} bad={}", sweep.cases, sweep.bad);

    // seeded triple sample: splitmix64 stream, indices mod n, dedup per draw
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut drawn = 0;
    while drawn < triples {
        let a = (next() % n as u64) as usize;
        let b = (next() % n as u64) as usize;
        let c = (next() % n as u64) as usize;
        if a == b || b == c || a == c {
            continue;
        }
        sweep.run_set(&[links[a], links[b], links[c]]);
        drawn += 1;
    }
    eprintln!("k=3 sample done: cases={} bad={}", sweep.cases, sweep.bad);

    println!("{} cases={} bad={}", name, sweep.cases, sweep.bad);
    if sweep.bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
