// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmark targets.

use tabroute::Topology;

/// A ring of `n` switches with chords every 4, big enough that rule
/// generation and traversal both do real work.
pub fn chorded_ring(n: u32) -> Topology {
    let mut pairs = Vec::new();
    for i in 1..=n {
        pairs.push((i, i % n + 1));
        if i % 4 == 1 {
            pairs.push((i, (i + n / 2 - 1) % n + 1));
        }
    }
    Topology::from_links("chorded_ring", &pairs).expect("valid bench topology")
}
