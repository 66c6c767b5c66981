// SPDX-License-Identifier: Apache-2.0

//! Reference answers computed the boring way: queue-based breadth-first
//! search over the failed-link-filtered graph, with exhaustive replica
//! enumeration for chain policies. Shares nothing with the table engine, so
//! agreement between the two is meaningful.

use std::collections::{BTreeMap, VecDeque};

use crate::bits::BitVec;
use crate::topology::{SwitchId, Topology};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub reachable: bool,
    /// Fewest edges from src to dst over active links.
    pub shortest_len: Option<usize>,
    /// One shortest route as a node list (src..=dst); empty if unreachable.
    pub a_shortest_path: Vec<SwitchId>,
}

/// BFS over links not present in `failed` (directed ids; both directions of
/// a dead link are expected to be set).
pub fn shortest_active_path(
    t: &Topology,
    src: SwitchId,
    dst: SwitchId,
    failed: &BitVec,
) -> OracleResult {
    if src == dst {
        return OracleResult {
            reachable: true,
            shortest_len: Some(0),
            a_shortest_path: vec![src],
        };
    }
    let mut prev: BTreeMap<SwitchId, SwitchId> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(src);
    prev.insert(src, src);
    while let Some(u) = queue.pop_front() {
        for (l, v) in t.out_links(u) {
            if failed.get(l.0) || prev.contains_key(v) {
                continue;
            }
            prev.insert(*v, u);
            if *v == dst {
                let mut path = vec![dst];
                let mut c = dst;
                while c != src {
                    c = prev[&c];
                    path.push(c);
                }
                path.reverse();
                return OracleResult {
                    reachable: true,
                    shortest_len: Some(path.len() - 1),
                    a_shortest_path: path,
                };
            }
            queue.push_back(*v);
        }
    }
    OracleResult { reachable: false, shortest_len: None, a_shortest_path: vec![] }
}

pub fn reachable(t: &Topology, src: SwitchId, dst: SwitchId, failed: &BitVec) -> bool {
    shortest_active_path(t, src, dst, failed).reachable
}

/// Shortest length of any route that visits one member of each chain set in
/// order before the destination. Exhaustive over replica choices; legs may
/// reuse switches, like the dataplane routes they judge.
pub fn compliant_shortest_len(
    t: &Topology,
    src: SwitchId,
    dst: SwitchId,
    chain: &[Vec<SwitchId>],
    failed: &BitVec,
) -> Option<usize> {
    fn rec(
        t: &Topology,
        at: SwitchId,
        rest: &[Vec<SwitchId>],
        dst: SwitchId,
        failed: &BitVec,
    ) -> Option<usize> {
        match rest.split_first() {
            None => shortest_active_path(t, at, dst, failed).shortest_len,
            Some((set, tail)) => set
                .iter()
                .filter_map(|m| {
                    let leg = shortest_active_path(t, at, *m, failed).shortest_len?;
                    let on = rec(t, *m, tail, dst, failed)?;
                    Some(leg + on)
                })
                .min(),
        }
    }
    rec(t, src, chain, dst, failed)
}

/// Does a hop sequence satisfy the chain order before its final arrival?
pub fn chain_compliant(hops: &[SwitchId], chain: &[Vec<SwitchId>]) -> bool {
    let mut idx = 0;
    for h in hops {
        if idx < chain.len() && chain[idx].contains(h) {
            idx += 1;
        }
    }
    idx == chain.len()
}

/// Route stretch: edges walked over the oracle's shortest length.
pub fn stretch(walked_edges: usize, shortest_len: usize) -> f64 {
    debug_assert!(shortest_len > 0);
    walked_edges as f64 / shortest_len as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    fn s(v: &[u32]) -> Vec<SwitchId> {
        v.iter().map(|x| SwitchId(*x)).collect()
    }

    #[test]
    fn shortest_paths_and_failures() {
        let t = diamond();
        let none = BitVec::new(t.width());
        let r = shortest_active_path(&t, SwitchId(1), SwitchId(4), &none);
        assert_eq!(r.shortest_len, Some(2));
        assert_eq!(r.a_shortest_path, s(&[1, 2, 4]));

        let f = t.fail_mask(&[(SwitchId(2), SwitchId(4))]).unwrap();
        let r = shortest_active_path(&t, SwitchId(1), SwitchId(4), &f);
        assert_eq!(r.shortest_len, Some(2));
        assert_eq!(r.a_shortest_path, s(&[1, 3, 4]));

        let f2 = t
            .fail_mask(&[(SwitchId(2), SwitchId(4)), (SwitchId(3), SwitchId(4))])
            .unwrap();
        let r = shortest_active_path(&t, SwitchId(1), SwitchId(4), &f2);
        assert!(!r.reachable);
        assert!(r.a_shortest_path.is_empty());

        let r = shortest_active_path(&t, SwitchId(3), SwitchId(3), &none);
        assert_eq!(r.shortest_len, Some(0));
        assert_eq!(r.a_shortest_path, s(&[3]));
    }

    #[test]
    fn compliant_routes_take_the_detour() {
        let t = diamond();
        let none = BitVec::new(t.width());
        // via 3: 1→3 (1) + 3→4 (1)
        assert_eq!(
            compliant_shortest_len(&t, SwitchId(1), SwitchId(4), &[vec![SwitchId(3)]], &none),
            Some(2)
        );
        // replica set picks the cheaper member
        assert_eq!(
            compliant_shortest_len(
                &t,
                SwitchId(1),
                SwitchId(4),
                &[vec![SwitchId(2), SwitchId(3)]],
                &none
            ),
            Some(2)
        );
        // chain member unreachable ⇒ no compliant route
        let cut = t
            .fail_mask(&[(SwitchId(1), SwitchId(3)), (SwitchId(3), SwitchId(4))])
            .unwrap();
        assert_eq!(
            compliant_shortest_len(&t, SwitchId(1), SwitchId(4), &[vec![SwitchId(3)]], &cut),
            None
        );
        // backtracking through a set member: chain [[4]] from 1 to 1
        assert_eq!(
            compliant_shortest_len(&t, SwitchId(1), SwitchId(1), &[vec![SwitchId(4)]], &none),
            Some(4)
        );
    }

    #[test]
    fn compliance_check_is_order_sensitive() {
        let chain = vec![s(&[2]), s(&[3])];
        assert!(chain_compliant(&s(&[1, 2, 3, 4]), &chain));
        assert!(!chain_compliant(&s(&[1, 3, 2, 4]), &chain));
        assert!(chain_compliant(&s(&[1, 3, 2, 3, 4]), &chain));
        assert!(chain_compliant(&s(&[1, 4]), &[]));
    }
}
