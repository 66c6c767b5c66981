// SPDX-License-Identifier: Apache-2.0

//! Failure-carrying-packet semantics: per-switch local link state, the
//! ingress fail-vector union, and the follow-or-recompute routing decision.
//!
//! A switch knows only its own adjacent links; everything else a packet
//! learns travels in its fail vector, which is monotone nondecreasing along
//! any trace under static failures.

use crate::bits::BitVec;
use crate::headers::PacketHeader;
use crate::topology::{Direction, LinkId, SwitchId, Topology};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FcpError {
    #[error("fail vector width {header} does not match local state width {local}")]
    WidthMismatch { header: u32, local: u32 },
    #[error("link {0}-{1} is not adjacent to switch {2}")]
    NotAdjacent(SwitchId, SwitchId, SwitchId),
}

/// Failure state of the links touching one switch, in full topology width
/// but with bits restricted to adjacent directed link ids.
#[derive(Clone, Debug)]
pub struct LocalLinkState {
    switch: SwitchId,
    adjacent: BitVec,
    failed: BitVec,
}

impl LocalLinkState {
    pub fn new(t: &Topology, s: SwitchId) -> LocalLinkState {
        let mut adjacent = t.edge_mask(s, Direction::Outgoing);
        adjacent.or_assign(&t.edge_mask(s, Direction::Incoming));
        LocalLinkState { switch: s, adjacent, failed: BitVec::new(t.width()) }
    }

    pub fn switch(&self) -> SwitchId {
        self.switch
    }

    pub fn failed(&self) -> &BitVec {
        &self.failed
    }

    /// Mark/unmark both directions of the adjacent physical link a-b.
    pub fn set_link(&mut self, t: &Topology, a: SwitchId, b: SwitchId, up: bool) -> Result<(), FcpError> {
        if a != self.switch && b != self.switch {
            return Err(FcpError::NotAdjacent(a, b, self.switch));
        }
        let (f, r) = t
            .link_pair(a, b)
            .ok_or(FcpError::NotAdjacent(a, b, self.switch))?;
        for l in [f, r] {
            debug_assert!(self.adjacent.get(l.0), "link bit adjacent to switch");
            if up {
                self.failed.clear(l.0);
            } else {
                self.failed.set(l.0);
            }
        }
        Ok(())
    }

    pub fn is_failed(&self, l: LinkId) -> bool {
        self.failed.get(l.0)
    }
}

/// Ingress hook: the packet learns every locally-failed link (both
/// directions). Idempotent union.
pub fn ingress_fcp(h: &mut PacketHeader, local: &LocalLinkState) -> Result<(), FcpError> {
    if h.fail.width() != local.failed.width() {
        return Err(FcpError::WidthMismatch {
            header: h.fail.width(),
            local: local.failed.width(),
        });
    }
    h.fail.or_assign(&local.failed);
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RouteDecision {
    FollowPath(SwitchId),
    Recompute,
    Deliver,
}

fn chain_done(h: &PacketHeader) -> bool {
    h.policy.chain_cursor as usize >= h.policy.chain.len()
}

/// Decide what the switch does with an arrived packet: deliver, follow the
/// embedded source route, or divert into the traversal tables. The decision
/// never drops — only traversal exhaustion proves unreachability.
pub fn route_decision(t: &Topology, h: &PacketHeader, local: &LocalLinkState) -> RouteDecision {
    let here = local.switch();
    if here == h.final_dst && chain_done(h) {
        return RouteDecision::Deliver;
    }
    match h.path.get(h.path_cursor as usize) {
        Some(next) => match t.directed_link(here, next) {
            Some(l) if !local.is_failed(l) => RouteDecision::FollowPath(next),
            _ => RouteDecision::Recompute,
        },
        None => RouteDecision::Recompute,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    #[test]
    fn ingress_union_is_idempotent() {
        let t = diamond();
        let mut local = LocalLinkState::new(&t, SwitchId(2));
        local.set_link(&t, SwitchId(2), SwitchId(4), false).unwrap();
        let mut h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), BitVec::new(t.width()), 8);
        ingress_fcp(&mut h, &local).unwrap();
        // link (2,4) has directed ids 5 and 6
        assert_eq!(h.fail.ones().collect::<Vec<_>>(), vec![5, 6]);
        let snapshot = h.fail.clone();
        ingress_fcp(&mut h, &local).unwrap();
        assert_eq!(h.fail, snapshot);
    }

    #[test]
    fn ingress_rejects_width_mismatch() {
        let t = diamond();
        let local = LocalLinkState::new(&t, SwitchId(1));
        let mut h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), BitVec::new(t.width()), 8);
        h.fail = BitVec::new(4);
        assert_eq!(
            ingress_fcp(&mut h, &local),
            Err(FcpError::WidthMismatch { header: 4, local: 8 })
        );
    }

    #[test]
    fn decision_branches() {
        let t = diamond();
        let mut h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), BitVec::new(t.width()), 8);
        h.path.set_hop(1, SwitchId(2));
        h.path.set_hop(2, SwitchId(4));

        let local1 = LocalLinkState::new(&t, SwitchId(1));
        assert_eq!(route_decision(&t, &h, &local1), RouteDecision::FollowPath(SwitchId(2)));

        // next hop's local link failed → divert to recompute
        let mut local1f = LocalLinkState::new(&t, SwitchId(1));
        local1f.set_link(&t, SwitchId(1), SwitchId(2), false).unwrap();
        assert_eq!(route_decision(&t, &h, &local1f), RouteDecision::Recompute);

        // path exhausted at a non-destination switch
        let mut h2 = h.clone();
        h2.path_cursor = 2;
        h2.curr = SwitchId(2);
        let local2 = LocalLinkState::new(&t, SwitchId(2));
        assert_eq!(route_decision(&t, &h2, &local2), RouteDecision::Recompute);

        // at the destination
        let local4 = LocalLinkState::new(&t, SwitchId(4));
        assert_eq!(route_decision(&t, &h, &local4), RouteDecision::Deliver);

        // stale path: next hop not a neighbor of this switch
        let mut h3 = h.clone();
        h3.path_cursor = 1; // next hop 4, but we're at switch 1
        assert_eq!(route_decision(&t, &h3, &local1), RouteDecision::Recompute);
    }

    #[test]
    fn pending_chain_blocks_delivery() {
        let t = diamond();
        let mut h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), BitVec::new(t.width()), 8);
        h.policy.chain = vec![vec![SwitchId(3)]];
        let local4 = LocalLinkState::new(&t, SwitchId(4));
        assert_eq!(route_decision(&t, &h, &local4), RouteDecision::Recompute);
        h.policy.chain_cursor = 1;
        assert_eq!(route_decision(&t, &h, &local4), RouteDecision::Deliver);
    }
}
