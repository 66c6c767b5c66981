// SPDX-License-Identifier: Apache-2.0

//! Flow policies: middlebox chains, per-switch next-hop preferences, and
//! weighted multipath splits. Policies compile into header state (carried by
//! every packet of the flow) plus extra table rules, so enforcement needs no
//! per-flow switch state.

use serde::{Deserialize, Serialize};

use crate::headers::{PolicyBlock, TraversalMode, WcmpEntry, MAX_DST};
use crate::ruleplane::{PolicyCompile, PrefSteer};
use crate::topology::{SwitchId, Topology};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("policy requires iddfs traversal, flow uses {0}")]
    IncompatibleTraversal(TraversalMode),
    #[error("switch {0} is not in the topology")]
    UnknownSwitch(SwitchId),
    #[error("switch {1} is not a neighbor of switch {0}")]
    NotNeighbor(SwitchId, SwitchId),
    #[error("switch {0} has degree {1}, preference encoding supports at most 4")]
    DegreeTooHigh(SwitchId, usize),
    #[error("wcmp weights at switch {0} must all be positive")]
    ZeroWeightSum(SwitchId),
    #[error("bad policy spec: {0}")]
    BadSpec(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FlowKey {
    pub src: SwitchId,
    pub dst: SwitchId,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PolicyKind {
    /// Visit one switch from each set, in order, before the destination.
    Mbox { chain: Vec<Vec<SwitchId>> },
    /// Explore `prefer` first when leaving `switch`.
    Pref { switch: SwitchId, prefer: SwitchId },
    /// Hash flows across `next_hops` of `switch` in `weights` proportion.
    Wcmp {
        switch: SwitchId,
        next_hops: Vec<SwitchId>,
        weights: Vec<u32>,
    },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub flow: FlowKey,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

/// Parse a policy file: a JSON array of entries.
pub fn parse_policies(json: &str) -> Result<Vec<PolicyEntry>, PolicyError> {
    serde_json::from_str(json).map_err(|e| PolicyError::BadSpec(e.to_string()))
}

/// 2-bit preference code for taking `n` out of `s`. Neighbors rank by
/// ascending link id; rank 1 is the tie-break winner anyway so it gets the
/// wildcard code 0. Degree ≤ 3 leaves code 01 unused, keeping every non-zero
/// code distinguishable from the wildcard under LPM.
pub fn pref_code(t: &Topology, s: SwitchId, n: SwitchId) -> Result<u8, PolicyError> {
    if !t.contains(s) {
        return Err(PolicyError::UnknownSwitch(s));
    }
    let deg = t.degree(s);
    if deg > 4 {
        return Err(PolicyError::DegreeTooHigh(s, deg));
    }
    let rank = t
        .out_links(s)
        .iter()
        .position(|(_, to)| *to == n)
        .ok_or(PolicyError::NotNeighbor(s, n))?;
    let table: &[u8] = if deg <= 3 { &[0b00, 0b10, 0b11] } else { &[0b00, 0b01, 0b10, 0b11] };
    Ok(table[rank])
}

/// Everything a single flow's policies produce: the header block the packet
/// carries and the extra rule material the tables need.
#[derive(Clone, Debug, Default)]
pub struct FlowPolicy {
    pub block: Option<PolicyBlock>,
    pub compile: PolicyCompile,
}

fn check_chain(t: &Topology, chain: &[Vec<SwitchId>]) -> Result<(), PolicyError> {
    if chain.is_empty() || chain.len() > MAX_DST {
        return Err(PolicyError::BadSpec(format!(
            "chain must have 1..={} replica sets, got {}",
            MAX_DST,
            chain.len()
        )));
    }
    for set in chain {
        if set.is_empty() || set.len() > MAX_DST {
            return Err(PolicyError::BadSpec(format!(
                "replica set must have 1..={} members, got {}",
                MAX_DST,
                set.len()
            )));
        }
        for s in set {
            if !t.contains(*s) {
                return Err(PolicyError::UnknownSwitch(*s));
            }
        }
    }
    Ok(())
}

/// Compile the entries that apply to flow (src, dst) under `mode`.
pub fn compile_for_flow(
    t: &Topology,
    mode: TraversalMode,
    src: SwitchId,
    dst: SwitchId,
    entries: &[PolicyEntry],
) -> Result<FlowPolicy, PolicyError> {
    let mut block = PolicyBlock::empty(mode);
    let mut compile = PolicyCompile::default();
    let mut any = false;
    for e in entries {
        if e.flow.src != src || e.flow.dst != dst {
            continue;
        }
        any = true;
        match &e.kind {
            PolicyKind::Mbox { chain } => {
                if !block.chain.is_empty() {
                    return Err(PolicyError::BadSpec("one chain per flow".into()));
                }
                check_chain(t, chain)?;
                block.chain = chain.clone();
            }
            PolicyKind::Pref { switch, prefer } => {
                if mode != TraversalMode::Iddfs {
                    return Err(PolicyError::IncompatibleTraversal(mode));
                }
                let code = pref_code(t, *switch, *prefer)?;
                if block.prefs.iter().any(|(s, _)| s == switch) {
                    return Err(PolicyError::BadSpec(format!(
                        "duplicate preference for switch {switch}"
                    )));
                }
                block.prefs.push((*switch, code));
                if code != 0 {
                    compile.steer.push(PrefSteer { switch: *switch, neighbor: *prefer, code });
                }
            }
            PolicyKind::Wcmp { switch, next_hops, weights } => {
                if mode != TraversalMode::Iddfs {
                    return Err(PolicyError::IncompatibleTraversal(mode));
                }
                if next_hops.is_empty()
                    || next_hops.len() > MAX_DST
                    || next_hops.len() != weights.len()
                {
                    return Err(PolicyError::BadSpec(format!(
                        "wcmp at switch {switch} needs 1..={} next hops and matching weights",
                        MAX_DST
                    )));
                }
                if weights.iter().any(|w| *w == 0) {
                    return Err(PolicyError::ZeroWeightSum(*switch));
                }
                if block.wcmp.iter().any(|w| w.switch == *switch) {
                    return Err(PolicyError::BadSpec(format!(
                        "duplicate wcmp entry for switch {switch}"
                    )));
                }
                let mut codes = Vec::with_capacity(next_hops.len());
                for n in next_hops {
                    let code = pref_code(t, *switch, *n)?;
                    codes.push(code);
                    if code != 0 {
                        compile.steer.push(PrefSteer { switch: *switch, neighbor: *n, code });
                    }
                }
                let entry = WcmpEntry {
                    switch: *switch,
                    next_hops: next_hops.clone(),
                    weights: weights.clone(),
                };
                block.wcmp.push(entry.clone());
                compile.wcmp.push(entry);
                compile.wcmp_codes.push(codes);
            }
        }
    }
    Ok(FlowPolicy { block: if any { Some(block) } else { None }, compile })
}

/// Union of rule material across every flow in a policy file, for table
/// generation (tables are shared; header blocks stay per-flow).
pub fn compile_all(
    t: &Topology,
    mode: TraversalMode,
    entries: &[PolicyEntry],
) -> Result<PolicyCompile, PolicyError> {
    let mut all = PolicyCompile::default();
    let mut seen = std::collections::BTreeSet::new();
    for e in entries {
        let key = (e.flow.src, e.flow.dst);
        if !seen.insert(key) {
            continue;
        }
        let fp = compile_for_flow(t, mode, key.0, key.1, entries)?;
        all.steer.extend(fp.compile.steer);
        all.wcmp.extend(fp.compile.wcmp);
        all.wcmp_codes.extend(fp.compile.wcmp_codes);
    }
    all.steer.sort_by_key(|s| (s.switch, s.neighbor, s.code));
    all.steer.dedup();
    Ok(all)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Flow identity hash, fixed at injection and carried in the header so every
/// switch resolves the same wcmp bucket for the flow.
pub fn flow_hash32(src: SwitchId, dst: SwitchId, flow_id: u32) -> u32 {
    let z = ((src.0 as u64) << 48)
        ^ ((dst.0 as u64) << 32)
        ^ (flow_id as u64)
        ^ 0x9e37_79b9_7f4a_7c15;
    (mix64(z) >> 16) as u32
}

/// 16-bit table hash used by wcmp range matching.
pub fn flow_hash(dst: SwitchId, flow_id: u32) -> u16 {
    let m = mix64(((dst.0 as u64) << 32) | flow_id as u64);
    ((m ^ (m >> 16) ^ (m >> 32) ^ (m >> 48)) & 0xffff) as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star4() -> Topology {
        Topology::from_links("star4", &[(1, 2), (1, 3), (1, 4)]).unwrap()
    }

    #[test]
    fn pref_codes_rank_by_link_id() {
        let t = star4();
        // switch 1 neighbors by link id: 2, 3, 4
        assert_eq!(pref_code(&t, SwitchId(1), SwitchId(2)), Ok(0b00));
        assert_eq!(pref_code(&t, SwitchId(1), SwitchId(3)), Ok(0b10));
        assert_eq!(pref_code(&t, SwitchId(1), SwitchId(4)), Ok(0b11));
        assert_eq!(
            pref_code(&t, SwitchId(2), SwitchId(4)),
            Err(PolicyError::NotNeighbor(SwitchId(2), SwitchId(4)))
        );
    }

    #[test]
    fn degree_four_uses_dense_codes() {
        let t = Topology::from_links("star5", &[(1, 2), (1, 3), (1, 4), (1, 5)]).unwrap();
        assert_eq!(pref_code(&t, SwitchId(1), SwitchId(3)), Ok(0b01));
        let t6 =
            Topology::from_links("star6", &[(1, 2), (1, 3), (1, 4), (1, 5), (1, 6)]).unwrap();
        assert_eq!(
            pref_code(&t6, SwitchId(1), SwitchId(2)),
            Err(PolicyError::DegreeTooHigh(SwitchId(1), 5))
        );
    }

    #[test]
    fn parse_and_compile_roundtrip() {
        let t = star4();
        let json = r#"[
            {"type":"mbox","flow":{"src":2,"dst":4},"chain":[[3]]},
            {"type":"pref","flow":{"src":2,"dst":4},"switch":1,"prefer":3},
            {"type":"wcmp","flow":{"src":2,"dst":4},"switch":1,"next_hops":[3,4],"weights":[2,1]}
        ]"#;
        let entries = parse_policies(json).unwrap();
        assert_eq!(entries.len(), 3);
        let fp =
            compile_for_flow(&t, TraversalMode::Iddfs, SwitchId(2), SwitchId(4), &entries).unwrap();
        let block = fp.block.unwrap();
        assert_eq!(block.chain, vec![vec![SwitchId(3)]]);
        assert_eq!(block.prefs, vec![(SwitchId(1), 0b10)]);
        assert_eq!(block.wcmp.len(), 1);
        // steer rows: pref 3→10 plus wcmp codes 3→10 (dup removed later), 4→11
        assert!(fp.compile.steer.iter().any(|s| s.code == 0b11));
        assert_eq!(fp.compile.wcmp_codes, vec![vec![0b10, 0b11]]);

        // unrelated flow compiles to nothing
        let none =
            compile_for_flow(&t, TraversalMode::Iddfs, SwitchId(3), SwitchId(4), &entries).unwrap();
        assert!(none.block.is_none());
    }

    #[test]
    fn bfs_rejects_pref_and_wcmp() {
        let t = star4();
        let entries = vec![PolicyEntry {
            flow: FlowKey { src: SwitchId(2), dst: SwitchId(4) },
            kind: PolicyKind::Pref { switch: SwitchId(1), prefer: SwitchId(3) },
        }];
        assert_eq!(
            compile_for_flow(&t, TraversalMode::Bfs, SwitchId(2), SwitchId(4), &entries)
                .unwrap_err(),
            PolicyError::IncompatibleTraversal(TraversalMode::Bfs)
        );
    }

    #[test]
    fn zero_weight_rejected() {
        let t = star4();
        let entries = vec![PolicyEntry {
            flow: FlowKey { src: SwitchId(2), dst: SwitchId(4) },
            kind: PolicyKind::Wcmp {
                switch: SwitchId(1),
                next_hops: vec![SwitchId(3), SwitchId(4)],
                weights: vec![1, 0],
            },
        }];
        assert_eq!(
            compile_for_flow(&t, TraversalMode::Iddfs, SwitchId(2), SwitchId(4), &entries)
                .unwrap_err(),
            PolicyError::ZeroWeightSum(SwitchId(1))
        );
    }

    #[test]
    fn hashes_are_stable_and_spread() {
        let a = flow_hash32(SwitchId(1), SwitchId(4), 7);
        assert_eq!(a, flow_hash32(SwitchId(1), SwitchId(4), 7));
        assert_ne!(a, flow_hash32(SwitchId(2), SwitchId(4), 7));
        // crude spread check over 4096 flows: all four quartiles populated
        let mut buckets = [0u32; 4];
        for f in 0..4096u32 {
            let h = flow_hash(SwitchId(4), flow_hash32(SwitchId(1), SwitchId(4), f));
            buckets[(h >> 14) as usize] += 1;
        }
        for b in buckets {
            assert!(b > 800, "quartile underpopulated: {buckets:?}");
        }
    }
}
