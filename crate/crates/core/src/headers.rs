// SPDX-License-Identifier: Apache-2.0

//! Packet header layout and wire codec.
//!
//! Everything a traversal needs lives in the header: the graph-search scratch
//! state (stacks, visited vector, depth counters), the failure vector, the
//! computed source route and the policy block. The wire format is
//! self-describing and versioned: magic (2 bytes), version (1), topology
//! hash (4), then fixed-order fields with bit vectors padded to whole bytes.
//! Stacks are carried only across recirculations, never between switches;
//! `clear_traversal_scratch` models the deparser dropping them on egress.

use crate::bits::BitVec;
use crate::topology::{Direction, SwitchId, Topology};

pub const MAGIC: [u8; 2] = [0x54, 0x42];
pub const VERSION: u8 = 1;
/// Initial IDDFS depth bound; doubled by increase_length.
pub const INITIAL_MAX_LEN: u16 = 4;
pub const MAX_DST: usize = 4;
pub const DOMAIN_PATH_CAP: u8 = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HeaderError {
    #[error("truncated header: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt header: {0}")]
    Corrupt(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraversalMode {
    Bfs,
    Iddfs,
}

impl TraversalMode {
    pub fn name(&self) -> &'static str {
        match self {
            TraversalMode::Bfs => "bfs",
            TraversalMode::Iddfs => "iddfs",
        }
    }
}

impl std::str::FromStr for TraversalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bfs" => Ok(TraversalMode::Bfs),
            "iddfs" => Ok(TraversalMode::Iddfs),
            other => Err(format!("unknown traversal mode {:?}", other)),
        }
    }
}

impl std::fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A source route: the hop sequence after the computing switch, capped at a
/// configurable number of hops (default 8). Writes beyond the cap are
/// dropped; the switch at the last stored hop recomputes the remainder.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Path {
    cap: u8,
    hops: Vec<SwitchId>,
}

impl Path {
    pub fn new(cap: u8) -> Self {
        Path { cap, hops: Vec::new() }
    }

    pub fn cap(&self) -> u8 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn hops(&self) -> &[SwitchId] {
        &self.hops
    }

    pub fn get(&self, idx: usize) -> Option<SwitchId> {
        self.hops.get(idx).copied()
    }

    /// Write hop slot `idx` (1-based), truncating anything beyond it first.
    /// Out-of-cap writes are silently dropped, mirroring a fixed-width field.
    pub fn set_hop(&mut self, idx: usize, n: SwitchId) {
        if idx == 0 || idx > self.cap as usize {
            return;
        }
        self.hops.truncate(idx - 1);
        if self.hops.len() == idx - 1 {
            self.hops.push(n);
        }
    }

    /// Erase hop slot `idx` (1-based) and everything after it.
    pub fn clear_from(&mut self, idx: usize) {
        if idx == 0 || idx > self.cap as usize {
            return;
        }
        self.hops.truncate(idx - 1);
    }

    pub fn truncate(&mut self, len: usize) {
        self.hops.truncate(len);
    }

    pub fn extended(&self, n: SwitchId) -> Path {
        let mut p = self.clone();
        if p.hops.len() < p.cap as usize {
            p.hops.push(n);
        }
        p
    }
}

/// One BFS stack entry: a discovered switch and the route that reaches it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StackEntry {
    pub switch: SwitchId,
    pub path: Path,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct WcmpEntry {
    pub switch: SwitchId,
    pub next_hops: Vec<SwitchId>,
    pub weights: Vec<u32>,
}

/// Policy state carried by the packet.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PolicyBlock {
    pub mode: TraversalMode,
    /// Replica sets to visit in order, each with up to four members.
    pub chain: Vec<Vec<SwitchId>>,
    /// Physical progress: sets already visited by the packet itself.
    pub chain_cursor: u8,
    /// Computation progress: sets already resolved by the running traversal.
    pub compute_cursor: u8,
    /// Static per-switch 2-bit next-hop preferences.
    pub prefs: Vec<(SwitchId, u8)>,
    /// Weighted load-balancing entries (hash-based next-hop selection).
    pub wcmp: Vec<WcmpEntry>,
}

impl PolicyBlock {
    pub fn empty(mode: TraversalMode) -> Self {
        PolicyBlock {
            mode,
            chain: Vec::new(),
            chain_cursor: 0,
            compute_cursor: 0,
            prefs: Vec::new(),
            wcmp: Vec::new(),
        }
    }

    pub fn is_plain(&self) -> bool {
        self.chain.is_empty() && self.prefs.is_empty() && self.wcmp.is_empty()
    }

    pub fn static_pref(&self, s: SwitchId) -> Option<u8> {
        self.prefs.iter().find(|(sw, _)| *sw == s).map(|(_, p)| *p)
    }

    pub fn wcmp_for(&self, s: SwitchId) -> Option<&WcmpEntry> {
        self.wcmp.iter().find(|w| w.switch == s)
    }
}

pub const FLAG_HIERARCHY: u8 = 0b0000_0001;
pub const FLAG_FALLBACK: u8 = 0b0000_0010;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PacketHeader {
    pub topo_hash: u32,
    pub flow_id: u32,
    pub flags: u8,
    pub curr: SwitchId,
    pub final_dst: SwitchId,
    /// Current traversal targets (replica set, virtual switch or final dst).
    pub dst: Vec<SwitchId>,
    /// Source of the running traversal; increase_length resets to it.
    pub traversal_src: SwitchId,
    pub stack_sel: u8,
    pub len: i16,
    pub max_len: u16,
    pub visited: BitVec,
    pub fail: BitVec,
    pub path: Path,
    /// Next hop to take, 0-based index into `path`.
    pub path_cursor: u8,
    /// Path length at the start of the running traversal leg.
    pub path_base: u8,
    pub domain_path: Path,
    /// Domains already entered along `domain_path`.
    pub domain_cursor: u8,
    pub bfs_stacks: [Vec<StackEntry>; 2],
    pub dfs_stack: Vec<SwitchId>,
    pub pref: u8,
    pub policy: PolicyBlock,
}

impl PacketHeader {
    /// Fresh header for a packet injected at `src` toward `dst`, with the
    /// flat traversal initialized: visited = fail | incoming(src).
    pub fn init(
        t: &Topology,
        src: SwitchId,
        dst: SwitchId,
        fail: BitVec,
        path_cap: u8,
    ) -> PacketHeader {
        assert_eq!(fail.width(), t.width(), "fail vector sized to topology");
        let mut h = PacketHeader {
            topo_hash: t.structural_hash(),
            flow_id: 0,
            flags: 0,
            curr: src,
            final_dst: dst,
            dst: vec![dst],
            traversal_src: src,
            stack_sel: 0,
            len: 0,
            max_len: INITIAL_MAX_LEN,
            visited: BitVec::new(t.width()),
            fail,
            path: Path::new(path_cap),
            path_cursor: 0,
            path_base: 0,
            domain_path: Path::new(DOMAIN_PATH_CAP),
            domain_cursor: 0,
            bfs_stacks: [Vec::new(), Vec::new()],
            dfs_stack: Vec::new(),
            pref: 0,
            policy: PolicyBlock::empty(TraversalMode::Iddfs),
        };
        let mut visited = h.fail.clone();
        visited.or_assign(&t.edge_mask(src, Direction::Incoming));
        h.visited = visited;
        h
    }

    pub fn hierarchy(&self) -> bool {
        self.flags & FLAG_HIERARCHY != 0
    }

    pub fn set_hierarchy(&mut self, on: bool) {
        if on {
            self.flags |= FLAG_HIERARCHY;
        } else {
            self.flags &= !FLAG_HIERARCHY;
        }
    }

    pub fn fell_back(&self) -> bool {
        self.flags & FLAG_FALLBACK != 0
    }

    pub fn mark_fallback(&mut self) {
        self.flags |= FLAG_FALLBACK;
    }

    /// Re-initialize the traversal scratch for a new computation rooted at
    /// `src`. `visited` must already include the failure-derived bits and
    /// the incoming mask of `src` for the traversal space in use.
    pub fn begin_traversal(&mut self, src: SwitchId, dst: Vec<SwitchId>, visited: BitVec) {
        assert!(!dst.is_empty() && dst.len() <= MAX_DST);
        self.traversal_src = src;
        self.curr = src;
        self.dst = dst;
        self.visited = visited;
        self.stack_sel = 0;
        self.len = 0;
        self.max_len = INITIAL_MAX_LEN;
        self.bfs_stacks = [Vec::new(), Vec::new()];
        self.dfs_stack = Vec::new();
        self.path_base = self.path.len() as u8;
        self.pref = 0;
    }

    /// Drop per-traversal scratch before an inter-switch hop: stacks travel
    /// only across recirculations.
    pub fn clear_traversal_scratch(&mut self) {
        self.bfs_stacks = [Vec::new(), Vec::new()];
        self.dfs_stack = Vec::new();
        self.visited = BitVec::new(self.visited.width());
        self.stack_sel = 0;
        self.len = 0;
        self.max_len = INITIAL_MAX_LEN;
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_annotated().0
    }

    /// Encode and keep (field, start, end) notes for annotated dumps.
    pub fn encode_annotated(&self) -> (Vec<u8>, Vec<(String, usize, usize)>) {
        let mut w = Writer::default();
        w.bytes("magic", &MAGIC);
        w.u8("version", VERSION);
        w.u32("topo_hash", self.topo_hash);
        w.u32("flow_id", self.flow_id);
        w.u8("flags", self.flags);
        w.u16("curr", self.curr.0 as u16);
        w.u16("final_dst", self.final_dst.0 as u16);
        w.u8("dst_count", self.dst.len() as u8);
        for i in 0..MAX_DST {
            w.u16(
                &format!("dst[{}]", i),
                self.dst.get(i).map(|s| s.0 as u16).unwrap_or(0),
            );
        }
        w.u16("traversal_src", self.traversal_src.0 as u16);
        w.u8("stack_sel", self.stack_sel);
        w.u16("len", self.len as u16);
        w.u16("max_len", self.max_len);
        w.u16("visited_width", self.visited.width() as u16);
        w.bytes("visited", &self.visited.to_bytes());
        w.u16("fail_width", self.fail.width() as u16);
        w.bytes("fail", &self.fail.to_bytes());
        w.path("path", &self.path);
        w.u8("path_cursor", self.path_cursor);
        w.u8("path_base", self.path_base);
        w.path("domain_path", &self.domain_path);
        w.u8("domain_cursor", self.domain_cursor);
        for (i, stack) in self.bfs_stacks.iter().enumerate() {
            w.u16(&format!("bfs_stack[{}].depth", i), stack.len() as u16);
            for (j, e) in stack.iter().enumerate() {
                w.u16(&format!("bfs_stack[{}][{}].switch", i, j), e.switch.0 as u16);
                w.path(&format!("bfs_stack[{}][{}].path", i, j), &e.path);
            }
        }
        w.u16("dfs_stack.depth", self.dfs_stack.len() as u16);
        for (j, s) in self.dfs_stack.iter().enumerate() {
            w.u16(&format!("dfs_stack[{}]", j), s.0 as u16);
        }
        w.u8("pref", self.pref);
        let p = &self.policy;
        w.u8("policy.mode", match p.mode {
            TraversalMode::Bfs => 0,
            TraversalMode::Iddfs => 1,
        });
        w.u8("policy.chain_len", p.chain.len() as u8);
        w.u8("policy.chain_cursor", p.chain_cursor);
        w.u8("policy.compute_cursor", p.compute_cursor);
        for (i, set) in p.chain.iter().enumerate() {
            w.u8(&format!("policy.chain[{}].count", i), set.len() as u8);
            for k in 0..MAX_DST {
                w.u16(
                    &format!("policy.chain[{}][{}]", i, k),
                    set.get(k).map(|s| s.0 as u16).unwrap_or(0),
                );
            }
        }
        w.u8("policy.pref_count", p.prefs.len() as u8);
        for (i, (s, v)) in p.prefs.iter().enumerate() {
            w.u16(&format!("policy.pref[{}].switch", i), s.0 as u16);
            w.u8(&format!("policy.pref[{}].value", i), *v);
        }
        w.u8("policy.wcmp_count", p.wcmp.len() as u8);
        for (i, e) in p.wcmp.iter().enumerate() {
            w.u16(&format!("policy.wcmp[{}].switch", i), e.switch.0 as u16);
            w.u8(&format!("policy.wcmp[{}].hops", i), e.next_hops.len() as u8);
            for k in 0..MAX_DST {
                w.u16(
                    &format!("policy.wcmp[{}].hop[{}]", i, k),
                    e.next_hops.get(k).map(|s| s.0 as u16).unwrap_or(0),
                );
                w.u32(
                    &format!("policy.wcmp[{}].weight[{}]", i, k),
                    e.weights.get(k).copied().unwrap_or(0),
                );
            }
        }
        (w.buf, w.notes)
    }

    pub fn decode(data: &[u8]) -> Result<PacketHeader, HeaderError> {
        let mut r = Reader { data, pos: 0 };
        let magic = r.bytes(2)?;
        if magic != MAGIC {
            return Err(HeaderError::Corrupt("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(HeaderError::VersionMismatch { found: version, expected: VERSION });
        }
        let topo_hash = r.u32()?;
        let flow_id = r.u32()?;
        let flags = r.u8()?;
        let curr = SwitchId(r.u16()? as u32);
        let final_dst = SwitchId(r.u16()? as u32);
        let dst_count = r.u8()? as usize;
        if dst_count == 0 || dst_count > MAX_DST {
            return Err(HeaderError::Corrupt(format!("dst count {}", dst_count)));
        }
        let mut dst = Vec::new();
        for i in 0..MAX_DST {
            let v = r.u16()?;
            if i < dst_count {
                dst.push(SwitchId(v as u32));
            }
        }
        let traversal_src = SwitchId(r.u16()? as u32);
        let stack_sel = r.u8()?;
        if stack_sel > 1 {
            return Err(HeaderError::Corrupt(format!("stack_sel {}", stack_sel)));
        }
        let len = r.u16()? as i16;
        let max_len = r.u16()?;
        let visited = r.bitvec()?;
        let fail = r.bitvec()?;
        let path = r.path()?;
        let path_cursor = r.u8()?;
        let path_base = r.u8()?;
        let domain_path = r.path()?;
        let domain_cursor = r.u8()?;
        let mut bfs_stacks = [Vec::new(), Vec::new()];
        for stack in bfs_stacks.iter_mut() {
            let depth = r.u16()? as usize;
            for _ in 0..depth {
                let switch = SwitchId(r.u16()? as u32);
                let path = r.path()?;
                stack.push(StackEntry { switch, path });
            }
        }
        let dfs_depth = r.u16()? as usize;
        let mut dfs_stack = Vec::new();
        for _ in 0..dfs_depth {
            dfs_stack.push(SwitchId(r.u16()? as u32));
        }
        let pref = r.u8()?;
        let mode = match r.u8()? {
            0 => TraversalMode::Bfs,
            1 => TraversalMode::Iddfs,
            m => return Err(HeaderError::Corrupt(format!("traversal mode {}", m))),
        };
        let chain_len = r.u8()? as usize;
        let chain_cursor = r.u8()?;
        let compute_cursor = r.u8()?;
        let mut chain = Vec::new();
        for _ in 0..chain_len {
            let count = r.u8()? as usize;
            if count == 0 || count > MAX_DST {
                return Err(HeaderError::Corrupt(format!("replica set size {}", count)));
            }
            let mut set = Vec::new();
            for k in 0..MAX_DST {
                let v = r.u16()?;
                if k < count {
                    set.push(SwitchId(v as u32));
                }
            }
            chain.push(set);
        }
        let pref_count = r.u8()? as usize;
        let mut prefs = Vec::new();
        for _ in 0..pref_count {
            let s = SwitchId(r.u16()? as u32);
            let v = r.u8()?;
            prefs.push((s, v));
        }
        let wcmp_count = r.u8()? as usize;
        let mut wcmp = Vec::new();
        for _ in 0..wcmp_count {
            let switch = SwitchId(r.u16()? as u32);
            let hops = r.u8()? as usize;
            if hops == 0 || hops > MAX_DST {
                return Err(HeaderError::Corrupt(format!("wcmp hop count {}", hops)));
            }
            let mut next_hops = Vec::new();
            let mut weights = Vec::new();
            for k in 0..MAX_DST {
                let h = r.u16()?;
                let w = r.u32()?;
                if k < hops {
                    next_hops.push(SwitchId(h as u32));
                    weights.push(w);
                }
            }
            wcmp.push(WcmpEntry { switch, next_hops, weights });
        }

        Ok(PacketHeader {
            topo_hash,
            flow_id,
            flags,
            curr,
            final_dst,
            dst,
            traversal_src,
            stack_sel,
            len,
            max_len,
            visited,
            fail,
            path,
            path_cursor,
            path_base,
            domain_path,
            domain_cursor,
            bfs_stacks,
            dfs_stack,
            pref,
            policy: PolicyBlock { mode, chain, chain_cursor, compute_cursor, prefs, wcmp },
        })
    }

    /// Annotated hex dump for `route --dump-header`.
    pub fn dump_annotated(&self) -> String {
        let (buf, notes) = self.encode_annotated();
        let mut out = String::new();
        for (name, start, end) in notes {
            let hex: Vec<String> = buf[start..end].iter().map(|b| format!("{:02x}", b)).collect();
            out.push_str(&format!("{:06x}  {:<24} {}\n", start, name, hex.join(" ")));
        }
        out
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
    notes: Vec<(String, usize, usize)>,
}

impl Writer {
    fn note<F: FnOnce(&mut Vec<u8>)>(&mut self, name: &str, f: F) {
        let start = self.buf.len();
        f(&mut self.buf);
        self.notes.push((name.to_string(), start, self.buf.len()));
    }
    fn u8(&mut self, name: &str, v: u8) {
        self.note(name, |b| b.push(v));
    }
    fn u16(&mut self, name: &str, v: u16) {
        self.note(name, |b| b.extend_from_slice(&v.to_be_bytes()));
    }
    fn u32(&mut self, name: &str, v: u32) {
        self.note(name, |b| b.extend_from_slice(&v.to_be_bytes()));
    }
    fn bytes(&mut self, name: &str, v: &[u8]) {
        self.note(name, |b| b.extend_from_slice(v));
    }
    fn path(&mut self, name: &str, p: &Path) {
        let cap = p.cap();
        self.note(name, |b| {
            b.push(cap);
            b.push(p.len() as u8);
            for i in 0..cap as usize {
                let v = p.get(i).map(|s| s.0 as u16).unwrap_or(0);
                b.extend_from_slice(&v.to_be_bytes());
            }
        });
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], HeaderError> {
        if self.pos + n > self.data.len() {
            return Err(HeaderError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.data.len(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, HeaderError> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, HeaderError> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, HeaderError> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn bitvec(&mut self) -> Result<BitVec, HeaderError> {
        let width = self.u16()? as u32;
        let nbytes = ((width as usize) + 7) / 8;
        let bytes = self.bytes(nbytes)?;
        BitVec::from_bytes(width, bytes)
            .ok_or_else(|| HeaderError::Corrupt("bit set beyond declared width".into()))
    }
    fn path(&mut self) -> Result<Path, HeaderError> {
        let cap = self.u8()?;
        let len = self.u8()? as usize;
        if len > cap as usize {
            return Err(HeaderError::Corrupt(format!("path len {} over cap {}", len, cap)));
        }
        let mut p = Path::new(cap);
        for i in 0..cap as usize {
            let v = self.u16()?;
            if i < len {
                p.hops.push(SwitchId(v as u32));
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LinkId;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    #[test]
    fn init_visited_is_fail_or_incoming() {
        let t = diamond();
        // link 1-2 failed: directed ids 1 and 2
        let mut fail = BitVec::new(t.width());
        let (f, r) = t.link_pair(SwitchId(1), SwitchId(2)).unwrap();
        assert_eq!((f, r), (LinkId(1), LinkId(2)));
        fail.set(f.0);
        fail.set(r.0);
        let h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), fail, 8);
        // incoming of 1 = {2, 4}; union with fail {1, 2} = {1, 2, 4}
        assert_eq!(h.visited.ones().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert_eq!(h.len, 0);
        assert_eq!(h.max_len, INITIAL_MAX_LEN);
        assert_eq!(h.curr, SwitchId(1));
        assert_eq!(h.dst, vec![SwitchId(4)]);
    }

    fn busy_header() -> PacketHeader {
        let t = diamond();
        let mut h = PacketHeader::init(&t, SwitchId(1), SwitchId(4), BitVec::new(8), 8);
        h.flow_id = 0xdead_beef;
        h.flags = FLAG_HIERARCHY;
        h.dst = vec![SwitchId(4), SwitchId(2)];
        h.stack_sel = 1;
        h.len = -1;
        h.max_len = 8;
        h.path.set_hop(1, SwitchId(2));
        h.path.set_hop(2, SwitchId(4));
        h.path_cursor = 1;
        h.domain_path.set_hop(1, SwitchId(129));
        h.domain_cursor = 1;
        h.bfs_stacks[0].push(StackEntry {
            switch: SwitchId(3),
            path: {
                let mut p = Path::new(8);
                p.set_hop(1, SwitchId(3));
                p
            },
        });
        h.bfs_stacks[1].push(StackEntry { switch: SwitchId(2), path: Path::new(8) });
        h.dfs_stack = vec![SwitchId(0), SwitchId(1), SwitchId(2)];
        h.pref = 0b10;
        h.policy = PolicyBlock {
            mode: TraversalMode::Iddfs,
            chain: vec![vec![SwitchId(2), SwitchId(3)]],
            chain_cursor: 1,
            compute_cursor: 1,
            prefs: vec![(SwitchId(1), 0b11)],
            wcmp: vec![WcmpEntry {
                switch: SwitchId(1),
                next_hops: vec![SwitchId(2), SwitchId(3), SwitchId(4)],
                weights: vec![1, 2, 1],
            }],
        };
        h
    }

    #[test]
    fn wire_roundtrip_is_identity() {
        let h = busy_header();
        let bytes = h.encode();
        let back = PacketHeader::decode(&bytes).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn decode_rejects_truncation_and_bad_version() {
        let h = busy_header();
        let bytes = h.encode();
        for cut in [0, 1, 2, 10, bytes.len() - 1] {
            let err = PacketHeader::decode(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, HeaderError::Truncated { .. }),
                "cut at {} gave {:?}",
                cut,
                err
            );
        }
        let mut bad = bytes.clone();
        bad[2] = 9;
        assert_eq!(
            PacketHeader::decode(&bad).unwrap_err(),
            HeaderError::VersionMismatch { found: 9, expected: VERSION }
        );
    }

    #[test]
    fn path_cap_truncates_silently() {
        let mut p = Path::new(2);
        p.set_hop(1, SwitchId(5));
        p.set_hop(2, SwitchId(6));
        p.set_hop(3, SwitchId(7)); // beyond cap: dropped
        assert_eq!(p.hops(), &[SwitchId(5), SwitchId(6)]);
        p.clear_from(3); // beyond cap: no-op
        assert_eq!(p.len(), 2);
        p.clear_from(2);
        assert_eq!(p.hops(), &[SwitchId(5)]);
    }

    #[test]
    fn scratch_clears_before_hop() {
        let mut h = busy_header();
        h.clear_traversal_scratch();
        assert!(h.bfs_stacks[0].is_empty() && h.bfs_stacks[1].is_empty());
        assert!(h.dfs_stack.is_empty());
        assert!(h.visited.is_zero());
        // the route, failure knowledge and policy state survive the hop
        assert_eq!(h.path.len(), 2);
        assert_eq!(h.policy.chain_cursor, 1);
    }

    #[test]
    fn annotated_dump_lists_fields() {
        let h = busy_header();
        let dump = h.dump_annotated();
        assert!(dump.contains("magic"));
        assert!(dump.contains("visited"));
        assert!(dump.contains("policy.wcmp[0].switch"));
    }
}
