// SPDX-License-Identifier: Apache-2.0

//! Network topology with a deterministic directed-link numbering.
//!
//! Bidirectional links are sorted by (min endpoint, max endpoint) and the two
//! directions of the k-th link (0-based) get ids 2k+1 (lower -> higher
//! endpoint) and 2k+2 (higher -> lower). Ids are contiguous in 1..=2E, which
//! lets visited/failure vectors use one bit per directed link with bit 1 as
//! the rightmost bit.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::BitVec;

/// Switch identifier. Positive; 0 is reserved as the traversal stack sentinel.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchId(pub u32);

/// Directed link identifier, 1-based and contiguous.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Debug for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Debug for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("self loop on switch {0}")]
    SelfLoop(SwitchId),
    #[error("topology is not connected ({0} components)")]
    Disconnected(usize),
    #[error("link references undeclared switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("topology has no switches")]
    Empty,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Clone, Debug)]
pub struct Topology {
    name: String,
    switches: Vec<SwitchId>,
    // index 0 holds LinkId(1); entry is (from, to)
    links: Vec<(SwitchId, SwitchId)>,
    out: BTreeMap<SwitchId, Vec<(LinkId, SwitchId)>>,
    inc: BTreeMap<SwitchId, Vec<(LinkId, SwitchId)>>,
    by_pair: BTreeMap<(SwitchId, SwitchId), LinkId>,
    // external node label -> switch id (GraphML sources)
    labels: BTreeMap<String, SwitchId>,
}

impl Topology {
    /// Build from switch ids and bidirectional link pairs. Duplicate pairs
    /// collapse; self loops and disconnected graphs are errors.
    pub fn new(
        name: &str,
        switches: impl IntoIterator<Item = SwitchId>,
        pairs: impl IntoIterator<Item = (SwitchId, SwitchId)>,
    ) -> Result<Self, TopologyError> {
        let switch_set: BTreeSet<SwitchId> = switches.into_iter().collect();
        if switch_set.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut norm: BTreeSet<(SwitchId, SwitchId)> = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            for s in [a, b] {
                if !switch_set.contains(&s) {
                    return Err(TopologyError::UnknownSwitch(s));
                }
            }
            norm.insert((a.min(b), a.max(b)));
        }

        let mut links = Vec::with_capacity(norm.len() * 2);
        for (lo, hi) in &norm {
            links.push((*lo, *hi));
            links.push((*hi, *lo));
        }

        let mut out: BTreeMap<SwitchId, Vec<(LinkId, SwitchId)>> =
            switch_set.iter().map(|s| (*s, Vec::new())).collect();
        let mut inc = out.clone();
        let mut by_pair = BTreeMap::new();
        for (i, (from, to)) in links.iter().enumerate() {
            let id = LinkId(i as u32 + 1);
            out.get_mut(from).unwrap().push((id, *to));
            inc.get_mut(to).unwrap().push((id, *from));
            by_pair.insert((*from, *to), id);
        }

        let t = Topology {
            name: name.to_string(),
            switches: switch_set.into_iter().collect(),
            links,
            out,
            inc,
            by_pair,
            labels: BTreeMap::new(),
        };
        let components = t.component_count();
        if components != 1 {
            return Err(TopologyError::Disconnected(components));
        }
        Ok(t)
    }

    /// Convenience: build from raw id pairs; the switch set is the union of
    /// endpoints.
    pub fn from_links(name: &str, pairs: &[(u32, u32)]) -> Result<Self, TopologyError> {
        let switches: BTreeSet<SwitchId> =
            pairs.iter().flat_map(|&(a, b)| [SwitchId(a), SwitchId(b)]).collect();
        Topology::new(name, switches, pairs.iter().map(|&(a, b)| (SwitchId(a), SwitchId(b))))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn switches(&self) -> &[SwitchId] {
        &self.switches
    }

    pub fn contains(&self, s: SwitchId) -> bool {
        self.out.contains_key(&s)
    }

    /// Total number of directed links; also the visited/fail vector width.
    pub fn width(&self) -> u32 {
        self.links.len() as u32
    }

    pub fn link_count(&self) -> usize {
        self.links.len() / 2
    }

    pub fn endpoints(&self, l: LinkId) -> (SwitchId, SwitchId) {
        self.links[(l.0 - 1) as usize]
    }

    /// The opposite direction of a directed link: (2k-1, 2k) are paired.
    pub fn reverse(&self, l: LinkId) -> LinkId {
        if l.0 % 2 == 1 {
            LinkId(l.0 + 1)
        } else {
            LinkId(l.0 - 1)
        }
    }

    pub fn directed_link(&self, from: SwitchId, to: SwitchId) -> Option<LinkId> {
        self.by_pair.get(&(from, to)).copied()
    }

    /// Outgoing (id, neighbor) pairs in ascending link-id order.
    pub fn out_links(&self, s: SwitchId) -> &[(LinkId, SwitchId)] {
        self.out.get(&s).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn in_links(&self, s: SwitchId) -> &[(LinkId, SwitchId)] {
        self.inc.get(&s).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn degree(&self, s: SwitchId) -> usize {
        self.out_links(s).len()
    }

    /// Bit mask over all outgoing or incoming directed links of a switch.
    pub fn edge_mask(&self, s: SwitchId, dir: Direction) -> BitVec {
        let list = match dir {
            Direction::Outgoing => self.out_links(s),
            Direction::Incoming => self.in_links(s),
        };
        BitVec::from_bits(self.width(), list.iter().map(|(l, _)| l.0))
    }

    /// Both directed ids of the bidirectional link between a and b.
    pub fn link_pair(&self, a: SwitchId, b: SwitchId) -> Option<(LinkId, LinkId)> {
        let fwd = self.directed_link(a, b)?;
        Some((fwd, self.reverse(fwd)))
    }

    /// Bidirectional links as (lower, higher) endpoint pairs, in id order.
    /// Fail-vector with both directions of each given pair set; None if a
    /// pair is not a link.
    pub fn fail_mask(&self, pairs: &[(SwitchId, SwitchId)]) -> Option<BitVec> {
        let mut f = BitVec::new(self.width());
        for (a, b) in pairs {
            let (x, y) = self.link_pair(*a, *b)?;
            f.set(x.0);
            f.set(y.0);
        }
        Some(f)
    }

    pub fn bidirectional_links(&self) -> impl Iterator<Item = (SwitchId, SwitchId)> + '_ {
        self.links.iter().step_by(2).copied()
    }

    pub fn labels(&self) -> &BTreeMap<String, SwitchId> {
        &self.labels
    }

    /// Stable JSON for the label -> switch-id sidecar emitted next to
    /// GraphML-derived rule dumps.
    pub fn label_map_json(&self) -> String {
        serde_json::to_string_pretty(&self.labels).expect("label map serializes")
    }

    fn component_count(&self) -> usize {
        let mut seen: BTreeSet<SwitchId> = BTreeSet::new();
        let mut components = 0;
        for s in &self.switches {
            if seen.contains(s) {
                continue;
            }
            components += 1;
            let mut q = VecDeque::from([*s]);
            seen.insert(*s);
            while let Some(v) = q.pop_front() {
                for (_, w) in self.out_links(v) {
                    if seen.insert(*w) {
                        q.push_back(*w);
                    }
                }
            }
        }
        components
    }

    /// FNV-1a over the canonical switch/link listing; ties packet headers to
    /// the topology their vectors were sized for.
    pub fn structural_hash(&self) -> u32 {
        let mut s = String::new();
        s.push('V');
        for sw in &self.switches {
            s.push_str(&format!(",{}", sw.0));
        }
        s.push('E');
        for (a, b) in self.bidirectional_links() {
            s.push_str(&format!(",{}-{}", a.0, b.0));
        }
        let mut h: u32 = 0x811c9dc5;
        for byte in s.as_bytes() {
            h ^= *byte as u32;
            h = h.wrapping_mul(0x0100_0193);
        }
        h
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTopology {
    switches: Vec<u32>,
    links: Vec<(u32, u32)>,
}

/// Load from a file; format chosen by extension (.json or .graphml).
pub fn load_topology(path: &Path) -> Result<Topology, TopologyError> {
    let data = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "topology".to_string());
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_json(&name, &data),
        Some("graphml") | Some("xml") => parse_graphml(&name, &data),
        other => Err(TopologyError::Parse(format!(
            "unsupported topology extension {:?}",
            other
        ))),
    }
}

pub fn parse_json(name: &str, data: &str) -> Result<Topology, TopologyError> {
    let parsed: JsonTopology =
        serde_json::from_str(data).map_err(|e| TopologyError::Parse(e.to_string()))?;
    Topology::new(
        name,
        parsed.switches.into_iter().map(SwitchId),
        parsed.links.into_iter().map(|(a, b)| (SwitchId(a), SwitchId(b))),
    )
}

/// GraphML reader for the Topology Zoo dialect: undirected graphs, node ids
/// as attributes, optional string `label` data keys. Node ids are mapped to
/// switch ids 1..=N in numeric order when every id parses as an integer,
/// lexicographic order otherwise; the mapping is recorded in `labels()`.
pub fn parse_graphml(name: &str, data: &str) -> Result<Topology, TopologyError> {
    let doc = roxmltree::Document::parse(data)
        .map_err(|e| TopologyError::Parse(format!("graphml: {}", e)))?;
    let root = doc.root_element();

    let label_key: Option<String> = root
        .descendants()
        .filter(|n| n.has_tag_name("key"))
        .find(|n| n.attribute("attr.name") == Some("label") && n.attribute("for") == Some("node"))
        .and_then(|n| n.attribute("id").map(str::to_string));

    let mut node_ids: Vec<String> = Vec::new();
    let mut node_labels: BTreeMap<String, String> = BTreeMap::new();
    for node in root.descendants().filter(|n| n.has_tag_name("node")) {
        let id = node
            .attribute("id")
            .ok_or_else(|| TopologyError::Parse("graphml node without id".into()))?
            .to_string();
        if let Some(key) = &label_key {
            if let Some(data) = node
                .children()
                .filter(|c| c.has_tag_name("data"))
                .find(|c| c.attribute("key") == Some(key.as_str()))
            {
                if let Some(text) = data.text() {
                    node_labels.insert(id.clone(), text.trim().to_string());
                }
            }
        }
        node_ids.push(id);
    }
    if node_ids.is_empty() {
        return Err(TopologyError::Empty);
    }

    let all_numeric = node_ids.iter().all(|s| s.parse::<u64>().is_ok());
    let mut ordered = node_ids.clone();
    if all_numeric {
        ordered.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        ordered.sort();
    }
    ordered.dedup();
    let id_of: BTreeMap<&str, SwitchId> = ordered
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), SwitchId(i as u32 + 1)))
        .collect();

    let mut pairs = Vec::new();
    for edge in root.descendants().filter(|n| n.has_tag_name("edge")) {
        let src = edge
            .attribute("source")
            .ok_or_else(|| TopologyError::Parse("graphml edge without source".into()))?;
        let dst = edge
            .attribute("target")
            .ok_or_else(|| TopologyError::Parse("graphml edge without target".into()))?;
        let a = *id_of
            .get(src)
            .ok_or_else(|| TopologyError::Parse(format!("edge references unknown node {}", src)))?;
        let b = *id_of
            .get(dst)
            .ok_or_else(|| TopologyError::Parse(format!("edge references unknown node {}", dst)))?;
        pairs.push((a, b));
    }

    let mut topo = Topology::new(name, id_of.values().copied().collect::<Vec<_>>(), pairs)?;
    topo.labels = ordered
        .iter()
        .map(|node| {
            let label = node_labels.get(node).cloned().unwrap_or_else(|| node.clone());
            (label, id_of[node.as_str()])
        })
        .collect();
    Ok(topo)
}
