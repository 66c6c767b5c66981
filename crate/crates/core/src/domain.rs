// SPDX-License-Identifier: Apache-2.0

//! Hierarchical domains: seeded balanced partitioning, the domain graph, and
//! per-domain augmented topologies.
//!
//! Domain ids live in the switch-id space but in a disjoint range starting at
//! 128 (or the next power of two above the largest real switch id). Inside a
//! domain's augmented topology each neighbor domain appears as one virtual
//! switch whose id *is* the neighbor's domain id. Augmented directed links
//! extend the parent topology's id space: intra-domain links keep their
//! parent ids and (border switch, neighbor domain) pairs get fresh ids above
//! 2E, numbered across all domains in one deterministic pass.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVec;
use crate::topology::{Direction, LinkId, SwitchId, Topology, TopologyError};

pub type DomainId = SwitchId;

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error("cannot split {switches} switches into {domains} domains")]
    Infeasible { switches: usize, domains: usize },
    #[error("switch {0} has no domain assignment")]
    Unassigned(SwitchId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Anything a traversal can run over: the flat topology, the domain graph or
/// an augmented per-domain topology. Width is the visited/fail vector size.
pub trait TraversalSpace {
    fn space_width(&self) -> u32;
    fn space_out_links(&self, s: SwitchId) -> &[(LinkId, SwitchId)];
    fn space_in_mask(&self, s: SwitchId) -> BitVec;
    fn space_switches(&self) -> Vec<SwitchId>;
    fn space_contains(&self, s: SwitchId) -> bool;
}

impl TraversalSpace for Topology {
    fn space_width(&self) -> u32 {
        self.width()
    }
    fn space_out_links(&self, s: SwitchId) -> &[(LinkId, SwitchId)] {
        self.out_links(s)
    }
    fn space_in_mask(&self, s: SwitchId) -> BitVec {
        self.edge_mask(s, Direction::Incoming)
    }
    fn space_switches(&self) -> Vec<SwitchId> {
        self.switches().to_vec()
    }
    fn space_contains(&self, s: SwitchId) -> bool {
        self.contains(s)
    }
}

#[derive(Clone, Debug)]
pub struct DomainPartition {
    domain_of: BTreeMap<SwitchId, DomainId>,
    members: BTreeMap<DomainId, Vec<SwitchId>>,
}

impl DomainPartition {
    /// Seeded random balanced partition. Sizes differ by at most one before
    /// the connectivity repair pass; repair may move switches between
    /// domains so that every domain induces a connected subgraph.
    pub fn random(t: &Topology, n_domains: usize, seed: u64) -> Result<Self, PartitionError> {
        let switches = t.switches().to_vec();
        if n_domains == 0 || n_domains > switches.len() {
            return Err(PartitionError::Infeasible {
                switches: switches.len(),
                domains: n_domains,
            });
        }
        let mut shuffled = switches.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        let mut group: BTreeMap<SwitchId, usize> = BTreeMap::new();
        for (i, s) in shuffled.iter().enumerate() {
            group.insert(*s, i % n_domains);
        }
        Self::repair_and_number(t, group)
    }

    /// Explicit assignment of switches to group indexes; groups are then
    /// renumbered into the domain-id range. Used by tests and the CLI when a
    /// partition file is supplied.
    pub fn from_assignment(
        t: &Topology,
        group: &BTreeMap<SwitchId, usize>,
    ) -> Result<Self, PartitionError> {
        for s in t.switches() {
            if !group.contains_key(s) {
                return Err(PartitionError::Unassigned(*s));
            }
        }
        Self::repair_and_number(t, group.clone())
    }

    /// Repair pass: keep each group's largest induced component anchored and
    /// pull one stray switch per round into an adjacent anchored group,
    /// always the smallest such group so the final sizes stay roughly equal.
    fn repair_and_number(
        t: &Topology,
        mut group: BTreeMap<SwitchId, usize>,
    ) -> Result<Self, PartitionError> {
        loop {
            let anchored = anchored_set(t, &group);
            let mut region_size: BTreeMap<usize, usize> = BTreeMap::new();
            for s in &anchored {
                *region_size.entry(group[s]).or_insert(0) += 1;
            }
            // (region size, stray id, group) — smallest region grows first
            let mut best: Option<(usize, SwitchId, usize)> = None;
            for s in t.switches().iter().filter(|s| !anchored.contains(s)) {
                for (_, n) in t.out_links(*s) {
                    if !anchored.contains(n) {
                        continue;
                    }
                    let cand = (region_size[&group[n]], *s, group[n]);
                    if best.map_or(true, |b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
            match best {
                Some((_, s, g)) => {
                    group.insert(s, g);
                }
                // the graph is connected, so some stray always borders an
                // anchor — unless nothing is stray and we are done
                None => break,
            }
        }

        // number domains by smallest member: base + rank
        let base = domain_base(t);
        let mut by_group: BTreeMap<usize, Vec<SwitchId>> = BTreeMap::new();
        for (s, g) in &group {
            by_group.entry(*g).or_default().push(*s);
        }
        let mut groups: Vec<Vec<SwitchId>> = by_group.into_values().collect();
        groups.sort_by_key(|m| m[0]);
        let mut domain_of = BTreeMap::new();
        let mut members = BTreeMap::new();
        for (rank, m) in groups.into_iter().enumerate() {
            let d = SwitchId(base + rank as u32);
            for s in &m {
                domain_of.insert(*s, d);
            }
            members.insert(d, m);
        }
        Ok(DomainPartition { domain_of, members })
    }

    pub fn domain_of(&self, s: SwitchId) -> Option<DomainId> {
        self.domain_of.get(&s).copied()
    }

    pub fn members(&self, d: DomainId) -> &[SwitchId] {
        self.members.get(&d).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn domains(&self) -> Vec<DomainId> {
        self.members.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_json(&self) -> String {
        let obj: BTreeMap<String, &Vec<SwitchId>> = self
            .members
            .iter()
            .map(|(d, m)| (d.0.to_string(), m))
            .collect();
        serde_json::to_string_pretty(&obj).expect("partition serializes")
    }
}

fn domain_base(t: &Topology) -> u32 {
    let max_real = t.switches().iter().map(|s| s.0).max().unwrap_or(0);
    if max_real < 128 {
        128
    } else {
        (max_real + 1).next_power_of_two()
    }
}

fn anchored_set(t: &Topology, group: &BTreeMap<SwitchId, usize>) -> BTreeSet<SwitchId> {
    let mut by_group: BTreeMap<usize, Vec<SwitchId>> = BTreeMap::new();
    for (s, g) in group {
        by_group.entry(*g).or_default().push(*s);
    }
    let mut anchored = BTreeSet::new();
    for (g, members) in &by_group {
        let member_set: BTreeSet<SwitchId> = members.iter().copied().collect();
        let mut seen: BTreeSet<SwitchId> = BTreeSet::new();
        let mut best: Vec<SwitchId> = Vec::new();
        for s in members {
            if seen.contains(s) {
                continue;
            }
            let mut comp = vec![*s];
            let mut q = VecDeque::from([*s]);
            seen.insert(*s);
            while let Some(v) = q.pop_front() {
                for (_, w) in t.out_links(v) {
                    if member_set.contains(w) && group[w] == *g && seen.insert(*w) {
                        comp.push(*w);
                        q.push_back(*w);
                    }
                }
            }
            comp.sort();
            // largest component wins; ties broken by smallest member id
            if comp.len() > best.len() || (comp.len() == best.len() && comp < best) {
                best = comp;
            }
        }
        anchored.extend(best);
    }
    anchored
}

/// The domain graph: one node per domain, one bidirectional link per pair of
/// domains with at least one physical inter-domain link. `failmap` maps each
/// directed domain link to the physical directed links it aggregates; a
/// domain link counts as failed only when all of them are failed.
#[derive(Clone, Debug)]
pub struct DomainGraph {
    pub topology: Topology,
    pub failmap: BTreeMap<LinkId, Vec<LinkId>>,
}

impl DomainGraph {
    pub fn build(t: &Topology, p: &DomainPartition) -> Result<Self, PartitionError> {
        let mut pairs: BTreeSet<(DomainId, DomainId)> = BTreeSet::new();
        for (a, b) in t.bidirectional_links() {
            let da = p.domain_of(a).ok_or(PartitionError::Unassigned(a))?;
            let db = p.domain_of(b).ok_or(PartitionError::Unassigned(b))?;
            if da != db {
                pairs.insert((da.min(db), da.max(db)));
            }
        }
        let topology = Topology::new("domain-graph", p.domains(), pairs.iter().copied())?;
        let mut failmap: BTreeMap<LinkId, Vec<LinkId>> = BTreeMap::new();
        for (a, b) in t.bidirectional_links() {
            let (da, db) = (p.domain_of(a).unwrap(), p.domain_of(b).unwrap());
            if da == db {
                continue;
            }
            let fwd = t.directed_link(a, b).unwrap();
            let dlink = topology.directed_link(da, db).unwrap();
            failmap.entry(dlink).or_default().push(fwd);
            let rlink = topology.directed_link(db, da).unwrap();
            failmap.entry(rlink).or_default().push(t.reverse(fwd));
        }
        for links in failmap.values_mut() {
            links.sort();
        }
        Ok(DomainGraph { topology, failmap })
    }

    /// Project a physical failure vector onto the domain graph.
    pub fn map_fail_vec(&self, fail: &BitVec) -> BitVec {
        let mut out = BitVec::new(self.topology.width());
        for (dlink, phys) in &self.failmap {
            if !phys.is_empty() && phys.iter().all(|l| fail.get(l.0)) {
                out.set(dlink.0);
            }
        }
        out
    }
}

/// One domain's augmented topology: its member switches plus one virtual
/// switch per neighbor domain. Intra-domain links keep parent ids; augmented
/// links are numbered above 2E across all domains in one pass, so every
/// augmented topology of a partition shares a single vector width.
#[derive(Clone, Debug)]
pub struct AugmentedDomain {
    pub domain: DomainId,
    width: u32,
    out: BTreeMap<SwitchId, Vec<(LinkId, SwitchId)>>,
    inc: BTreeMap<SwitchId, Vec<(LinkId, SwitchId)>>,
    virtuals: Vec<SwitchId>,
    /// augmented directed link -> physical directed links it stands for
    pub virt_phys: BTreeMap<LinkId, Vec<LinkId>>,
}

/// Build the augmented topologies of every domain with a shared id space.
pub fn augment_domains(
    t: &Topology,
    p: &DomainPartition,
) -> BTreeMap<DomainId, AugmentedDomain> {
    // (domain, border switch, neighbor domain) -> physical out-links
    let mut groups: BTreeMap<(DomainId, SwitchId, DomainId), Vec<LinkId>> = BTreeMap::new();
    for s in t.switches() {
        let ds = p.domain_of(*s).expect("partition covers all switches");
        for (l, n) in t.out_links(*s) {
            let dn = p.domain_of(*n).expect("partition covers all switches");
            if dn != ds {
                groups.entry((ds, *s, dn)).or_default().push(*l);
            }
        }
    }

    let mut domains: BTreeMap<DomainId, AugmentedDomain> = p
        .domains()
        .into_iter()
        .map(|d| {
            (
                d,
                AugmentedDomain {
                    domain: d,
                    width: 0,
                    out: p.members(d).iter().map(|s| (*s, Vec::new())).collect(),
                    inc: p.members(d).iter().map(|s| (*s, Vec::new())).collect(),
                    virtuals: Vec::new(),
                    virt_phys: BTreeMap::new(),
                },
            )
        })
        .collect();

    // intra-domain links keep their parent ids
    for (a, b) in t.bidirectional_links() {
        let (da, db) = (p.domain_of(a).unwrap(), p.domain_of(b).unwrap());
        if da != db {
            continue;
        }
        let fwd = t.directed_link(a, b).unwrap();
        let rev = t.reverse(fwd);
        let aug = domains.get_mut(&da).unwrap();
        aug.out.get_mut(&a).unwrap().push((fwd, b));
        aug.inc.get_mut(&b).unwrap().push((fwd, a));
        aug.out.get_mut(&b).unwrap().push((rev, a));
        aug.inc.get_mut(&a).unwrap().push((rev, b));
    }

    // fresh ids above 2E for (border, neighbor-domain) pairs, all domains
    let mut next = t.width() + 1;
    for ((d, border, nd), phys) in &groups {
        let to_virtual = LinkId(next);
        let from_virtual = LinkId(next + 1);
        next += 2;
        let aug = domains.get_mut(d).unwrap();
        aug.out.get_mut(border).unwrap().push((to_virtual, *nd));
        aug.inc.get_mut(border).unwrap().push((from_virtual, *nd));
        aug.out.entry(*nd).or_default().push((from_virtual, *border));
        aug.inc.entry(*nd).or_default().push((to_virtual, *border));
        if !aug.virtuals.contains(nd) {
            aug.virtuals.push(*nd);
        }
        let mut sorted = phys.clone();
        sorted.sort();
        aug.virt_phys.insert(to_virtual, sorted.clone());
        aug.virt_phys
            .insert(from_virtual, sorted.iter().map(|l| t.reverse(*l)).collect());
    }

    let width = next - 1;
    for aug in domains.values_mut() {
        aug.width = width;
        for links in aug.out.values_mut() {
            links.sort();
        }
        for links in aug.inc.values_mut() {
            links.sort();
        }
        aug.virtuals.sort();
    }
    domains
}

/// Convenience accessor for a single domain's augmented topology.
pub fn augment_domain_topology(
    t: &Topology,
    p: &DomainPartition,
    d: DomainId,
) -> Option<AugmentedDomain> {
    augment_domains(t, p).remove(&d)
}

impl AugmentedDomain {
    pub fn virtuals(&self) -> &[SwitchId] {
        &self.virtuals
    }

    /// Extend a physical failure vector into the augmented space: parent
    /// bits carry over, an augmented link fails when all physical links it
    /// stands for have failed.
    pub fn extend_fail_vec(&self, fail: &BitVec) -> BitVec {
        let mut out = BitVec::new(self.width);
        for b in fail.ones() {
            out.set(b);
        }
        for (aug, phys) in &self.virt_phys {
            if !phys.is_empty() && phys.iter().all(|l| fail.get(l.0)) {
                out.set(aug.0);
            }
        }
        out
    }

    /// First active physical link for an augmented border link, lowest id
    /// first. `None` when every aggregated link is down.
    pub fn active_physical(&self, aug: LinkId, fail: &BitVec) -> Option<LinkId> {
        self.virt_phys
            .get(&aug)?
            .iter()
            .copied()
            .find(|l| !fail.get(l.0))
    }
}

impl TraversalSpace for AugmentedDomain {
    fn space_width(&self) -> u32 {
        self.width
    }
    fn space_out_links(&self, s: SwitchId) -> &[(LinkId, SwitchId)] {
        self.out.get(&s).map(|v| v.as_slice()).unwrap_or(&[])
    }
    fn space_in_mask(&self, s: SwitchId) -> BitVec {
        BitVec::from_bits(
            self.width,
            self.inc
                .get(&s)
                .map(|v| v.as_slice())
                .unwrap_or(&[])
                .iter()
                .map(|(l, _)| l.0),
        )
    }
    fn space_switches(&self) -> Vec<SwitchId> {
        self.out.keys().copied().collect()
    }
    fn space_contains(&self, s: SwitchId) -> bool {
        self.out.contains_key(&s)
    }
}
