// SPDX-License-Identifier: Apache-2.0

//! Rule compilation: turns a topology (flat, domain graph, or augmented
//! per-domain view) into the complete table contents every switch installs.
//!
//! Generation is deterministic — rule order follows ascending switch and
//! link ids — so identical inputs produce byte-identical JSON dumps.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::bits::BitVec;
use crate::domain::{
    augment_domains, AugmentedDomain, DomainGraph, DomainId, DomainPartition, PartitionError,
    TraversalSpace,
};
use crate::headers::WcmpEntry;
use crate::pipeline::{
    max_len_cap_for, Action, Field, MatchKey, SpaceMasks, Table, TableRule,
};
use crate::topology::{SwitchId, Topology};

pub const INITIAL_BOUND: u16 = 4;
/// Flow-hash width used by weighted-cost preprocessing rules.
pub const HASH_BITS: u32 = 16;

/// One next-hop preference to steer: duplicate goto rules matching the
/// exact 2-bit code are emitted for (switch → neighbor).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PrefSteer {
    pub switch: SwitchId,
    pub neighbor: SwitchId,
    pub code: u8,
}

fn bit_mask(width: u32, bits: &[u32]) -> BitVec {
    BitVec::from_bits(width, bits.iter().copied())
}

fn push_bfs_rules<S: TraversalSpace + ?Sized>(table: &mut Table, space: &S, hier: Option<i64>) {
    let width = space.space_width();
    let hier_key = |keys: &mut Vec<(Field, MatchKey)>| {
        if let Some(hv) = hier {
            keys.push((Field::Hierarchy, MatchKey::Exact { value: hv }));
        }
    };
    for m in space.space_switches() {
        let out = space.space_out_links(m);
        for (l, n) in out {
            for sel in 0..2i64 {
                let mut keys = vec![
                    (Field::Curr, MatchKey::Exact { value: m.0 as i64 }),
                    (
                        Field::Visited,
                        MatchKey::Ternary {
                            value: BitVec::new(width),
                            mask: bit_mask(width, &[l.0]),
                        },
                    ),
                    (Field::StackSel, MatchKey::Exact { value: sel }),
                ];
                hier_key(&mut keys);
                table.push(TableRule {
                    keys,
                    action: Action::PushNeighbor { n: *n, n_visited: space.space_in_mask(*n) },
                });
            }
        }
        let out_mask = bit_mask(width, &out.iter().map(|(l, _)| l.0).collect::<Vec<_>>());
        for sel in 0..2i64 {
            let mut keys = vec![
                (Field::Curr, MatchKey::Exact { value: m.0 as i64 }),
                (
                    Field::Visited,
                    MatchKey::Ternary { value: out_mask.clone(), mask: out_mask.clone() },
                ),
                (Field::StackSel, MatchKey::Exact { value: sel }),
            ];
            hier_key(&mut keys);
            table.push(TableRule { keys, action: Action::PopStack });
        }
    }
    for sel in 0..2i64 {
        let mut keys = vec![
            (Field::Curr, MatchKey::Exact { value: 0 }),
            (Field::StackSel, MatchKey::Exact { value: sel }),
        ];
        hier_key(&mut keys);
        table.push(TableRule { keys, action: Action::ChangeStack });
    }
}

/// Breadth-first traversal rules: per directed edge m→n one push rule per
/// stack selector, per switch one pop rule per selector, and the sentinel
/// change_stack pair. 4·E_dir/2·... = 4E + 2V + 2 rules total.
pub fn gen_bfs_rules<S: TraversalSpace + ?Sized>(space: &S) -> Table {
    let mut table = Table::new(
        "bfs",
        vec![Field::Curr, Field::Visited, Field::StackSel],
        Action::Noop,
    );
    push_bfs_rules(&mut table, space, None);
    table.freeze();
    table
}

fn push_iddfs_rules<S: TraversalSpace + ?Sized>(
    table: &mut Table,
    space: &S,
    cap: u16,
    steer: &[PrefSteer],
    hier: Option<i64>,
) {
    assert!(cap >= INITIAL_BOUND && cap.is_power_of_two());
    let width = space.space_width();
    let hier_key = |keys: &mut Vec<(Field, MatchKey)>| {
        if let Some(hv) = hier {
            keys.push((Field::Hierarchy, MatchKey::Exact { value: hv }));
        }
    };
    let goto_rule = |m: SwitchId, l: u32, n: SwitchId, len: i64, bound: u16, pref: MatchKey| {
        let mut keys = vec![
            (Field::Curr, MatchKey::Exact { value: m.0 as i64 }),
            (
                Field::Visited,
                MatchKey::Ternary { value: BitVec::new(width), mask: bit_mask(width, &[l]) },
            ),
            (Field::Len, MatchKey::Exact { value: len }),
            (Field::MaxLen, MatchKey::Exact { value: bound as i64 }),
            (Field::Pref, pref),
        ];
        hier_key(&mut keys);
        TableRule { keys, action: Action::GotoNeighbor { n, n_visited: space.space_in_mask(n) } }
    };
    let mut bound = INITIAL_BOUND;
    loop {
        for len in 0..bound as i64 {
            for m in space.space_switches() {
                for &(l, n) in space.space_out_links(m) {
                    table.push(goto_rule(
                        m,
                        l.0,
                        n,
                        len,
                        bound,
                        MatchKey::Lpm { value: 0, prefix_len: 0 },
                    ));
                }
            }
        }
        let mut keys = vec![
            (Field::Curr, MatchKey::Exact { value: 0 }),
            (Field::Len, MatchKey::Exact { value: -1 }),
            (Field::MaxLen, MatchKey::Exact { value: bound as i64 }),
        ];
        hier_key(&mut keys);
        table.push(TableRule { keys, action: Action::IncreaseLength });
        if bound == cap {
            break;
        }
        bound *= 2;
    }
    // preference-steered duplicates: exact 2-bit codes outrank the
    // prefix-0 base rules via longest-prefix resolution
    for s in steer {
        let link = space
            .space_out_links(s.switch)
            .into_iter()
            .find(|(_, n)| *n == s.neighbor)
            .map(|(l, _)| l)
            .expect("steered edge exists in space");
        let mut bound = INITIAL_BOUND;
        loop {
            for len in 0..bound as i64 {
                table.push(goto_rule(
                    s.switch,
                    link.0,
                    s.neighbor,
                    len,
                    bound,
                    MatchKey::Lpm { value: s.code, prefix_len: 2 },
                ));
            }
            if bound == cap {
                break;
            }
            bound *= 2;
        }
    }
}

/// Depth-bounded traversal rules: per directed edge, one goto rule per
/// (len, bound) pair with len < bound; one increase_length rule per bound;
/// default backtrack. `steer` appends preference-code duplicates.
pub fn gen_iddfs_rules<S: TraversalSpace + ?Sized>(
    space: &S,
    cap: u16,
    steer: &[PrefSteer],
) -> Table {
    let mut table = Table::new(
        "iddfs",
        vec![Field::Curr, Field::Visited, Field::Len, Field::MaxLen, Field::Pref],
        Action::Backtrack,
    );
    push_iddfs_rules(&mut table, space, cap, steer, None);
    table.freeze();
    table
}

/// Source-route forwarding: (curr, next hop in path, link alive) → forward.
/// A miss — exhausted path or locally failed next hop — diverts the packet
/// into the traversal tables (the recompute hook).
pub fn gen_forwarding_rules(t: &Topology) -> Table {
    let mut table = Table::new(
        "forwarding",
        vec![Field::Curr, Field::NextHop, Field::Fail],
        Action::Noop,
    );
    let width = t.width();
    for m in t.switches() {
        for (l, n) in t.out_links(*m) {
            table.push(TableRule {
                keys: vec![
                    (Field::Curr, MatchKey::Exact { value: m.0 as i64 }),
                    (Field::NextHop, MatchKey::Exact { value: n.0 as i64 }),
                    (
                        Field::Fail,
                        MatchKey::Ternary {
                            value: BitVec::new(width),
                            mask: bit_mask(width, &[l.0]),
                        },
                    ),
                ],
                action: Action::Forward { next_hop: *n },
            });
        }
    }
    table.freeze();
    table
}

/// Decompose [lo, hi) over the 16-bit hash space into maximal
/// power-of-two-aligned blocks, each expressible as one ternary prefix.
fn prefix_blocks(mut lo: u32, hi: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    while lo < hi {
        let align = if lo == 0 { HASH_BITS } else { lo.trailing_zeros().min(HASH_BITS) };
        let mut size = 1u32 << align;
        while lo + size > hi {
            size >>= 1;
        }
        out.push((lo, size.trailing_zeros()));
        lo += size;
    }
    out
}

fn hash_ternary(base: u32, size_log2: u32) -> MatchKey {
    let mut value = BitVec::new(HASH_BITS);
    let mut mask = BitVec::new(HASH_BITS);
    for bit in (size_log2 + 1)..=HASH_BITS {
        mask.set(bit);
        if (base >> (bit - 1)) & 1 == 1 {
            value.set(bit);
        }
    }
    MatchKey::Ternary { value, mask }
}

/// Weighted-cost preprocessing rules for one switch: for every nonempty
/// active subset of the candidate next hops (matched as a ternary pattern
/// over the forward failure bits), map cumulative hash ranges — weights
/// renormalized over the active subset — to the hops' preference codes.
pub fn gen_wcmp_pre_rules(t: &Topology, entry: &WcmpEntry, codes: &[u8]) -> Vec<TableRule> {
    let width = t.width();
    let k = entry.next_hops.len();
    assert!(k >= 1 && k <= 4 && entry.weights.len() == k && codes.len() == k);
    let links: Vec<u32> = entry
        .next_hops
        .iter()
        .map(|n| t.directed_link(entry.switch, *n).expect("wcmp hop is a neighbor").0)
        .collect();
    let mut rules = Vec::new();
    for active in 1u32..(1 << k) {
        let total: u64 = (0..k)
            .filter(|i| active >> i & 1 == 1)
            .map(|i| entry.weights[i] as u64)
            .sum();
        if total == 0 {
            continue;
        }
        let mut fail_value = BitVec::new(width);
        let mut fail_mask = BitVec::new(width);
        for (i, l) in links.iter().enumerate() {
            fail_mask.set(*l);
            if active >> i & 1 == 0 {
                fail_value.set(*l);
            }
        }
        let space = 1u64 << HASH_BITS;
        let mut cum = 0u64;
        for i in 0..k {
            if active >> i & 1 == 0 {
                continue;
            }
            let lo = cum * space / total;
            cum += entry.weights[i] as u64;
            let hi = cum * space / total;
            for (base, size_log2) in prefix_blocks(lo as u32, hi as u32) {
                rules.push(TableRule {
                    keys: vec![
                        (Field::Curr, MatchKey::Exact { value: entry.switch.0 as i64 }),
                        (
                            Field::Fail,
                            MatchKey::Ternary {
                                value: fail_value.clone(),
                                mask: fail_mask.clone(),
                            },
                        ),
                        (Field::FlowHash, hash_ternary(base, size_log2)),
                    ],
                    action: Action::WcmpMap { pref: codes[i] },
                });
            }
        }
    }
    rules
}

/// Per-domain table bundle a member switch installs for hierarchical
/// routing: traversal tables holding domain-graph rules (hierarchy=1) and
/// intra-domain augmented rules (hierarchy=0), the domain-entry rows, and
/// the failure-vector mapping rows.
#[derive(Clone, Debug)]
pub struct DomainTables {
    pub domain: DomainId,
    pub bfs: Table,
    pub iddfs: Table,
    pub domain_enter: Table,
    pub fail_map: Table,
    pub aug: AugmentedDomain,
    pub masks: SpaceMasks,
    pub intra_cap: u16,
}

#[derive(Clone, Debug)]
pub struct HierRules {
    pub partition: DomainPartition,
    pub graph: DomainGraph,
    pub graph_masks: SpaceMasks,
    pub graph_cap: u16,
    pub domains: BTreeMap<DomainId, DomainTables>,
}

/// Compile hierarchical rules: one shared domain-graph rule block plus a
/// per-domain augmented-topology block, distinguished by the hierarchy
/// header bit inside the same tables.
pub fn gen_hierarchy_rules(
    t: &Topology,
    p: &DomainPartition,
) -> Result<HierRules, PartitionError> {
    let graph = DomainGraph::build(t, p)?;
    let graph_cap = max_len_cap_for(graph.topology.switches().len());
    let augs = augment_domains(t, p);

    let mut domains = BTreeMap::new();
    for (d, aug) in augs {
        let intra_cap = max_len_cap_for(aug.space_switches().len());
        let mut bfs = Table::new(
            "bfs.hier",
            vec![Field::Curr, Field::Visited, Field::StackSel, Field::Hierarchy],
            Action::Noop,
        );
        push_bfs_rules(&mut bfs, &graph.topology, Some(1));
        push_bfs_rules(&mut bfs, &aug, Some(0));
        bfs.freeze();

        let mut iddfs = Table::new(
            "iddfs.hier",
            vec![
                Field::Curr,
                Field::Visited,
                Field::Len,
                Field::MaxLen,
                Field::Pref,
                Field::Hierarchy,
            ],
            Action::Backtrack,
        );
        push_iddfs_rules(&mut iddfs, &graph.topology, graph_cap, &[], Some(1));
        push_iddfs_rules(&mut iddfs, &aug, intra_cap, &[], Some(0));
        iddfs.freeze();

        let mut domain_enter = Table::new("domain_enter", vec![Field::Curr], Action::Noop);
        let members = p.members(d);
        for m in members {
            let is_entry = t.out_links(*m).iter().any(|(_, n)| p.domain_of(*n) != Some(d));
            if is_entry {
                domain_enter.push(TableRule {
                    keys: vec![(Field::Curr, MatchKey::Exact { value: m.0 as i64 })],
                    action: Action::DomainEnter { domain: d },
                });
            }
        }
        domain_enter.freeze();

        let mut fail_map = Table::new("fail_map", vec![Field::Fail], Action::Noop);
        for (dl, phys) in graph.failmap.iter() {
            let mask = bit_mask(t.width(), &phys.iter().map(|l| l.0).collect::<Vec<_>>());
            fail_map.push(TableRule {
                keys: vec![(
                    Field::Fail,
                    MatchKey::Ternary { value: mask.clone(), mask },
                )],
                action: Action::FcpUpdate { bit: Some(*dl) },
            });
        }
        for (al, phys) in aug.virt_phys.iter() {
            let mask = bit_mask(t.width(), &phys.iter().map(|l| l.0).collect::<Vec<_>>());
            fail_map.push(TableRule {
                keys: vec![(
                    Field::Fail,
                    MatchKey::Ternary { value: mask.clone(), mask },
                )],
                action: Action::FcpUpdate { bit: Some(*al) },
            });
        }
        fail_map.freeze();

        let masks = SpaceMasks::of(&aug);
        domains.insert(
            d,
            DomainTables { domain: d, bfs, iddfs, domain_enter, fail_map, aug, masks, intra_cap },
        );
    }

    let graph_masks = SpaceMasks::of(&graph.topology);
    Ok(HierRules { partition: p.clone(), graph, graph_masks, graph_cap, domains })
}

/// The complete compiled rule state for a topology (and optional partition
/// and policy). Flat tables are identical on every switch and stored once;
/// `for_switch` exposes the per-switch view.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub topo_hash: u32,
    pub cap: u16,
    pub bfs: Table,
    pub iddfs: Table,
    pub forwarding: Table,
    pub wcmp_pre: Table,
    pub masks: SpaceMasks,
    pub hier: Option<HierRules>,
    switches: Vec<SwitchId>,
}

/// Per-switch view over the shared tables.
pub struct SwitchRuleView<'a> {
    pub bfs: &'a Table,
    pub iddfs: &'a Table,
    pub forwarding: &'a Table,
    pub wcmp_pre: &'a Table,
    pub hierarchy: Option<&'a DomainTables>,
}

impl RuleSet {
    pub fn for_switch(&self, s: SwitchId) -> Option<SwitchRuleView<'_>> {
        if !self.switches.contains(&s) {
            return None;
        }
        let hierarchy = self.hier.as_ref().map(|h| {
            let d = h.partition.domain_of(s).expect("switch has a domain");
            h.domains.get(&d).expect("domain has tables")
        });
        Some(SwitchRuleView {
            bfs: &self.bfs,
            iddfs: &self.iddfs,
            forwarding: &self.forwarding,
            wcmp_pre: &self.wcmp_pre,
            hierarchy,
        })
    }

    pub fn rule_count(&self) -> usize {
        let mut n = self.bfs.len() + self.iddfs.len() + self.forwarding.len() + self.wcmp_pre.len();
        if let Some(h) = &self.hier {
            for d in h.domains.values() {
                n += d.bfs.len() + d.iddfs.len() + d.domain_enter.len() + d.fail_map.len();
            }
        }
        n
    }
}

/// Policy inputs to compilation, already validated.
#[derive(Clone, Debug, Default)]
pub struct PolicyCompile {
    pub steer: Vec<PrefSteer>,
    pub wcmp: Vec<WcmpEntry>,
    /// Preference codes per wcmp entry, aligned with its next_hops.
    pub wcmp_codes: Vec<Vec<u8>>,
}

pub fn compile(
    t: &Topology,
    partition: Option<&DomainPartition>,
    policy: Option<&PolicyCompile>,
) -> Result<RuleSet, PartitionError> {
    let cap = max_len_cap_for(t.switches().len());
    let empty = PolicyCompile::default();
    let pc = policy.unwrap_or(&empty);
    let bfs = gen_bfs_rules(t);
    let iddfs = gen_iddfs_rules(t, cap, &pc.steer);
    let forwarding = gen_forwarding_rules(t);
    let mut wcmp_pre = Table::new(
        "wcmp_pre",
        vec![Field::Curr, Field::Fail, Field::FlowHash],
        Action::Noop,
    );
    for (entry, codes) in pc.wcmp.iter().zip(&pc.wcmp_codes) {
        for rule in gen_wcmp_pre_rules(t, entry, codes) {
            wcmp_pre.push(rule);
        }
    }
    wcmp_pre.freeze();
    let hier = match partition {
        Some(p) => Some(gen_hierarchy_rules(t, p)?),
        None => None,
    };
    Ok(RuleSet {
        topo_hash: t.structural_hash(),
        cap,
        bfs,
        iddfs,
        forwarding,
        wcmp_pre,
        masks: SpaceMasks::of(t),
        hier,
        switches: t.switches().to_vec(),
    })
}

fn key_json(field: Field, key: &MatchKey) -> Value {
    let mut m = Map::new();
    m.insert("field".into(), json!(field.name()));
    match key {
        MatchKey::Exact { value } => {
            m.insert("kind".into(), json!("exact"));
            m.insert("value".into(), json!(value));
        }
        MatchKey::Ternary { value, mask } => {
            m.insert("kind".into(), json!("ternary"));
            m.insert("value".into(), json!(value.to_hex()));
            m.insert("mask".into(), json!(mask.to_hex()));
        }
        MatchKey::Lpm { value, prefix_len } => {
            m.insert("kind".into(), json!("lpm"));
            m.insert("value".into(), json!(value));
            m.insert("prefix".into(), json!(prefix_len));
        }
        MatchKey::Wildcard => {
            m.insert("kind".into(), json!("wildcard"));
        }
    }
    Value::Object(m)
}

fn action_json(action: &Action) -> (Value, Value) {
    let name = json!(action.name());
    let params = match action {
        Action::PushNeighbor { n, n_visited } | Action::GotoNeighbor { n, n_visited } => {
            json!({"n": n.0, "n_visited": n_visited.to_hex()})
        }
        Action::Forward { next_hop } => json!({"next_hop": next_hop.0}),
        Action::FcpUpdate { bit: Some(b) } => json!({"bit": b.0}),
        Action::DomainEnter { domain } => json!({"domain": domain.0}),
        Action::WcmpMap { pref } => json!({"pref": pref}),
        _ => json!({}),
    };
    (name, params)
}

fn table_json(table: &Table) -> Value {
    let rules: Vec<Value> = table
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let keys: Vec<Value> = r.keys.iter().map(|(f, k)| key_json(*f, k)).collect();
            let (action, params) = action_json(&r.action);
            json!({"priority": i, "keys": keys, "action": action, "params": params})
        })
        .collect();
    json!({
        "name": table.name,
        "default_action": table.default_action.name(),
        "rules": rules,
    })
}

/// Serialize the full rule state as JSON with byte-stable ordering.
pub fn dump_json(rs: &RuleSet) -> String {
    let tables = vec![
        table_json(&rs.bfs),
        table_json(&rs.iddfs),
        table_json(&rs.forwarding),
        table_json(&rs.wcmp_pre),
    ];
    let mut hierarchy = Vec::new();
    if let Some(h) = &rs.hier {
        for (d, dt) in &h.domains {
            hierarchy.push(json!({
                "domain": d.0,
                "tables": [
                    table_json(&dt.bfs),
                    table_json(&dt.iddfs),
                    table_json(&dt.domain_enter),
                    table_json(&dt.fail_map),
                ],
            }));
        }
    }
    let doc = json!({
        "version": 1,
        "topology": rs.topo_hash,
        "max_len_cap": rs.cap,
        "tables": tables,
        "hierarchy": hierarchy,
    });
    serde_json::to_string_pretty(&doc).expect("rule dump serializes") + "\n"
}

/// Serialize the rules one switch would install: the shared flat tables plus
/// the hierarchy tables of its own domain. Returns None for unknown switches.
pub fn dump_switch_json(rs: &RuleSet, s: SwitchId) -> Option<String> {
    let view = rs.for_switch(s)?;
    let mut tables = vec![
        table_json(view.bfs),
        table_json(view.iddfs),
        table_json(view.forwarding),
        table_json(view.wcmp_pre),
    ];
    if let Some(dt) = view.hierarchy {
        tables.push(table_json(&dt.bfs));
        tables.push(table_json(&dt.iddfs));
        tables.push(table_json(&dt.domain_enter));
        tables.push(table_json(&dt.fail_map));
    }
    let doc = json!({
        "version": 1,
        "topology": rs.topo_hash,
        "switch": s.0,
        "max_len_cap": rs.cap,
        "tables": tables,
    });
    Some(serde_json::to_string_pretty(&doc).expect("rule dump serializes") + "\n")
}

#[derive(Debug, Deserialize)]
pub struct RuleDump {
    pub version: u32,
    pub topology: u32,
    pub max_len_cap: u16,
    pub tables: Vec<TableDump>,
    #[serde(default)]
    pub hierarchy: Vec<DomainDump>,
}

#[derive(Debug, Deserialize)]
pub struct TableDump {
    pub name: String,
    pub default_action: String,
    pub rules: Vec<RuleRow>,
}

#[derive(Debug, Deserialize)]
pub struct DomainDump {
    pub domain: u32,
    pub tables: Vec<TableDump>,
}

#[derive(Debug, Deserialize)]
pub struct RuleRow {
    pub priority: usize,
    pub action: String,
    pub keys: Vec<KeyRow>,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Deserialize)]
pub struct KeyRow {
    pub field: String,
    pub kind: String,
    #[serde(default)]
    pub value: Value,
    #[serde(default)]
    pub mask: Option<String>,
    #[serde(default)]
    pub prefix: Option<u8>,
}

pub fn parse_dump(s: &str) -> Result<RuleDump, serde_json::Error> {
    serde_json::from_str(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FieldValue;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    #[test]
    fn bfs_rule_counts_and_shape() {
        let t = diamond();
        let table = gen_bfs_rules(&t);
        // 4E + 2V + 2 with E=4 bidirectional links, V=4
        assert_eq!(table.len(), 26);
        // first rule: edge 1→2 (link 1), stack 0
        let r = &table.rules[0];
        assert_eq!(r.keys[0], (Field::Curr, MatchKey::Exact { value: 1 }));
        match &r.keys[1].1 {
            MatchKey::Ternary { value, mask } => {
                assert!(value.is_zero());
                assert_eq!(mask.ones().collect::<Vec<_>>(), vec![1]);
            }
            k => panic!("unexpected key {:?}", k),
        }
        match &r.action {
            Action::PushNeighbor { n, n_visited } => {
                assert_eq!(*n, SwitchId(2));
                assert_eq!(n_visited.ones().collect::<Vec<_>>(), vec![1, 6]);
            }
            a => panic!("unexpected action {:?}", a),
        }
        // pop rule for switch 1 matches all outgoing bits {1,3} set
        let pop = table
            .rules
            .iter()
            .find(|r| {
                matches!(r.action, Action::PopStack)
                    && r.exact_curr() == Some(1)
            })
            .unwrap();
        match &pop.keys[1].1 {
            MatchKey::Ternary { value, mask } => {
                assert_eq!(value.ones().collect::<Vec<_>>(), vec![1, 3]);
                assert_eq!(mask.ones().collect::<Vec<_>>(), vec![1, 3]);
            }
            k => panic!("unexpected key {:?}", k),
        }

        let single = Topology::new("edge", (1..=2).map(SwitchId), vec![(SwitchId(1), SwitchId(2))])
            .unwrap();
        assert_eq!(gen_bfs_rules(&single).len(), 10);
    }

    impl TableRule {
        fn exact_curr(&self) -> Option<i64> {
            self.keys.iter().find_map(|(f, k)| match (f, k) {
                (Field::Curr, MatchKey::Exact { value }) => Some(*value),
                _ => None,
            })
        }
    }

    #[test]
    fn iddfs_rule_counts_and_increase_shape() {
        let t = diamond();
        let table = gen_iddfs_rules(&t, 8, &[]);
        // E_dir·(4+8) + 2 increase rules
        assert_eq!(table.len(), 8 * 12 + 2);
        let inc = table
            .rules
            .iter()
            .find(|r| matches!(r.action, Action::IncreaseLength))
            .unwrap();
        assert_eq!(
            inc.keys,
            vec![
                (Field::Curr, MatchKey::Exact { value: 0 }),
                (Field::Len, MatchKey::Exact { value: -1 }),
                (Field::MaxLen, MatchKey::Exact { value: 4 }),
            ]
        );
    }

    #[test]
    fn forwarding_rules_forward_or_divert() {
        let t = diamond();
        let table = gen_forwarding_rules(&t);
        assert_eq!(table.len(), 8);
        let fail = BitVec::new(t.width());
        let probe = |curr: i64, next: i64, fail: &BitVec| {
            let (idx, action) = table.lookup(|f| match f {
                Field::Curr => FieldValue::Scalar(curr),
                Field::NextHop => FieldValue::Scalar(next),
                Field::Fail => FieldValue::Bits(fail),
                _ => FieldValue::Scalar(0),
            });
            (idx.is_some(), action.clone())
        };
        let (hit, action) = probe(2, 4, &fail);
        assert!(hit);
        assert_eq!(action, Action::Forward { next_hop: SwitchId(4) });
        // locally failed link 2→4 (id 5): miss → divert to traversal
        let mut failed = BitVec::new(t.width());
        failed.set(5);
        let (hit, action) = probe(2, 4, &failed);
        assert!(!hit);
        assert_eq!(action, Action::Noop);
        // non-neighbor next hop: miss
        let (hit, _) = probe(1, 4, &fail);
        assert!(!hit);
    }

    fn star4() -> Topology {
        Topology::new(
            "star4",
            (1..=4).map(SwitchId),
            vec![
                (SwitchId(1), SwitchId(2)),
                (SwitchId(1), SwitchId(3)),
                (SwitchId(1), SwitchId(4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn wcmp_rules_map_hash_ranges_by_weight() {
        let t = star4();
        let entry = WcmpEntry {
            switch: SwitchId(1),
            next_hops: vec![SwitchId(2), SwitchId(3), SwitchId(4)],
            weights: vec![1, 2, 1],
        };
        // ranks by link id: 2→code 00, 3→code 10, 4→code 11
        let codes = vec![0b00, 0b10, 0b11];
        let rules = gen_wcmp_pre_rules(&t, &entry, &codes);
        let mut table = Table::new(
            "wcmp_pre",
            vec![Field::Curr, Field::Fail, Field::FlowHash],
            Action::Noop,
        );
        for r in rules {
            table.push(r);
        }
        table.freeze();
        let probe = |hash: i64, fail: &BitVec| {
            let (_, action) = table.lookup(|f| match f {
                Field::Curr => FieldValue::Scalar(1),
                Field::Fail => FieldValue::Bits(fail),
                Field::FlowHash => FieldValue::Scalar(hash),
                _ => FieldValue::Scalar(0),
            });
            match action {
                Action::WcmpMap { pref } => Some(*pref),
                _ => None,
            }
        };
        let none = BitVec::new(t.width());
        // 1:2:1 → [0,¼)→00, [¼,¾)→10, [¾,1)→11
        assert_eq!(probe(0, &none), Some(0b00));
        assert_eq!(probe(16383, &none), Some(0b00));
        assert_eq!(probe(16384, &none), Some(0b10));
        assert_eq!(probe(49151, &none), Some(0b10));
        assert_eq!(probe(49152, &none), Some(0b11));
        assert_eq!(probe(65535, &none), Some(0b11));
        // middle hop failed (link 1→3 = id 3): actives 1:1 → [0,½)→00, [½,1)→11
        let mut mid_failed = BitVec::new(t.width());
        mid_failed.set(3);
        assert_eq!(probe(16384, &mid_failed), Some(0b00));
        assert_eq!(probe(32767, &mid_failed), Some(0b00));
        assert_eq!(probe(32768, &mid_failed), Some(0b11));
        // all failed → miss → default
        let mut all = BitVec::new(t.width());
        all.set(1);
        all.set(3);
        all.set(5);
        assert_eq!(probe(100, &all), None);
    }

    #[test]
    fn single_hop_wcmp_covers_whole_range() {
        let t = star4();
        let entry = WcmpEntry {
            switch: SwitchId(1),
            next_hops: vec![SwitchId(3)],
            weights: vec![1],
        };
        let rules = gen_wcmp_pre_rules(&t, &entry, &[0b10]);
        // one active subset, whole range in one prefix block
        assert_eq!(rules.len(), 1);
        match &rules[0].keys[2].1 {
            MatchKey::Ternary { mask, .. } => assert!(mask.is_zero(), "full-range wildcard"),
            k => panic!("unexpected key {:?}", k),
        }
    }

    #[test]
    fn dump_is_deterministic_and_parses_back() {
        let t = diamond();
        let assign: BTreeMap<SwitchId, usize> =
            [(SwitchId(1), 0), (SwitchId(2), 0), (SwitchId(3), 1), (SwitchId(4), 1)]
                .into_iter()
                .collect();
        let p = DomainPartition::from_assignment(&t, &assign).unwrap();
        let rs1 = compile(&t, Some(&p), None).unwrap();
        let rs2 = compile(&t, Some(&p), None).unwrap();
        let d1 = dump_json(&rs1);
        let d2 = dump_json(&rs2);
        assert_eq!(d1, d2);
        let parsed = parse_dump(&d1).unwrap();
        assert_eq!(parsed.version, 1);
        assert_eq!(parsed.topology, t.structural_hash());
        assert_eq!(parsed.tables.len(), 4);
        assert_eq!(parsed.tables[0].name, "bfs");
        assert_eq!(parsed.tables[0].rules.len(), 26);
        assert_eq!(parsed.hierarchy.len(), 2);
        let total: usize = parsed.tables.iter().map(|t| t.rules.len()).sum::<usize>()
            + parsed
                .hierarchy
                .iter()
                .flat_map(|d| d.tables.iter())
                .map(|t| t.rules.len())
                .sum::<usize>();
        assert_eq!(total, rs1.rule_count());
    }

    #[test]
    fn single_domain_hierarchy_degenerates_to_flat() {
        let t = diamond();
        let assign: BTreeMap<SwitchId, usize> =
            t.switches().iter().map(|s| (*s, 0usize)).collect();
        let p = DomainPartition::from_assignment(&t, &assign).unwrap();
        let h = gen_hierarchy_rules(&t, &p).unwrap();
        assert_eq!(h.domains.len(), 1);
        let dt = h.domains.values().next().unwrap();
        // domain graph has one node and no links: only pop/change rules there;
        // the intra block matches the flat table rule-for-rule
        let flat = gen_bfs_rules(&t);
        let intra_rules = dt
            .bfs
            .rules
            .iter()
            .filter(|r| {
                r.keys
                    .iter()
                    .any(|(f, k)| *f == Field::Hierarchy && *k == MatchKey::Exact { value: 0 })
            })
            .count();
        assert_eq!(intra_rules, flat.len());
        assert!(dt.aug.virtuals().is_empty());
        assert!(dt.fail_map.is_empty());
    }
}
