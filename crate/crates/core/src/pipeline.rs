// SPDX-License-Identifier: Apache-2.0

//! Match-action engine: tables with exact/ternary/lpm match kinds, one action
//! per application, a fixed stage budget per pass, and recirculation
//! accounting.
//!
//! All traversal state lives in the packet header, so `run_pass` is a pure
//! function of (rules, header): splitting the same applications across
//! passes of any size yields an identical final header, only the
//! recirculation counter differs.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::bits::BitVec;
use crate::domain::TraversalSpace;
use crate::headers::{PacketHeader, StackEntry, TraversalMode};
use crate::topology::{LinkId, SwitchId};

/// Header fields a table key can match on.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Field {
    Curr,
    Visited,
    StackSel,
    Len,
    MaxLen,
    Pref,
    Hierarchy,
    NextHop,
    Fail,
    FlowHash,
}

impl Field {
    pub fn name(&self) -> &'static str {
        match self {
            Field::Curr => "curr",
            Field::Visited => "visited_vec",
            Field::StackSel => "stack_sel",
            Field::Len => "len",
            Field::MaxLen => "max_len",
            Field::Pref => "pref",
            Field::Hierarchy => "hierarchy",
            Field::NextHop => "next_hop",
            Field::Fail => "fail_vec",
            Field::FlowHash => "flow_hash",
        }
    }
}

/// One per-field matcher. Ternary carries explicit value/mask bit vectors;
/// scalar fields use width-16 vectors (flow hash) so matching is uniform.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum MatchKey {
    Exact { value: i64 },
    Ternary { value: BitVec, mask: BitVec },
    Lpm { value: u8, prefix_len: u8 },
    Wildcard,
}

/// Field values extracted from a header during lookup.
#[derive(Clone, Copy, Debug)]
pub enum FieldValue<'a> {
    Scalar(i64),
    Bits(&'a BitVec),
}

/// Width of the pref field in bits (2-bit next-hop preference codes).
pub const PREF_BITS: u8 = 2;

fn key_matches(key: &MatchKey, value: &FieldValue) -> bool {
    match (key, value) {
        (MatchKey::Wildcard, _) => true,
        (MatchKey::Exact { value: k }, FieldValue::Scalar(v)) => k == v,
        (MatchKey::Ternary { value, mask }, FieldValue::Bits(b)) => {
            b.width() == mask.width() && b.matches_masked(value, mask)
        }
        (MatchKey::Ternary { value, mask }, FieldValue::Scalar(v)) => {
            // scalar ternary: compare low bits through the mask
            let mut field = BitVec::new(mask.width());
            for bit in 1..=mask.width() {
                if (*v >> (bit - 1)) & 1 == 1 {
                    field.set(bit);
                }
            }
            field.matches_masked(value, mask)
        }
        (MatchKey::Lpm { value, prefix_len }, FieldValue::Scalar(v)) => {
            if *prefix_len == 0 {
                return true;
            }
            let shift = PREF_BITS - prefix_len;
            (*v as u8) >> shift == value >> shift
        }
        _ => false,
    }
}

/// The twelve dataplane actions. Traversal actions mutate the header; the
/// rest are forwarding/bookkeeping artifacts interpreted by the network
/// model.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Action {
    PushNeighbor { n: SwitchId, n_visited: BitVec },
    PopStack,
    ChangeStack,
    GotoNeighbor { n: SwitchId, n_visited: BitVec },
    Backtrack,
    IncreaseLength,
    Forward { next_hop: SwitchId },
    FcpUpdate { bit: Option<LinkId> },
    NextTarget,
    DomainEnter { domain: SwitchId },
    WcmpMap { pref: u8 },
    Noop,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::PushNeighbor { .. } => "push_neighbor",
            Action::PopStack => "pop_stack",
            Action::ChangeStack => "change_stack",
            Action::GotoNeighbor { .. } => "goto_neighbor",
            Action::Backtrack => "backtrack",
            Action::IncreaseLength => "increase_length",
            Action::Forward { .. } => "forward",
            Action::FcpUpdate { .. } => "fcp_update",
            Action::NextTarget => "next_target",
            Action::DomainEnter { .. } => "domain_enter",
            Action::WcmpMap { .. } => "wcmp_map",
            Action::Noop => "noop",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TableRule {
    /// Ordered (field, matcher) pairs; priority is the insertion index.
    pub keys: Vec<(Field, MatchKey)>,
    pub action: Action,
}

impl TableRule {
    fn lpm_len(&self) -> u8 {
        self.keys
            .iter()
            .map(|(_, k)| match k {
                MatchKey::Lpm { prefix_len, .. } => *prefix_len,
                _ => 0,
            })
            .sum()
    }

    fn exact_value(&self, f: Field) -> Option<i64> {
        self.keys.iter().find_map(|(kf, k)| match (kf, k) {
            (kf, MatchKey::Exact { value }) if *kf == f => Some(*value),
            _ => None,
        })
    }
}

/// A match-action table. Immutable once frozen; lookups are pure.
///
/// Freezing builds a hash index over the fields on which *every* rule
/// carries an exact key (curr, stack_sel, len, ...), so a lookup scans only
/// the handful of rules sharing those values. The indexed result is
/// identical to a full priority scan (`lookup_linear`), which property
/// tests cross-check.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub fields: Vec<Field>,
    pub rules: Vec<TableRule>,
    pub default_action: Action,
    indexed_fields: Vec<Field>,
    index: HashMap<Vec<i64>, Vec<usize>>,
    frozen: bool,
}

impl Table {
    pub fn new(name: &str, fields: Vec<Field>, default_action: Action) -> Table {
        Table {
            name: name.to_string(),
            fields,
            rules: Vec::new(),
            default_action,
            indexed_fields: Vec::new(),
            index: HashMap::new(),
            frozen: false,
        }
    }

    pub fn push(&mut self, rule: TableRule) {
        debug_assert!(!self.frozen, "table {} already frozen", self.name);
        debug_assert!(
            rule.keys.iter().all(|(f, _)| self.fields.contains(f)),
            "rule key outside schema of table {}",
            self.name
        );
        self.rules.push(rule);
    }

    pub fn freeze(&mut self) {
        self.indexed_fields = self
            .fields
            .iter()
            .copied()
            .filter(|f| self.rules.iter().all(|r| r.exact_value(*f).is_some()))
            .collect();
        if !self.rules.is_empty() {
            for (i, rule) in self.rules.iter().enumerate() {
                let key: Vec<i64> = self
                    .indexed_fields
                    .iter()
                    .map(|f| rule.exact_value(*f).unwrap())
                    .collect();
                self.index.entry(key).or_default().push(i);
            }
        }
        self.frozen = true;
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Match resolution: among matching rules, the longest lpm prefix wins;
    /// ties (and lpm-free tables) fall to the lowest priority, i.e. the
    /// first inserted. Misses yield the default action.
    pub fn lookup<'a, F>(&'a self, get: F) -> (Option<usize>, &'a Action)
    where
        F: Fn(Field) -> FieldValue<'a>,
    {
        debug_assert!(self.frozen, "lookup on unfrozen table {}", self.name);
        let key: Vec<i64> = self
            .indexed_fields
            .iter()
            .map(|f| match get(*f) {
                FieldValue::Scalar(v) => v,
                FieldValue::Bits(_) => unreachable!("indexed fields are scalar"),
            })
            .collect();
        let Some(candidates) = self.index.get(&key) else {
            return (None, &self.default_action);
        };
        self.resolve(candidates.iter().copied(), &get)
    }

    /// Reference implementation: full scan in priority order.
    pub fn lookup_linear<'a, F>(&'a self, get: F) -> (Option<usize>, &'a Action)
    where
        F: Fn(Field) -> FieldValue<'a>,
    {
        self.resolve(0..self.rules.len(), &get)
    }

    fn resolve<'a, I, F>(&'a self, idxs: I, get: &F) -> (Option<usize>, &'a Action)
    where
        I: Iterator<Item = usize>,
        F: Fn(Field) -> FieldValue<'a>,
    {
        let mut best: Option<(u8, usize)> = None;
        for i in idxs {
            let rule = &self.rules[i];
            if rule.keys.iter().all(|(f, k)| key_matches(k, &get(*f))) {
                let lpm = rule.lpm_len();
                let better = match best {
                    None => true,
                    Some((blpm, bidx)) => lpm > blpm || (lpm == blpm && i < bidx),
                };
                if better {
                    best = Some((lpm, i));
                }
            }
        }
        match best {
            Some((_, i)) => (Some(i), &self.rules[i].action),
            None => (None, &self.default_action),
        }
    }
}

/// Ingress wiring the engine needs beyond the header: per-switch incoming
/// masks of the traversal space (visited-vector initialization on
/// increase_length / next_target).
#[derive(Clone, Debug)]
pub struct SpaceMasks {
    pub width: u32,
    in_mask: BTreeMap<SwitchId, BitVec>,
}

impl SpaceMasks {
    pub fn of<S: TraversalSpace + ?Sized>(space: &S) -> SpaceMasks {
        let in_mask = space
            .space_switches()
            .into_iter()
            .map(|s| (s, space.space_in_mask(s)))
            .collect();
        SpaceMasks { width: space.space_width(), in_mask }
    }

    pub fn in_mask(&self, s: SwitchId) -> &BitVec {
        self.in_mask.get(&s).expect("switch outside traversal space")
    }

    pub fn contains(&self, s: SwitchId) -> bool {
        self.in_mask.contains_key(&s)
    }

    pub fn switch_count(&self) -> usize {
        self.in_mask.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub stages_per_pass: u32,
    pub recirc_limit: u32,
    /// IDDFS depth-bound ceiling; doubling past it drops as Unreachable.
    pub max_len_cap: u16,
}

impl EngineConfig {
    pub fn new(stages_per_pass: u32, recirc_limit: u32, max_len_cap: u16) -> EngineConfig {
        assert!(stages_per_pass >= 1);
        EngineConfig { stages_per_pass, recirc_limit, max_len_cap }
    }

    pub fn with_cap(max_len_cap: u16) -> EngineConfig {
        EngineConfig::new(10, 64, max_len_cap)
    }
}

/// Depth-bound ceiling for a graph of `n` switches: the smallest power of
/// two ≥ 2n (and at least the initial bound 4). A depth-first search tree
/// never exceeds n−1, so doubling past this bound proves unreachability.
pub fn max_len_cap_for(n: usize) -> u16 {
    let need = (2 * n).max(4) as u16;
    need.next_power_of_two()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DropReason {
    Unreachable,
    RecircLimit,
    HopLimit,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Deliver,
    Forward(SwitchId),
    Drop(DropReason),
}

/// One fired rule: which table entry ran at which stage, and where the
/// search head stood before it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RuleFire {
    pub pass: u32,
    pub stage: u32,
    pub table: String,
    /// Rule index, or None for the table default.
    pub rule: Option<usize>,
    pub action: String,
    pub curr: SwitchId,
}

#[derive(Clone, Debug)]
pub struct ExecOutcome {
    pub verdict: Verdict,
    pub header: PacketHeader,
    pub recirculations: u32,
    pub applications: u32,
    /// Switches the traversal moved through (pops and gotos).
    pub explored: u32,
    pub rules_fired: Vec<RuleFire>,
}

/// `max_len` sentinel marking a computation that exhausted its depth bounds
/// and continues on the breadth table. No depth rule matches bound 0, and
/// the value travels the wire like any other bound.
pub const BREADTH_PHASE: u16 = 0;

/// Everything one traversal computation runs against. Immutable; shared
/// freely across concurrent packet simulations.
pub struct ExecEnv<'a> {
    pub mode: TraversalMode,
    pub traversal: &'a Table,
    /// Breadth-first rules for the same space: the fallback a deepening
    /// computation restarts on once its bounds outgrow the path slots.
    /// Absent, the depth bounds escalate to the cap as compiled.
    pub breadth: Option<&'a Table>,
    pub wcmp_pre: Option<&'a Table>,
    pub masks: &'a SpaceMasks,
    /// Failure vector expressed in the traversal space's link width.
    pub space_fail: &'a BitVec,
    pub cfg: EngineConfig,
}

impl<'a> ExecEnv<'a> {
    /// Initial visited vector for a traversal rooted at `src`:
    /// failed links ∪ links into the root.
    pub fn init_visited(&self, src: SwitchId) -> BitVec {
        let mut v = self.space_fail.clone();
        v.or_assign(self.masks.in_mask(src));
        v
    }

    /// The table the next application consults: the breadth fallback once
    /// the header entered that phase, the compiled traversal table
    /// otherwise.
    fn active_table(&self, h: &PacketHeader) -> &'a Table {
        match self.breadth {
            Some(b) if h.max_len == BREADTH_PHASE => b,
            _ => self.traversal,
        }
    }
}

pub struct PassResult {
    pub done: bool,
    pub verdict: Option<Verdict>,
    pub applications: u32,
}

fn found(h: &PacketHeader) -> bool {
    h.dst.contains(&h.curr)
}

fn chain_pending(h: &PacketHeader) -> bool {
    (h.policy.compute_cursor as usize) < h.policy.chain.len()
        || (!h.policy.chain.is_empty()
            && h.policy.compute_cursor as usize == h.policy.chain.len()
            && h.dst != vec![h.final_dst])
}

/// Advance the policy chain after the traversal reached the current target
/// set: re-root the search at the found member toward the next set (or the
/// final destination), keeping and extending the computed path.
pub fn next_target(env: &ExecEnv, h: &mut PacketHeader) {
    let here = h.curr;
    let idx = h.policy.compute_cursor as usize;
    let next_dst = if idx + 1 < h.policy.chain.len() {
        h.policy.chain[idx + 1].clone()
    } else {
        vec![h.final_dst]
    };
    h.policy.compute_cursor += 1;
    let visited = env.init_visited(here);
    h.begin_traversal(here, next_dst, visited);
}

/// Resolve the 2-bit preference field before a traversal application:
/// packet-carried static preferences win; otherwise the weighted-cost
/// preprocessing table maps the flow hash to a code; otherwise 0.
fn resolve_pref(env: &ExecEnv, h: &mut PacketHeader) {
    if h.policy.is_plain() {
        return;
    }
    if let Some(p) = h.policy.static_pref(h.curr) {
        h.pref = p;
        return;
    }
    if h.policy.wcmp_for(h.curr).is_some() {
        if let Some(table) = env.wcmp_pre {
            let hash = crate::policy::flow_hash(h.final_dst, h.flow_id) as i64;
            let curr = h.curr.0 as i64;
            let (_, action) = table.lookup(|f| match f {
                Field::Curr => FieldValue::Scalar(curr),
                Field::Fail => FieldValue::Bits(&h.fail),
                Field::FlowHash => FieldValue::Scalar(hash),
                _ => FieldValue::Scalar(0),
            });
            if let Action::WcmpMap { pref } = action {
                h.pref = *pref;
                return;
            }
        }
    }
    h.pref = 0;
}

fn traversal_lookup<'a>(env: &'a ExecEnv, h: &'a PacketHeader) -> (Option<usize>, &'a Action) {
    env.active_table(h).lookup(|f| match f {
        Field::Curr => FieldValue::Scalar(h.curr.0 as i64),
        Field::Visited => FieldValue::Bits(&h.visited),
        Field::StackSel => FieldValue::Scalar(h.stack_sel as i64),
        Field::Len => FieldValue::Scalar(h.len as i64),
        Field::MaxLen => FieldValue::Scalar(h.max_len as i64),
        Field::Pref => FieldValue::Scalar(h.pref as i64),
        Field::Hierarchy => FieldValue::Scalar(if h.hierarchy() { 1 } else { 0 }),
        _ => FieldValue::Scalar(0),
    })
}

/// Execute one traversal action. Returns a drop reason when the action
/// proves the target unreachable.
pub fn apply_action(env: &ExecEnv, action: &Action, h: &mut PacketHeader) -> Option<DropReason> {
    match action {
        Action::PushNeighbor { n, n_visited } => {
            h.visited.or_assign(n_visited);
            let entry = StackEntry { switch: *n, path: h.path.extended(*n) };
            h.bfs_stacks[1 - h.stack_sel as usize].push(entry);
            None
        }
        Action::PopStack => {
            match h.bfs_stacks[h.stack_sel as usize].pop() {
                Some(e) => {
                    h.curr = e.switch;
                    h.path = e.path;
                }
                // stack bottom: the sticky sentinel
                None => h.curr = SwitchId(0),
            }
            None
        }
        Action::ChangeStack => {
            h.stack_sel ^= 1;
            match h.bfs_stacks[h.stack_sel as usize].pop() {
                Some(e) => {
                    h.curr = e.switch;
                    h.path = e.path;
                    None
                }
                // both stacks exhausted: nothing left to explore
                None => {
                    h.curr = SwitchId(0);
                    Some(DropReason::Unreachable)
                }
            }
        }
        Action::GotoNeighbor { n, n_visited } => {
            h.visited.or_assign(n_visited);
            h.dfs_stack.push(h.curr);
            h.curr = *n;
            h.len += 1;
            h.path.set_hop(h.path_base as usize + h.len as usize, *n);
            None
        }
        Action::Backtrack => {
            let old_len = h.len;
            h.len -= 1;
            if old_len >= 0 {
                h.path.clear_from(h.path_base as usize + old_len as usize);
            }
            h.curr = h.dfs_stack.pop().unwrap_or(SwitchId(0));
            None
        }
        Action::IncreaseLength => {
            if h.max_len >= env.cfg.max_len_cap {
                // doubling past the ceiling proves exhaustion
                return Some(DropReason::Unreachable);
            }
            // A depth bound beyond the path slots finds routes the header
            // cannot carry whole, and a truncated depth route gives no
            // progress guarantee: its recompute can revisit the same
            // switch with the same header and orbit until the hop limit.
            // Once the bounds that fit are exhausted — and the search is
            // not yet provably complete (a depth tree never exceeds V−1,
            // so larger bounds change nothing) — restart the computation
            // on the breadth rules: their legs follow shortest routes, so
            // even a truncated leg strictly shortens what remains.
            let slots = (h.path.cap() as i64 - h.path_base as i64).max(0);
            let complete = h.max_len as usize + 1 >= env.masks.switch_count();
            if env.breadth.is_some() && !complete && (h.max_len as i64) * 2 > slots {
                h.max_len = BREADTH_PHASE;
                h.len = 0;
                h.stack_sel = 0;
                h.curr = h.traversal_src;
                h.visited = env.init_visited(h.traversal_src);
                h.path.truncate(h.path_base as usize);
                h.dfs_stack.clear();
                h.bfs_stacks = [Vec::new(), Vec::new()];
                return None;
            }
            h.max_len *= 2;
            h.len = 0;
            h.curr = h.traversal_src;
            h.visited = env.init_visited(h.traversal_src);
            h.path.truncate(h.path_base as usize);
            h.dfs_stack.clear();
            None
        }
        // non-traversal artifacts: inert inside the traversal loop
        _ => None,
    }
}

/// Run one pipeline pass: up to stages_per_pass traversal applications,
/// each guarded by curr ∉ dst, with policy-chain advancement spliced in.
pub fn run_pass(
    env: &ExecEnv,
    h: &mut PacketHeader,
    pass: u32,
    explored: &mut u32,
    trace: Option<&mut Vec<RuleFire>>,
) -> PassResult {
    let mut applications = 0u32;
    let mut sink = trace;
    for stage in 0..env.cfg.stages_per_pass {
        if found(h) {
            if chain_pending(h) {
                // one stage re-roots the traversal toward the next target
                if let Some(t) = sink.as_deref_mut() {
                    t.push(RuleFire {
                        pass,
                        stage,
                        table: "next_target".into(),
                        rule: None,
                        action: "next_target".into(),
                        curr: h.curr,
                    });
                }
                next_target(env, h);
                applications += 1;
                continue;
            }
            return PassResult { done: true, verdict: None, applications };
        }
        if env.mode == TraversalMode::Iddfs {
            resolve_pref(env, h);
        }
        let curr_before = h.curr;
        let table_name = env.active_table(h).name.clone();
        let (idx, action) = traversal_lookup(env, h);
        let action = action.clone();
        if let Some(t) = sink.as_deref_mut() {
            t.push(RuleFire {
                pass,
                stage,
                table: table_name,
                rule: idx,
                action: action.name().into(),
                curr: curr_before,
            });
        }
        match &action {
            Action::PopStack | Action::ChangeStack | Action::GotoNeighbor { .. } => {
                *explored += 1
            }
            _ => {}
        }
        let dropped = apply_action(env, &action, h);
        applications += 1;
        if let Some(reason) = dropped {
            return PassResult {
                done: true,
                verdict: Some(Verdict::Drop(reason)),
                applications,
            };
        }
    }
    let done = found(h) && !chain_pending(h);
    PassResult { done, verdict: None, applications }
}

/// Loop passes with recirculation accounting until the traversal completes.
/// Terminal verdict: Deliver when the computed route has no hop to take
/// (the computing switch is the destination), Forward(first hop) otherwise.
pub fn run_to_completion(
    env: &ExecEnv,
    mut header: PacketHeader,
    record_trace: bool,
) -> ExecOutcome {
    let mut rules_fired = Vec::new();
    let mut applications = 0u32;
    let mut recirculations = 0u32;
    let mut explored = 0u32;
    let mut pass = 0u32;
    loop {
        let trace = if record_trace { Some(&mut rules_fired) } else { None };
        let res = run_pass(env, &mut header, pass, &mut explored, trace);
        applications += res.applications;
        if let Some(verdict) = res.verdict {
            return ExecOutcome {
                verdict,
                header,
                recirculations,
                applications,
                explored,
                rules_fired,
            };
        }
        if res.done {
            let verdict = match header.path.get(header.path_cursor as usize) {
                Some(next) => Verdict::Forward(next),
                None => Verdict::Deliver,
            };
            return ExecOutcome {
                verdict,
                header,
                recirculations,
                applications,
                explored,
                rules_fired,
            };
        }
        recirculations += 1;
        pass += 1;
        if recirculations > env.cfg.recirc_limit {
            return ExecOutcome {
                verdict: Verdict::Drop(DropReason::RecircLimit),
                header,
                recirculations,
                applications,
                explored,
                rules_fired,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headers::PacketHeader;
    use crate::ruleplane;
    use crate::topology::Topology;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    fn env<'a>(
        mode: TraversalMode,
        table: &'a Table,
        masks: &'a SpaceMasks,
        fail: &'a BitVec,
        cfg: EngineConfig,
    ) -> ExecEnv<'a> {
        ExecEnv { mode, traversal: table, breadth: None, wcmp_pre: None, masks, space_fail: fail, cfg }
    }

    fn run(
        t: &Topology,
        mode: TraversalMode,
        src: u32,
        dst: u32,
        fail_pairs: &[(u32, u32)],
        stages: u32,
    ) -> ExecOutcome {
        let mut fail = BitVec::new(t.width());
        for (a, b) in fail_pairs {
            let (f, r) = t.link_pair(SwitchId(*a), SwitchId(*b)).unwrap();
            fail.set(f.0);
            fail.set(r.0);
        }
        let cap = max_len_cap_for(t.switches().len());
        let table = match mode {
            TraversalMode::Bfs => ruleplane::gen_bfs_rules(t),
            TraversalMode::Iddfs => ruleplane::gen_iddfs_rules(t, cap, &[]),
        };
        let masks = SpaceMasks::of(t);
        let cfg = EngineConfig::new(stages, 64, cap);
        let e = env(mode, &table, &masks, &fail, cfg);
        let h = PacketHeader::init(t, SwitchId(src), SwitchId(dst), fail.clone(), 8);
        run_to_completion(&e, h, true)
    }

    fn hops(out: &ExecOutcome) -> Vec<u32> {
        out.header.path.hops().iter().map(|s| s.0).collect()
    }

    fn actions(out: &ExecOutcome) -> Vec<String> {
        out.rules_fired.iter().map(|f| f.action.clone()).collect()
    }

    #[test]
    fn bfs_diamond_explores_and_routes() {
        let t = diamond();
        let out = run(&t, TraversalMode::Bfs, 1, 4, &[], 10);
        assert_eq!(out.applications, 8);
        assert_eq!(out.recirculations, 0);
        // LIFO pop order explores 3 first; route 1→3→4
        assert_eq!(hops(&out), vec![3, 4]);
        assert_eq!(out.verdict, Verdict::Forward(SwitchId(3)));
        assert_eq!(
            actions(&out),
            vec![
                "push_neighbor",
                "push_neighbor",
                "pop_stack",
                "change_stack",
                "push_neighbor",
                "pop_stack",
                "pop_stack",
                "change_stack",
            ]
        );
    }

    #[test]
    fn recirculation_is_transparent() {
        let t = diamond();
        let base = run(&t, TraversalMode::Bfs, 1, 4, &[], 10);
        for stages in [1u32, 3, 7] {
            let out = run(&t, TraversalMode::Bfs, 1, 4, &[], stages);
            assert_eq!(out.header, base.header, "stages={}", stages);
            assert_eq!(out.applications, 8);
            // ceil(8/stages) − 1
            assert_eq!(out.recirculations, (8 + stages - 1) / stages - 1);
        }
    }

    #[test]
    fn iddfs_diamond_finds_short_route() {
        let t = diamond();
        let out = run(&t, TraversalMode::Iddfs, 1, 4, &[], 10);
        assert_eq!(out.applications, 2);
        assert_eq!(hops(&out), vec![2, 4]);
        assert_eq!(out.header.max_len, 4, "bound never increased");
        assert_eq!(out.verdict, Verdict::Forward(SwitchId(2)));
    }

    #[test]
    fn iddfs_routes_around_failure() {
        let t = diamond();
        let out = run(&t, TraversalMode::Iddfs, 1, 4, &[(1, 2)], 10);
        assert_eq!(hops(&out), vec![3, 4]);
        assert_eq!(out.applications, 2);
    }

    #[test]
    fn bfs_unreachable_exhausts_both_stacks() {
        let t = diamond();
        let out = run(&t, TraversalMode::Bfs, 1, 4, &[(2, 4), (3, 4)], 10);
        assert_eq!(out.verdict, Verdict::Drop(DropReason::Unreachable));
        assert_eq!(out.applications, 7);
        assert_eq!(actions(&out).last().map(String::as_str), Some("change_stack"));
    }

    #[test]
    fn iddfs_unreachable_drops_at_cap() {
        let t = diamond();
        let out = run(&t, TraversalMode::Iddfs, 1, 4, &[(2, 4), (3, 4)], 10);
        assert_eq!(out.verdict, Verdict::Drop(DropReason::Unreachable));
        // per bound: goto 2, backtrack, goto 3, backtrack, backtrack, increase
        // bounds 4 and 8; the increase at the cap fires, then drops
        assert_eq!(out.applications, 12);
        assert_eq!(actions(&out).last().map(String::as_str), Some("increase_length"));
        assert_eq!(out.recirculations, 1);
    }

    #[test]
    fn src_equals_dst_is_immediate_delivery() {
        let t = diamond();
        let out = run(&t, TraversalMode::Bfs, 2, 2, &[], 10);
        assert_eq!(out.applications, 0);
        assert_eq!(out.verdict, Verdict::Deliver);
    }

    #[test]
    fn lpm_longest_prefix_wins_ties_by_priority() {
        let mut table = Table::new(
            "pref_demo",
            vec![Field::Curr, Field::Pref],
            Action::Backtrack,
        );
        for (n, pref) in [(2u32, None), (3, None), (4, None), (3, Some(0b10)), (4, Some(0b11))] {
            let mut keys = vec![(Field::Curr, MatchKey::Exact { value: 1 })];
            keys.push((
                Field::Pref,
                match pref {
                    Some(v) => MatchKey::Lpm { value: v, prefix_len: 2 },
                    None => MatchKey::Lpm { value: 0, prefix_len: 0 },
                },
            ));
            table.push(TableRule {
                keys,
                action: Action::GotoNeighbor { n: SwitchId(n), n_visited: BitVec::new(8) },
            });
        }
        table.freeze();
        let probe = |pref: i64| {
            let (idx, action) = table.lookup(|f| match f {
                Field::Curr => FieldValue::Scalar(1),
                _ => FieldValue::Scalar(pref),
            });
            let (lidx, laction) = table.lookup_linear(|f| match f {
                Field::Curr => FieldValue::Scalar(1),
                _ => FieldValue::Scalar(pref),
            });
            assert_eq!((idx, action), (lidx, laction), "index matches linear scan");
            match action {
                Action::GotoNeighbor { n, .. } => (idx.unwrap(), n.0),
                _ => panic!("unexpected action"),
            }
        };
        // exact code → the duplicated rule wins over all prefix-0 rules
        assert_eq!(probe(0b11), (4, 4));
        assert_eq!(probe(0b10), (3, 3));
        // default code → first-inserted wildcard rule
        assert_eq!(probe(0b00), (0, 2));
        // unmapped code → no exact rule; wildcard tie again
        assert_eq!(probe(0b01), (0, 2));
    }

    #[test]
    fn empty_table_returns_default() {
        let mut table = Table::new("empty", vec![Field::Curr], Action::Backtrack);
        table.freeze();
        let (idx, action) = table.lookup(|_| FieldValue::Scalar(7));
        assert_eq!(idx, None);
        assert_eq!(action, &Action::Backtrack);
    }
}
