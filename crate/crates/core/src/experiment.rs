// SPDX-License-Identifier: Apache-2.0

//! Batch measurement runs: sample failure scenarios, route traffic pairs
//! through the simulated network concurrently, and emit a metrics table plus
//! a summary. Same seed in, byte-identical artifacts out.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{DomainPartition, PartitionError};
use crate::headers::TraversalMode;
use crate::oracle;
use crate::policy::{self, PolicyEntry, PolicyError};
use crate::ruleplane;
use crate::simnet::{build_network, InjectSpec, Network, SimError};
use crate::topology::{SwitchId, Topology};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: TraversalMode,
    /// Partition the topology into this many domains (hierarchical routing).
    pub domains: Option<usize>,
    /// Bidirectional links failed per scenario.
    pub k: usize,
    /// Scenario count; forced to 1 when k = 0 (all scenarios would be equal).
    pub scenarios: usize,
    pub seed: u64,
    pub stages: u32,
    pub path_cap: u8,
    /// Ordered (src, dst) traffic pairs; all distinct ordered pairs if None.
    pub pairs: Option<Vec<(SwitchId, SwitchId)>>,
    pub policies: Vec<PolicyEntry>,
}

impl ExperimentConfig {
    pub fn new(mode: TraversalMode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            domains: None,
            k: 0,
            scenarios: 1,
            seed: 0,
            stages: crate::simnet::DEFAULT_STAGES,
            path_cap: crate::simnet::DEFAULT_PATH_CAP,
            pairs: None,
            policies: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub src: SwitchId,
    pub dst: SwitchId,
    pub scenario: u32,
    pub delivered: bool,
    pub total_recirc: u32,
    /// Edges walked by the packet (0 when dropped at the source).
    pub hops: u32,
    pub oracle_len: Option<u32>,
    pub stretch: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioSummary {
    pub index: u32,
    /// Failed bidirectional links as "a-b" strings.
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub topology: String,
    pub mode: String,
    pub domains: Option<usize>,
    pub k: usize,
    pub seed: u64,
    pub stages: u32,
    pub rows: usize,
    pub delivered: usize,
    pub avg_total_recirc: f64,
    pub max_total_recirc: u32,
    pub avg_stretch: Option<f64>,
    /// (value, fraction of delivered rows with total_recirc ≤ value).
    pub recirc_cdf: Vec<(u32, f64)>,
    /// (value, fraction of stretch-bearing rows with stretch ≤ value).
    pub stretch_cdf: Vec<(f64, f64)>,
    pub scenarios: Vec<ScenarioSummary>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Sample `k` distinct bidirectional links for scenario `index`.
pub fn sample_failures(
    t: &Topology,
    k: usize,
    seed: u64,
    index: u32,
) -> Vec<(SwitchId, SwitchId)> {
    if k == 0 {
        return Vec::new();
    }
    let links: Vec<(SwitchId, SwitchId)> = t.bidirectional_links().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let mut picked: Vec<(SwitchId, SwitchId)> =
        rand::seq::index::sample(&mut rng, links.len(), k.min(links.len()))
            .into_iter()
            .map(|i| links[i])
            .collect();
    picked.sort();
    picked
}

fn all_ordered_pairs(t: &Topology) -> Vec<(SwitchId, SwitchId)> {
    let ss = t.switches();
    let mut pairs = Vec::with_capacity(ss.len() * (ss.len() - 1));
    for a in ss {
        for b in ss {
            if a != b {
                pairs.push((*a, *b));
            }
        }
    }
    pairs
}

pub fn run_experiment(
    t: &Topology,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult, ExperimentError> {
    let links_total = t.link_count();
    if cfg.k > links_total {
        return Err(ExperimentError::BadConfig(format!(
            "k={} exceeds {} bidirectional links",
            cfg.k, links_total
        )));
    }
    if cfg.scenarios == 0 {
        return Err(ExperimentError::BadConfig("need at least one scenario".into()));
    }
    let pairs = match &cfg.pairs {
        Some(p) => {
            for (a, b) in p {
                for s in [a, b] {
                    if !t.contains(*s) {
                        return Err(ExperimentError::BadConfig(format!(
                            "pair switch {s} not in topology"
                        )));
                    }
                }
            }
            p.clone()
        }
        None => all_ordered_pairs(t),
    };

    let partition = match cfg.domains {
        Some(n) => Some(DomainPartition::random(t, n, cfg.seed)?),
        None => None,
    };
    let pc = policy::compile_all(t, cfg.mode, &cfg.policies)?;
    let rules = Arc::new(ruleplane::compile(t, partition.as_ref(), Some(&pc))?);
    let topo = Arc::new(t.clone());

    let n_scenarios = if cfg.k == 0 { 1 } else { cfg.scenarios };
    let mut networks: Vec<Network> = Vec::with_capacity(n_scenarios);
    let mut scenario_sums = Vec::with_capacity(n_scenarios);
    for i in 0..n_scenarios {
        let failed = sample_failures(t, cfg.k, cfg.seed, i as u32);
        let mut net = build_network(
            Arc::clone(&topo),
            Arc::clone(&rules),
            cfg.stages,
            cfg.path_cap,
        )?;
        for (a, b) in &failed {
            net.set_link(*a, *b, false)?;
        }
        scenario_sums.push(ScenarioSummary {
            index: i as u32,
            failed: failed.iter().map(|(a, b)| format!("{a}-{b}")).collect(),
        });
        networks.push(net);
    }

    // per-flow policy blocks, resolved once
    let mut blocks = Vec::with_capacity(pairs.len());
    for (src, dst) in &pairs {
        let fp = policy::compile_for_flow(t, cfg.mode, *src, *dst, &cfg.policies)?;
        blocks.push(fp.block);
    }

    let jobs: Vec<(usize, usize)> = (0..n_scenarios)
        .flat_map(|si| (0..pairs.len()).map(move |pi| (si, pi)))
        .collect();
    let rows: Result<Vec<MetricsRow>, SimError> = jobs
        .par_iter()
        .map(|&(si, pi)| {
            let (src, dst) = pairs[pi];
            let net = &networks[si];
            let mut spec = InjectSpec::new(src, dst, cfg.mode);
            spec.policy = blocks[pi].clone();
            let trace = net.run_packet(&spec)?;
            let chain = blocks[pi].as_ref().map(|b| b.chain.as_slice()).unwrap_or(&[]);
            let oracle_len = if chain.is_empty() {
                oracle::shortest_active_path(t, src, dst, net.failed()).shortest_len
            } else {
                oracle::compliant_shortest_len(t, src, dst, chain, net.failed())
            };
            let hops = trace.path_len() as u32;
            let stretch = match (trace.delivered, oracle_len) {
                (true, Some(l)) if l > 0 => Some(hops as f64 / l as f64),
                _ => None,
            };
            Ok(MetricsRow {
                src,
                dst,
                scenario: si as u32,
                delivered: trace.delivered,
                total_recirc: trace.total_recirc,
                hops,
                oracle_len: oracle_len.map(|l| l as u32),
                stretch,
            })
        })
        .collect();
    let rows = rows?;

    let summary = summarize(t, cfg, &rows, scenario_sums);
    Ok(ExperimentResult { rows, summary })
}

fn summarize(
    t: &Topology,
    cfg: &ExperimentConfig,
    rows: &[MetricsRow],
    scenarios: Vec<ScenarioSummary>,
) -> Summary {
    let delivered: Vec<&MetricsRow> = rows.iter().filter(|r| r.delivered).collect();
    let avg_total_recirc = if delivered.is_empty() {
        0.0
    } else {
        delivered.iter().map(|r| r.total_recirc as f64).sum::<f64>() / delivered.len() as f64
    };
    let max_total_recirc = delivered.iter().map(|r| r.total_recirc).max().unwrap_or(0);

    let mut recircs: Vec<u32> = delivered.iter().map(|r| r.total_recirc).collect();
    recircs.sort_unstable();
    let recirc_cdf = cdf(&recircs);

    let mut stretches: Vec<f64> = rows.iter().filter_map(|r| r.stretch).collect();
    stretches.sort_by(f64::total_cmp);
    let avg_stretch = if stretches.is_empty() {
        None
    } else {
        Some(stretches.iter().sum::<f64>() / stretches.len() as f64)
    };
    let stretch_cdf = cdf(&stretches);

    Summary {
        topology: t.name().to_string(),
        mode: cfg.mode.name().to_string(),
        domains: cfg.domains,
        k: cfg.k,
        seed: cfg.seed,
        stages: cfg.stages,
        rows: rows.len(),
        delivered: delivered.len(),
        avg_total_recirc,
        max_total_recirc,
        avg_stretch,
        recirc_cdf,
        stretch_cdf,
        scenarios,
    }
}

fn cdf<T: PartialEq + Copy>(sorted: &[T]) -> Vec<(T, f64)> {
    let n = sorted.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        out.push((v, j as f64 / n as f64));
        i = j;
    }
    out
}

/// Render rows as CSV, stable byte-for-byte for a given row list.
pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["src", "dst", "scenario", "delivered", "total_recirc", "hops", "oracle_len", "stretch"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.src.0.to_string(),
            r.dst.0.to_string(),
            r.scenario.to_string(),
            r.delivered.to_string(),
            r.total_recirc.to_string(),
            r.hops.to_string(),
            r.oracle_len.map(|l| l.to_string()).unwrap_or_else(|| "NA".into()),
            r.stretch.map(|s| format!("{s:.4}")).unwrap_or_else(|| "NA".into()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flushed")).expect("utf8 csv")
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Topology {
        crate::topology::tests::diamond()
    }

    #[test]
    fn zero_failures_all_pairs_deliver_at_stretch_one() {
        let t = diamond();
        let cfg = ExperimentConfig::new(TraversalMode::Bfs);
        let res = run_experiment(&t, &cfg).unwrap();
        assert_eq!(res.rows.len(), 12);
        assert!(res.rows.iter().all(|r| r.delivered));
        assert!(res.rows.iter().all(|r| r.stretch == Some(1.0)));
        assert_eq!(res.summary.delivered, 12);
        assert_eq!(res.summary.avg_stretch, Some(1.0));
        assert_eq!(res.summary.recirc_cdf.last().map(|c| c.1), Some(1.0));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let t = diamond();
        let mut cfg = ExperimentConfig::new(TraversalMode::Iddfs);
        cfg.k = 1;
        cfg.scenarios = 4;
        cfg.seed = 42;
        let a = run_experiment(&t, &cfg).unwrap();
        let b = run_experiment(&t, &cfg).unwrap();
        assert_eq!(rows_to_csv(&a.rows), rows_to_csv(&b.rows));
        assert_eq!(summary_json(&a.summary), summary_json(&b.summary));
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = run_experiment(&t, &cfg2).unwrap();
        assert_ne!(summary_json(&a.summary), summary_json(&c.summary));
    }

    #[test]
    fn failure_scenarios_stay_oracle_consistent() {
        let t = diamond();
        let mut cfg = ExperimentConfig::new(TraversalMode::Iddfs);
        cfg.k = 2;
        cfg.scenarios = 8;
        cfg.seed = 7;
        let res = run_experiment(&t, &cfg).unwrap();
        assert_eq!(res.rows.len(), 8 * 12);
        for r in &res.rows {
            assert_eq!(r.delivered, r.oracle_len.is_some(), "delivery iff reachable: {r:?}");
        }
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let t = diamond();
        let a = sample_failures(&t, 2, 9, 0);
        let b = sample_failures(&t, 2, 9, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);
        assert!(sample_failures(&t, 0, 9, 0).is_empty());
    }

    #[test]
    fn csv_shape_and_na_cells() {
        let rows = vec![MetricsRow {
            src: SwitchId(1),
            dst: SwitchId(4),
            scenario: 0,
            delivered: false,
            total_recirc: 0,
            hops: 0,
            oracle_len: None,
            stretch: None,
        }];
        let csv = rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("src,dst,scenario,delivered,total_recirc,hops,oracle_len,stretch")
        );
        assert_eq!(lines.next(), Some("1,4,0,false,0,0,NA,NA"));
    }
}
