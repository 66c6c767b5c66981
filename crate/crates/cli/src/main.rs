// SPDX-License-Identifier: Apache-2.0

//! Command-line frontend: compile rule files, trace single packets, run the
//! experiment harness, replay failure scripts, and cut domain partitions.
//!
//! Exit codes: 0 on success (packet delivered, where applicable), 2 on bad
//! input (unparsable topology, policy, script, or flags), 3 when a traced
//! packet is dropped (`route`, or `emulate --strict`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tabroute::experiment::{self, ExperimentConfig};
use tabroute::policy::{self, PolicyEntry};
use tabroute::ruleplane;
use tabroute::simnet::{self, DEFAULT_PATH_CAP, DEFAULT_STAGES};
use tabroute::topology::load_topology;
use tabroute::{
    build_network, DomainPartition, InjectSpec, Network, SwitchId, Topology, TraceRecord,
    TraversalMode,
};

#[derive(Parser)]
#[command(name = "tabroute", version, about = "Dataplane traversal simulator and rule compiler")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile match-action rules and write one file per switch plus a manifest
    GenRules(GenRulesArgs),
    /// Trace a single packet and print its walk
    Route(RouteArgs),
    /// Run a failure-scenario sweep and write metrics CSV plus summary JSON
    Experiment(ExperimentArgs),
    /// Replay a link-event script, injecting packets along the way
    Emulate(EmulateArgs),
    /// Cut a seeded random domain partition and print it as JSON
    Partition(PartitionArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Topology file (.json edge list or .graphml)
    #[arg(long)]
    topology: PathBuf,
    /// Traversal mode compiled into the packet
    #[arg(long, default_value = "iddfs", value_parser = parse_mode)]
    mode: TraversalMode,
    /// Policy file (JSON list of mbox/pref/wcmp entries)
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Pipeline stages available per pass
    #[arg(long, default_value_t = DEFAULT_STAGES)]
    stages: u32,
    /// Source-route slots carried in the header
    #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
    path_hops: u8,
}

#[derive(Args)]
struct GenRulesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Partition into this many random domains and include hierarchy tables
    #[arg(long)]
    domains: Option<usize>,
    /// Seed for the domain partition
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the rule files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RouteArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    src: u32,
    #[arg(long)]
    dst: u32,
    /// Failed link as a-b; repeatable
    #[arg(long = "fail", value_name = "A-B")]
    fails: Vec<String>,
    /// Partition into this many random domains and route hierarchically
    #[arg(long)]
    domains: Option<usize>,
    /// Seed for the domain partition
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flow identifier (feeds the wcmp hash)
    #[arg(long, default_value_t = 0)]
    flow_id: u32,
    /// Print per-visit detail and every fired rule
    #[arg(short, long)]
    verbose: bool,
    /// Print the final header as annotated hex
    #[arg(long)]
    dump_header: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Partition into this many random domains and route hierarchically
    #[arg(long)]
    domains: Option<usize>,
    /// Bidirectional links to fail per scenario
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Failure scenarios to sample (ignored when k = 0)
    #[arg(long, default_value_t = 20)]
    scenarios: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pair list file (one "src dst" per line) instead of all-to-all
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Output prefix; writes <out>.csv and <out>.summary.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Event script (JSON: link up/down and inject events)
    #[arg(long)]
    script: PathBuf,
    /// Exit 3 if any injected packet is dropped
    #[arg(long)]
    strict: bool,
    /// Print per-visit detail for every trace
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct PartitionArgs {
    /// Topology file (.json edge list or .graphml)
    #[arg(long)]
    topology: PathBuf,
    /// Number of domains to cut
    #[arg(long)]
    domains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the partition JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<TraversalMode, String> {
    TraversalMode::from_str(s)
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (e.g. piped into `head`)
    // instead of panicking on the broken-pipe write error.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::GenRules(a) => cmd_gen_rules(a),
        Cmd::Route(a) => cmd_route(a),
        Cmd::Experiment(a) => cmd_experiment(a),
        Cmd::Emulate(a) => cmd_emulate(a),
        Cmd::Partition(a) => cmd_partition(a),
    }
}

fn load_topo(path: &Path) -> Result<Topology> {
    load_topology(path).with_context(|| format!("loading topology {}", path.display()))
}

fn load_policies(path: Option<&Path>) -> Result<Vec<PolicyEntry>> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading policy file {}", p.display()))?;
            Ok(policy::parse_policies(&text)
                .with_context(|| format!("parsing policy file {}", p.display()))?)
        }
    }
}

fn parse_link_pair(s: &str) -> Result<(SwitchId, SwitchId)> {
    let (a, b) = s
        .split_once('-')
        .with_context(|| format!("bad link {s:?}, expected a-b"))?;
    let a: u32 = a.trim().parse().with_context(|| format!("bad link {s:?}"))?;
    let b: u32 = b.trim().parse().with_context(|| format!("bad link {s:?}"))?;
    Ok((SwitchId(a), SwitchId(b)))
}

fn cmd_gen_rules(a: GenRulesArgs) -> Result<ExitCode> {
    let t = load_topo(&a.common.topology)?;
    let entries = load_policies(a.common.policy.as_deref())?;
    let pc = policy::compile_all(&t, a.common.mode, &entries)?;
    let partition = match a.domains {
        Some(n) => Some(DomainPartition::random(&t, n, a.seed)?),
        None => None,
    };
    let rules = ruleplane::compile(&t, partition.as_ref(), Some(&pc))?;

    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating output directory {}", a.out.display()))?;
    let mut files = Vec::new();
    for s in t.switches() {
        let file = format!("switch_{:04}.json", s.0);
        let dump = ruleplane::dump_switch_json(&rules, *s).expect("switch is in the rule set");
        fs::write(a.out.join(&file), dump)?;
        let mut entry = json!({"switch": s.0, "file": file});
        if let Some(p) = &partition {
            entry["domain"] = json!(p.domain_of(*s).expect("partition is total").0);
        }
        files.push(entry);
    }
    let manifest = json!({
        "topology": t.name(),
        "structural_hash": rules.topo_hash,
        "switches": t.switches().len(),
        "links": t.link_count(),
        "domains": a.domains,
        "hierarchy_tables": rules.hier.is_some(),
        "rule_total": rules.rule_count(),
        "files": files,
    });
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    println!(
        "wrote {} rule files and manifest.json to {} ({} rules total)",
        t.switches().len(),
        a.out.display(),
        rules.rule_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_trace(trace: &TraceRecord, verbose: bool) {
    if trace.hops.is_empty() {
        println!("delivered in place (source is the destination)");
    } else {
        let walk: Vec<String> = trace.hops.iter().map(|s| s.0.to_string()).collect();
        println!("{}", walk.join(" -> "));
        if trace.delivered {
            println!(
                "delivered in {} hops, {} recirculations",
                trace.path_len(),
                trace.total_recirc
            );
        } else {
            let reason = trace.drop_reason.map(|r| format!("{r:?}")).unwrap_or_default();
            println!(
                "dropped at {} after {} hops: {reason}",
                trace.hops.last().expect("hops is non-empty"),
                trace.path_len()
            );
        }
    }
    if verbose {
        for v in &trace.visits {
            println!(
                "  compute @{}: {} applications, {} recirculations",
                v.switch, v.applications, v.recirculations
            );
            for f in &v.rules_fired {
                let idx = f.rule.map(|i| i.to_string()).unwrap_or_else(|| "default".into());
                println!(
                    "    pass {} stage {} {}[{}] -> {}",
                    f.pass, f.stage, f.table, idx, f.action
                );
            }
        }
    }
}

fn cmd_route(a: RouteArgs) -> Result<ExitCode> {
    let t = load_topo(&a.common.topology)?;
    let entries = load_policies(a.common.policy.as_deref())?;
    let src = SwitchId(a.src);
    let dst = SwitchId(a.dst);
    for s in [src, dst] {
        if !t.contains(s) {
            bail!("switch {s} is not in the topology");
        }
    }
    let pc = policy::compile_all(&t, a.common.mode, &entries)?;
    let flow = policy::compile_for_flow(&t, a.common.mode, src, dst, &entries)?;
    let partition = match a.domains {
        Some(n) => Some(DomainPartition::random(&t, n, a.seed)?),
        None => None,
    };
    let rules = Arc::new(ruleplane::compile(&t, partition.as_ref(), Some(&pc))?);
    let mut net = build_network(Arc::new(t), rules, a.common.stages, a.common.path_hops)?;
    for f in &a.fails {
        let (x, y) = parse_link_pair(f)?;
        net.set_link(x, y, false)?;
    }

    let mut spec = InjectSpec::new(src, dst, a.common.mode);
    spec.flow_id = a.flow_id;
    spec.policy = flow.block;
    spec.record_rules = a.verbose;
    let trace = net.run_packet(&spec)?;

    print_trace(&trace, a.verbose);
    if a.dump_header {
        println!("{}", trace.final_header.dump_annotated());
    }
    Ok(if trace.delivered { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn parse_pairs_file(path: &Path) -> Result<Vec<(SwitchId, SwitchId)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading pairs {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|w| !w.is_empty());
        let (a, b) = (it.next(), it.next());
        match (a, b, it.next()) {
            (Some(a), Some(b), None) => {
                let a: u32 = a.parse().with_context(|| format!("pairs line {}", i + 1))?;
                let b: u32 = b.parse().with_context(|| format!("pairs line {}", i + 1))?;
                pairs.push((SwitchId(a), SwitchId(b)));
            }
            _ => bail!("pairs line {}: expected \"src dst\"", i + 1),
        }
    }
    Ok(pairs)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<ExitCode> {
    let t = load_topo(&a.common.topology)?;
    let mut cfg = ExperimentConfig::new(a.common.mode);
    cfg.domains = a.domains;
    cfg.k = a.k;
    cfg.scenarios = a.scenarios;
    cfg.seed = a.seed;
    cfg.stages = a.common.stages;
    cfg.path_cap = a.common.path_hops;
    cfg.policies = load_policies(a.common.policy.as_deref())?;
    cfg.pairs = match &a.pairs {
        Some(p) => Some(parse_pairs_file(p)?),
        None => None,
    };

    let result = experiment::run_experiment(&t, &cfg)?;
    let csv_path = PathBuf::from(format!("{}.csv", a.out.display()));
    let summary_path = PathBuf::from(format!("{}.summary.json", a.out.display()));
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&csv_path, experiment::rows_to_csv(&result.rows))?;
    fs::write(&summary_path, experiment::summary_json(&result.summary))?;

    let s = &result.summary;
    println!(
        "{} rows -> {} | delivered {:.1}% | avg recirc {:.3} | avg stretch {}",
        result.rows.len(),
        csv_path.display(),
        100.0 * s.delivered as f64 / s.rows.max(1) as f64,
        s.avg_total_recirc,
        s.avg_stretch.map(|v| format!("{v:.3}")).unwrap_or_else(|| "NA".into()),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_emulate(a: EmulateArgs) -> Result<ExitCode> {
    let t = load_topo(&a.common.topology)?;
    let entries = load_policies(a.common.policy.as_deref())?;
    let pc = policy::compile_all(&t, a.common.mode, &entries)?;
    let rules = Arc::new(ruleplane::compile(&t, None, Some(&pc))?);
    let mut net: Network =
        build_network(Arc::new(t), rules, a.common.stages, a.common.path_hops)?;

    let text = fs::read_to_string(&a.script)
        .with_context(|| format!("reading script {}", a.script.display()))?;
    let script = simnet::parse_script(&text)
        .with_context(|| format!("parsing script {}", a.script.display()))?;
    let traces = simnet::run_script(&mut net, &script, a.common.mode, a.verbose)?;

    let mut drops = 0;
    for (i, tr) in traces.iter().enumerate() {
        print!("[{}] ", i);
        print_trace(tr, a.verbose);
        if !tr.delivered {
            drops += 1;
        }
    }
    println!("{} injections, {} dropped", traces.len(), drops);
    Ok(if a.strict && drops > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cmd_partition(a: PartitionArgs) -> Result<ExitCode> {
    let t = load_topo(&a.topology)?;
    let p = DomainPartition::random(&t, a.domains, a.seed)?;
    let text = p.to_json();
    match &a.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &text)?;
            println!("wrote {} domains to {}", p.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
