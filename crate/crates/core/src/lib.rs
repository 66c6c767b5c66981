// SPDX-License-Identifier: Apache-2.0

//! Routing as match-action table rules: graph traversals (breadth-first and
//! iterative-deepening depth-first) compiled into switch pipeline tables and
//! executed entirely in the dataplane, with failure knowledge carried in
//! packet headers instead of converged control-plane state.
//!
//! The crate splits into:
//! - [`topology`], [`bits`]: graphs, directed link ids, failure bit vectors;
//! - [`headers`]: the packet header every bit of routing state lives in;
//! - [`pipeline`]: the staged match-action engine with recirculation;
//! - [`ruleplane`]: rule generation — traversal tables, forwarding,
//!   weighted-multipath preprocessing, hierarchical domain tables;
//! - [`domain`]: domain partitions and the augmented per-domain topologies;
//! - [`fcp`]: failure-carrying ingress and the follow/divert decision;
//! - [`policy`]: middlebox chains, preferences, weighted splits;
//! - [`simnet`]: the network executor and event scripts;
//! - [`oracle`]: brute-force reference answers;
//! - [`experiment`]: seeded batch runs with CSV/JSON artifacts.

pub mod bits;
pub mod domain;
pub mod experiment;
pub mod fcp;
pub mod headers;
pub mod oracle;
pub mod pipeline;
pub mod policy;
pub mod ruleplane;
pub mod simnet;
pub mod topology;

pub use bits::BitVec;
pub use domain::{DomainId, DomainPartition};
pub use headers::{PacketHeader, Path, PolicyBlock, TraversalMode};
pub use pipeline::{Action, DropReason, EngineConfig, Field, MatchKey, Table};
pub use ruleplane::RuleSet;
pub use simnet::{build_network, InjectSpec, Network, TraceRecord};
pub use topology::{LinkId, SwitchId, Topology};
