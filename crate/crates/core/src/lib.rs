//! Role assignment for multi-channel wireless mesh networks.
//!
//! Nodes are split into dominators (nuclei holding a fixed channel) and
//! dominatees (electrons switching between neighboring nuclei). The
//! dominator–dominatee links must keep the network connected, and among such
//! assignments we look for the one maximizing the minimum per-flow throughput
//! under any-to-any traffic.

pub mod clusterproto;
pub mod error;
pub mod flowlp;
pub mod heuristics;
pub mod netgraph;
pub mod optimizer;
pub mod roles;

pub use error::{Error, Result};
