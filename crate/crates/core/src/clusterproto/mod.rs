//! Cluster-tree decomposition and the divide-and-conquer role assignment.
//!
//! The spanning tree rooted at the minimum id is cut into clusters of radius
//! `D`: leaders sit at depths that are multiples of `D`, and each leader's
//! cluster holds the nodes below it down to (and including) the next leaders.
//! Leaders get their role from a depth-parity rule, which lets every cluster
//! be optimized on its own while keeping the union a valid r-WCDS.

mod sim;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netgraph::{bfs_tree, components, NetworkGraph, NodeId};
use crate::optimizer::{assign_cluster_roles, BnBResult, FixedRoles};
use crate::roles::{Role, RoleAssignment};

pub use sim::{
    run_protocol, run_protocol_with_cache, ChurnEvent, ChurnKind, ClusterSnapshot, Fragment, HelloMessage, NeighborEntry,
    NodeState, Note, ProtocolConfig, ProtocolOutcome, ProtocolParams, RolePayload, Simulator,
    SolveCache, TraceEvent, TraceLine,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub leader: NodeId,
    /// Sorted, leader included.
    pub members: Vec<NodeId>,
    /// Index of the parent cluster in [`ClusterTree::clusters`].
    pub parent_cluster: Option<usize>,
    /// Depth in the cluster tree, 0 for the root cluster.
    pub level: usize,
}

/// Spanning tree plus its cut into clusters.
///
/// Nodes outside the tree (other components) have no depth and belong to no
/// cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTree {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    depth: Vec<Option<usize>>,
    radius: usize,
    clusters: Vec<Cluster>,
    /// Cluster each node takes its role from.
    home: Vec<Option<usize>>,
}

impl ClusterTree {
    /// Cuts the tree given by `parent` into clusters of radius `radius`.
    /// Nodes whose parent chain does not reach `root` must have no parent;
    /// they are left out of the tree.
    pub fn from_parents(root: NodeId, parent: Vec<Option<NodeId>>, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::MalformedTree("cluster radius must be positive".into()));
        }
        let n = parent.len();
        if root >= n || parent[root].is_some() {
            return Err(Error::MalformedTree(format!("bad root {root}")));
        }
        let depth = chain_depths(root, &parent)?;
        let mut children = vec![Vec::new(); n];
        for u in 0..n {
            if let (Some(p), Some(_)) = (parent[u], depth[u]) {
                children[p].push(u);
            }
        }
        let is_leader = |u: NodeId| {
            u == root || depth[u].is_some_and(|d| d % radius == 0 && !children[u].is_empty())
        };

        // Leaders in breadth-first order, so parents come before children.
        let mut order: Vec<NodeId> = (0..n).filter(|&u| depth[u].is_some()).collect();
        order.sort_by_key(|&u| (depth[u], u));
        let mut clusters: Vec<Cluster> = Vec::new();
        let mut cluster_of_leader = vec![None; n];
        // Nearest leader strictly above each node.
        let mut above: Vec<Option<NodeId>> = vec![None; n];
        let mut home = vec![None; n];
        for &u in &order {
            if u != root {
                let p = parent[u].unwrap();
                above[u] = Some(if is_leader(p) { p } else { above[p].unwrap() });
            }
            if is_leader(u) {
                let parent_cluster = above[u].map(|a| cluster_of_leader[a].unwrap());
                let level = parent_cluster.map_or(0, |c: usize| clusters[c].level + 1);
                cluster_of_leader[u] = Some(clusters.len());
                clusters.push(Cluster {
                    leader: u,
                    members: vec![u],
                    parent_cluster,
                    level,
                });
            }
            home[u] = match above[u] {
                Some(a) => cluster_of_leader[a],
                None => cluster_of_leader[u],
            };
            if let Some(a) = above[u] {
                clusters[cluster_of_leader[a].unwrap()].members.push(u);
            }
        }
        for c in &mut clusters {
            c.members.sort_unstable();
        }
        Ok(ClusterTree {
            root,
            parent,
            depth,
            radius,
            clusters,
            home,
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn parent(&self, u: NodeId) -> Option<NodeId> {
        self.parent[u]
    }

    pub fn parents(&self) -> &[Option<NodeId>] {
        &self.parent
    }

    pub fn depth(&self, u: NodeId) -> Option<usize> {
        self.depth[u]
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.depth.get(u).is_some_and(Option::is_some)
    }

    /// Tree nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.depth.len()).filter(|&u| self.depth[u].is_some())
    }

    /// Clusters in breadth-first order of their leaders; index 0 is the root
    /// cluster.
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn is_leader(&self, u: NodeId) -> bool {
        self.clusters.iter().any(|c| c.leader == u)
    }

    pub fn leaders(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.clusters.iter().map(|c| c.leader)
    }

    /// Index of the cluster led by `u`.
    pub fn cluster_of_leader(&self, u: NodeId) -> Option<usize> {
        self.clusters.iter().position(|c| c.leader == u)
    }

    /// Cluster that assigns `u` its role: the cluster it is a plain member of,
    /// or its own cluster for the root.
    pub fn home_cluster(&self, u: NodeId) -> Option<usize> {
        self.home.get(u).copied().flatten()
    }

    /// Indices of all clusters containing `u`.
    pub fn memberships(&self, u: NodeId) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&i| self.clusters[i].members.binary_search(&u).is_ok())
            .collect()
    }

    /// One `cluster <leader> <member...>` line per cluster.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            let _ = write!(out, "cluster {}", c.leader);
            for m in &c.members {
                let _ = write!(out, " {m}");
            }
            out.push('\n');
        }
        out
    }

    /// Checks the structural rules of a cluster tree and returns every
    /// violation found (empty when well formed).
    pub fn check_invariants(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let children = {
            let mut ch = vec![0usize; self.parent.len()];
            for u in self.nodes() {
                if let Some(p) = self.parent[u] {
                    ch[p] += 1;
                }
            }
            ch
        };

        for u in self.nodes() {
            let m = self.memberships(u);
            match m.len() {
                1 => {}
                2 => {
                    if !m.iter().any(|&c| self.clusters[c].leader == u) {
                        errs.push(format!("node {u} is in two clusters without leading one"));
                    }
                }
                k => errs.push(format!("node {u} is in {k} clusters")),
            }
            let should_lead = u == self.root
                || (self.depth[u].unwrap() % self.radius == 0 && children[u] > 0);
            if should_lead != self.is_leader(u) {
                errs.push(format!("node {u} has the wrong leader status"));
            }
        }

        for (i, a) in self.clusters.iter().enumerate() {
            for b in &self.clusters[i + 1..] {
                let shared = a.members.iter().filter(|u| b.members.binary_search(u).is_ok()).count();
                if shared > 1 {
                    errs.push(format!("clusters {} and {} share {shared} nodes", a.leader, b.leader));
                }
            }
            for &u in &a.members {
                if !self.is_tree_ancestor_within(a.leader, u, self.radius) {
                    errs.push(format!("node {u} is not within {} tree hops below leader {}", self.radius, a.leader));
                }
            }
        }

        for (i, c) in self.clusters.iter().enumerate() {
            match c.parent_cluster {
                None if i != 0 || c.leader != self.root => {
                    errs.push(format!("cluster {} has no parent", c.leader))
                }
                Some(p) if p >= i || self.clusters[p].level + 1 != c.level => {
                    errs.push(format!("cluster {} has a bad parent link", c.leader))
                }
                Some(p) if self.clusters[p].members.binary_search(&c.leader).is_err() => {
                    errs.push(format!("leader {} missing from its parent cluster", c.leader))
                }
                _ => {}
            }
        }
        errs
    }

    fn is_tree_ancestor_within(&self, a: NodeId, u: NodeId, hops: usize) -> bool {
        let mut v = u;
        for _ in 0..=hops {
            if v == a {
                return true;
            }
            match self.parent[v] {
                Some(p) => v = p,
                None => return false,
            }
        }
        false
    }
}

fn chain_depths(root: NodeId, parent: &[Option<NodeId>]) -> Result<Vec<Option<usize>>> {
    let n = parent.len();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[root] = Some(0);
    for start in 0..n {
        if parent[start].is_none() {
            continue;
        }
        let mut path = Vec::new();
        let mut u = start;
        while depth[u].is_none() {
            if path.len() > n {
                return Err(Error::MalformedTree(format!("cycle through node {start}")));
            }
            path.push(u);
            u = match parent[u] {
                Some(p) if p < n => p,
                Some(p) => return Err(Error::MalformedTree(format!("parent {p} out of range"))),
                None => {
                    return Err(Error::MalformedTree(format!(
                        "node {start} does not reach root {root}"
                    )))
                }
            };
        }
        let mut d = depth[u].unwrap();
        for &w in path.iter().rev() {
            d += 1;
            depth[w] = Some(d);
        }
    }
    Ok(depth)
}

/// Cluster tree of a connected graph: minimum-id root, breadth-first tree
/// with each node attached to its lowest-id neighbor one hop closer.
pub fn build_cluster_tree_oracle(g: &NetworkGraph, radius: usize) -> Result<ClusterTree> {
    let comps = components(g).len();
    if comps > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    if g.is_empty() {
        return Err(Error::MalformedTree("empty graph".into()));
    }
    let tree = bfs_tree(g, 0)?;
    ClusterTree::from_parents(tree.root, tree.parent, radius)
}

/// Roles imposed on leaders: the root is a dominator; with an even radius
/// every leader is, with an odd radius roles alternate with cluster level.
pub fn leader_parity_roles(ct: &ClusterTree) -> FixedRoles {
    ct.clusters()
        .iter()
        .map(|c| {
            let role = if ct.radius() % 2 == 0 || c.level % 2 == 0 {
                Role::Dominator
            } else {
                Role::Dominatee
            };
            (c.leader, role)
        })
        .collect()
}

/// One per-cluster optimization problem, in the cluster's local ids.
#[derive(Debug, Clone)]
pub struct ClusterProblem {
    pub leader: NodeId,
    /// Local id `i` is global node `members[i]`.
    pub members: Vec<NodeId>,
    pub subgraph: NetworkGraph,
    pub fixed: FixedRoles,
}

/// Builds the problem each leader solves: its cluster's induced subgraph with
/// the roles of the leaders inside pinned.
pub fn cluster_problems(g: &NetworkGraph, ct: &ClusterTree) -> Vec<ClusterProblem> {
    let leader_roles = leader_parity_roles(ct);
    ct.clusters()
        .iter()
        .map(|c| {
            let (subgraph, members) = g.induced_subgraph(&c.members);
            let fixed = members
                .iter()
                .enumerate()
                .filter_map(|(i, &u)| leader_roles.get(u).map(|r| (i, r)))
                .collect();
            ClusterProblem {
                leader: c.leader,
                members,
                subgraph,
                fixed,
            }
        })
        .collect()
}

/// Full output of a potatoes run.
#[derive(Debug, Clone)]
pub struct PotatoesReport {
    pub tree: ClusterTree,
    pub leader_roles: FixedRoles,
    pub assignment: RoleAssignment,
    /// Per-cluster solver results, in cluster order.
    pub cluster_results: Vec<BnBResult>,
}

/// Divide-and-conquer role assignment with clusters of radius `radius`.
pub fn potatoes(g: &NetworkGraph, radius: usize, budget: usize) -> Result<RoleAssignment> {
    potatoes_detailed(g, radius, budget).map(|r| r.assignment)
}

pub fn potatoes_detailed(g: &NetworkGraph, radius: usize, budget: usize) -> Result<PotatoesReport> {
    let tree = build_cluster_tree_oracle(g, radius)?;
    let problems = cluster_problems(g, &tree);
    let solved: Vec<(RoleAssignment, BnBResult)> = problems
        .par_iter()
        .map(|p| assign_cluster_roles(&p.subgraph, &p.fixed, budget))
        .collect::<Result<_>>()?;
    let local: Vec<RoleAssignment> = solved.iter().map(|(ra, _)| ra.clone()).collect();
    let assignment = merge_cluster_roles(g.n(), &tree, &problems, &local);
    Ok(PotatoesReport {
        leader_roles: leader_parity_roles(&tree),
        tree,
        assignment,
        cluster_results: solved.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Each node takes the role its home cluster assigned. Nodes outside the
/// tree default to dominator.
pub fn merge_cluster_roles(
    n: usize,
    ct: &ClusterTree,
    problems: &[ClusterProblem],
    local: &[RoleAssignment],
) -> RoleAssignment {
    let mut out = RoleAssignment::uniform(n, Role::Dominator);
    for u in ct.nodes() {
        let c = ct.home_cluster(u).expect("tree node without home cluster");
        let i = problems[c].members.binary_search(&u).unwrap();
        out.set(u, local[c].role(i));
    }
    out
}

/// Leaders of the tree as a set, handy for tests and traces.
pub fn leader_set(ct: &ClusterTree) -> BTreeSet<NodeId> {
    ct.leaders().collect()
}
