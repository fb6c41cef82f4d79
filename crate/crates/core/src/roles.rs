//! Reversible weakly connected dominating sets: role assignments, the validity
//! check, the dominator–dominatee edge set, parity coloring of spanning trees
//! and the route stretch metric.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{parse_err, Error, Result};
use crate::netgraph::{bfs_from, parse_field, NetworkGraph, NodeId, SpanningTree};

/// Node role. Dominators act as nuclei (fixed channel), dominatees as
/// electrons (switching between neighboring nuclei).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Dominator,
    Dominatee,
}

impl Role {
    pub fn flipped(self) -> Role {
        match self {
            Role::Dominator => Role::Dominatee,
            Role::Dominatee => Role::Dominator,
        }
    }

    /// 1 for dominators, 0 for dominatees.
    pub fn indicator(self) -> f64 {
        match self {
            Role::Dominator => 1.0,
            Role::Dominatee => 0.0,
        }
    }

    pub fn from_depth_parity(depth: usize) -> Role {
        if depth % 2 == 0 {
            Role::Dominator
        } else {
            Role::Dominatee
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Dominator => "D",
            Role::Dominatee => "E",
        })
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "D" => Ok(Role::Dominator),
            "E" => Ok(Role::Dominatee),
            _ => Err(()),
        }
    }
}

/// Total map from node id to role.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoleAssignment(Vec<Role>);

impl RoleAssignment {
    pub fn new(roles: Vec<Role>) -> Self {
        RoleAssignment(roles)
    }

    pub fn uniform(n: usize, role: Role) -> Self {
        RoleAssignment(vec![role; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn role(&self, u: NodeId) -> Role {
        self.0[u]
    }

    pub fn set(&mut self, u: NodeId, role: Role) {
        self.0[u] = role;
    }

    pub fn as_slice(&self) -> &[Role] {
        &self.0
    }

    pub fn is_dominator(&self, u: NodeId) -> bool {
        self.0[u] == Role::Dominator
    }

    pub fn dominators(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Role::Dominator)
            .map(|(u, _)| u)
    }

    pub fn dominator_count(&self) -> usize {
        self.dominators().count()
    }

    /// Errors unless the assignment covers exactly the nodes of `g`.
    pub fn check_total(&self, g: &NetworkGraph) -> Result<()> {
        if self.len() != g.n() {
            return Err(Error::PartialAssignment {
                expected: g.n(),
                got: self.len(),
            });
        }
        Ok(())
    }

    /// `role <id> <D|E>` lines in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (u, r) in self.0.iter().enumerate() {
            let _ = writeln!(out, "role {u} {r}");
        }
        out
    }

    /// Parses `role <id> <D|E>` lines. Ids must be dense from 0.
    pub fn from_text(text: &str) -> Result<RoleAssignment> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["role", id, r] => {
                    let id: NodeId = parse_field(i + 1, id)?;
                    let role = r
                        .parse::<Role>()
                        .map_err(|_| parse_err(i + 1, format!("bad role `{r}`")))?;
                    if map.insert(id, role).is_some() {
                        return Err(parse_err(i + 1, format!("node {id} assigned twice")));
                    }
                }
                _ => return Err(parse_err(i + 1, format!("unrecognized line `{line}`"))),
            }
        }
        let n = map.keys().next_back().map_or(0, |&m| m + 1);
        if map.len() != n {
            return Err(Error::PartialAssignment {
                expected: n,
                got: map.len(),
            });
        }
        Ok(RoleAssignment(map.into_values().collect()))
    }
}

impl From<Vec<Role>> for RoleAssignment {
    fn from(v: Vec<Role>) -> Self {
        RoleAssignment(v)
    }
}

/// Outcome of [`validate_rwcds`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub dominated: bool,
    pub weakly_connected: bool,
    /// Nodes without a neighbor of the opposite role.
    pub undominated_nodes: BTreeSet<NodeId>,
    /// Connected components of `(V, E')`.
    pub component_count: usize,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.dominated && self.weakly_connected
    }
}

/// Edges joining a dominator and a dominatee, as `(u, v)` with `u < v`.
pub fn induced_edges(g: &NetworkGraph, ra: &RoleAssignment) -> Result<Vec<(NodeId, NodeId)>> {
    ra.check_total(g)?;
    Ok(g.edges().filter(|&(u, v)| ra.role(u) != ra.role(v)).collect())
}

fn induced_adjacency(g: &NetworkGraph, ra: &RoleAssignment) -> Vec<Vec<NodeId>> {
    g.nodes()
        .map(|u| {
            g.neighbors(u)
                .iter()
                .copied()
                .filter(|&v| ra.role(u) != ra.role(v))
                .collect()
        })
        .collect()
}

/// Checks domination in both directions and connectivity of `(V, E')`.
pub fn validate_rwcds(g: &NetworkGraph, ra: &RoleAssignment) -> Result<ValidityReport> {
    ra.check_total(g)?;
    let adj = induced_adjacency(g, ra);
    let undominated_nodes: BTreeSet<NodeId> = g.nodes().filter(|&u| adj[u].is_empty()).collect();
    let mut component_count = 0;
    let mut seen = vec![false; g.n()];
    for s in g.nodes() {
        if seen[s] {
            continue;
        }
        component_count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    Ok(ValidityReport {
        dominated: undominated_nodes.is_empty(),
        weakly_connected: component_count <= 1,
        undominated_nodes,
        component_count,
    })
}

pub fn is_valid_rwcds(g: &NetworkGraph, ra: &RoleAssignment) -> bool {
    validate_rwcds(g, ra).map(|r| r.is_valid()).unwrap_or(false)
}

/// Colors even-depth tree nodes as dominators, odd-depth ones as dominatees.
pub fn parity_coloring(tree: &SpanningTree) -> Result<RoleAssignment> {
    let depths = tree.depths()?;
    Ok(RoleAssignment(
        depths.into_iter().map(Role::from_depth_parity).collect(),
    ))
}

/// Route stretch of the r-WCDS against the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchReport {
    /// Mean over counted ordered pairs; 1.0 when no pair is counted.
    pub average_stretch: f64,
    pub per_pair: BTreeMap<(NodeId, NodeId), f64>,
    pub disconnected_pairs: usize,
    /// Nodes isolated in `(V, E')`, left out of every pair.
    pub discarded_nodes: BTreeSet<NodeId>,
}

pub fn stretch_factor(g: &NetworkGraph, ra: &RoleAssignment) -> Result<StretchReport> {
    ra.check_total(g)?;
    let adj = induced_adjacency(g, ra);
    let discarded_nodes: BTreeSet<NodeId> = g.nodes().filter(|&u| adj[u].is_empty()).collect();
    let mut per_pair = BTreeMap::new();
    let mut disconnected_pairs = 0;
    let mut total = 0.0;
    for s in g.nodes().filter(|u| !discarded_nodes.contains(u)) {
        let base = bfs_from(g.n(), |u| g.neighbors(u), s);
        let through = bfs_from(g.n(), |u| adj[u].as_slice(), s);
        for t in g.nodes() {
            if t == s || discarded_nodes.contains(&t) {
                continue;
            }
            match (through[t], base[t]) {
                (Some(a), Some(b)) => {
                    let ratio = a as f64 / b as f64;
                    total += ratio;
                    per_pair.insert((s, t), ratio);
                }
                _ => disconnected_pairs += 1,
            }
        }
    }
    let average_stretch = if per_pair.is_empty() {
        1.0
    } else {
        total / per_pair.len() as f64
    };
    Ok(StretchReport {
        average_stretch,
        per_pair,
        disconnected_pairs,
        discarded_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{bfs_tree, gen_grid};
    use Role::{Dominatee as E, Dominator as D};

    fn g(n: usize, edges: &[(usize, usize)]) -> NetworkGraph {
        NetworkGraph::from_edges(n, edges).unwrap()
    }

    fn ra(v: &[Role]) -> RoleAssignment {
        RoleAssignment::new(v.to_vec())
    }

    #[test]
    fn induced_edge_examples() {
        assert_eq!(induced_edges(&g(2, &[(0, 1)]), &ra(&[D, E])).unwrap(), vec![(0, 1)]);
        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(induced_edges(&tri, &ra(&[D, D, E])).unwrap(), vec![(0, 2), (1, 2)]);
        let p3 = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(induced_edges(&p3, &ra(&[E, D, E])).unwrap(), vec![(0, 1), (1, 2)]);
        assert_eq!(
            induced_edges(&p3, &ra(&[E, D])),
            Err(Error::PartialAssignment { expected: 3, got: 2 })
        );
    }

    #[test]
    fn validity_examples() {
        let p3 = g(3, &[(0, 1), (1, 2)]);
        assert!(validate_rwcds(&p3, &ra(&[E, D, E])).unwrap().is_valid());

        let rep = validate_rwcds(&p3, &ra(&[E, E, E])).unwrap();
        assert!(!rep.dominated);
        assert_eq!(rep.undominated_nodes, [0, 1, 2].into_iter().collect());

        let p4 = g(4, &[(0, 1), (1, 2), (2, 3)]);
        let rep = validate_rwcds(&p4, &ra(&[D, E, E, D])).unwrap();
        assert!(rep.dominated);
        assert!(!rep.weakly_connected);
        assert_eq!(rep.component_count, 2);
        assert!(!rep.is_valid());
    }

    #[test]
    fn dominator_without_dominatee_is_invalid() {
        let k2 = g(2, &[(0, 1)]);
        let rep = validate_rwcds(&k2, &ra(&[D, D])).unwrap();
        assert!(!rep.dominated);
        assert_eq!(rep.undominated_nodes.len(), 2);
    }

    #[test]
    fn parity_examples() {
        let p3 = g(3, &[(0, 1), (1, 2)]);
        let t = bfs_tree(&p3, 0).unwrap();
        assert_eq!(parity_coloring(&t).unwrap(), ra(&[D, E, D]));

        let star = g(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(parity_coloring(&bfs_tree(&star, 0).unwrap()).unwrap(), ra(&[D, E, E, E]));

        let grid = gen_grid(3, 3, 10.0);
        let col = parity_coloring(&bfs_tree(&grid, 0).unwrap()).unwrap();
        assert_eq!(col.dominators().collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
        assert!(is_valid_rwcds(&grid, &col));
    }

    #[test]
    fn stretch_examples() {
        let p3 = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(stretch_factor(&p3, &ra(&[E, D, E])).unwrap().average_stretch, 1.0);

        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        let rep = stretch_factor(&tri, &ra(&[D, D, E])).unwrap();
        assert_eq!(rep.per_pair[&(0, 1)], 2.0);
        assert!((rep.average_stretch - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.disconnected_pairs, 0);
    }

    #[test]
    fn stretch_discards_isolated_nodes() {
        // Node 3 hangs off dominatee 2 as another dominatee.
        let p4 = g(4, &[(0, 1), (1, 2), (2, 3)]);
        let rep = stretch_factor(&p4, &ra(&[E, D, E, E])).unwrap();
        assert_eq!(rep.discarded_nodes, [3].into_iter().collect());
        assert_eq!(rep.per_pair.len(), 6);
        assert_eq!(rep.average_stretch, 1.0);
    }

    #[test]
    fn role_text_round_trip() {
        let a = ra(&[D, E, E, D]);
        assert_eq!(RoleAssignment::from_text(&a.to_text()).unwrap(), a);
        assert!(matches!(
            RoleAssignment::from_text("role 0 D\nrole 2 E\n"),
            Err(Error::PartialAssignment { .. })
        ));
        assert!(RoleAssignment::from_text("role 0 X\n").is_err());
    }
}
