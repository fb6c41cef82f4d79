//! Baseline role assignments and greedy channel selection for nuclei.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::netgraph::{bfs_distances, bfs_tree, components, parse_field, NetworkGraph, NodeId};
use crate::roles::{is_valid_rwcds, parity_coloring, validate_rwcds, Role, RoleAssignment, ValidityReport};

fn require_connected(g: &NetworkGraph) -> Result<()> {
    let comps = components(g).len();
    if comps > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    Ok(())
}

/// Spanning-tree baseline: even BFS depth from `root` is a dominator.
///
/// With `prune`, dominators are then demoted one at a time, highest degree
/// first (ties by id), whenever the result stays a valid r-WCDS.
pub fn st_assign(g: &NetworkGraph, root: NodeId, prune: bool) -> Result<RoleAssignment> {
    require_connected(g)?;
    let mut ra = parity_coloring(&bfs_tree(g, root)?)?;
    if prune {
        let mut order: Vec<NodeId> = ra.dominators().collect();
        order.sort_by_key(|&u| (std::cmp::Reverse(g.degree(u)), u));
        for u in order {
            ra.set(u, Role::Dominatee);
            if !is_valid_rwcds(g, &ra) {
                ra.set(u, Role::Dominator);
            }
        }
    }
    Ok(ra)
}

/// Output of the MIS baseline, which may not be a valid r-WCDS.
#[derive(Debug, Clone, PartialEq)]
pub struct MisOutcome {
    pub assignment: RoleAssignment,
    pub report: ValidityReport,
}

/// Greedy maximal independent set scanned by BFS depth from the minimum id,
/// then by id. Selected nodes are dominators.
pub fn mis_assign(g: &NetworkGraph) -> Result<MisOutcome> {
    require_connected(g)?;
    if g.is_empty() {
        return Err(Error::Disconnected { components: 0 });
    }
    let depth = bfs_distances(g, 0)?;
    let mut order: Vec<NodeId> = g.nodes().collect();
    order.sort_by_key(|&u| (depth[u], u));
    let mut ra = RoleAssignment::uniform(g.n(), Role::Dominatee);
    for u in order {
        if !g.neighbors(u).iter().any(|&v| ra.is_dominator(v)) {
            ra.set(u, Role::Dominator);
        }
    }
    let report = validate_rwcds(g, &ra)?;
    Ok(MisOutcome {
        assignment: ra,
        report,
    })
}

/// Channel of each dominator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelAssignment(BTreeMap<NodeId, usize>);

impl ChannelAssignment {
    pub fn new(channels: BTreeMap<NodeId, usize>) -> Self {
        ChannelAssignment(channels)
    }

    pub fn get(&self, u: NodeId) -> Option<usize> {
        self.0.get(&u).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.0.iter().map(|(&u, &c)| (u, c))
    }

    /// One `chan <id> <c>` line per dominator.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (u, c) in self.iter() {
            let _ = writeln!(out, "chan {u} {c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ChannelAssignment> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 || f[0] != "chan" {
                return Err(parse_err(i + 1, "expected `chan <id> <c>`"));
            }
            let u: NodeId = parse_field(i + 1, f[1])?;
            let c: usize = parse_field(i + 1, f[2])?;
            if map.insert(u, c).is_some() {
                return Err(parse_err(i + 1, format!("node {u} listed twice")));
            }
        }
        Ok(ChannelAssignment(map))
    }
}

fn interferes(g: &NetworkGraph, u: NodeId, v: NodeId) -> bool {
    g.position(u).dist(&g.position(v)) <= g.interference_range()
}

/// Gives each dominator, in ascending id order, the channel least used by
/// already-served dominators within interference range (lowest index on
/// ties).
pub fn greedy_channels(g: &NetworkGraph, ra: &RoleAssignment, nb_ch: usize) -> Result<ChannelAssignment> {
    if nb_ch < 1 {
        return Err(Error::NoChannels);
    }
    ra.check_total(g)?;
    let mut out: BTreeMap<NodeId, usize> = BTreeMap::new();
    for u in ra.dominators() {
        let mut load = vec![0usize; nb_ch];
        for (&v, &c) in &out {
            if interferes(g, u, v) {
                load[c] += 1;
            }
        }
        let best = (0..nb_ch).min_by_key(|&c| (load[c], c)).unwrap();
        out.insert(u, best);
    }
    Ok(ChannelAssignment(out))
}

/// Dominator pairs sharing a channel within interference range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictReport {
    /// Each pair once, smaller id first.
    pub pairs: Vec<(NodeId, NodeId)>,
}

impl ConflictReport {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }
}

pub fn channel_conflicts(g: &NetworkGraph, ca: &ChannelAssignment) -> ConflictReport {
    let nuclei: Vec<(NodeId, usize)> = ca.iter().collect();
    let mut pairs = Vec::new();
    for (i, &(u, cu)) in nuclei.iter().enumerate() {
        for &(v, cv) in &nuclei[i + 1..] {
            if cu == cv && interferes(g, u, v) {
                pairs.push((u, v));
            }
        }
    }
    ConflictReport { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{gen_grid, Point};
    use Role::{Dominatee as E, Dominator as D};

    fn path(n: usize) -> NetworkGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        NetworkGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn st_examples() {
        assert_eq!(st_assign(&path(3), 0, false).unwrap(), RoleAssignment::new(vec![D, E, D]));
        let grid = gen_grid(3, 3, 10.0);
        let ra = st_assign(&grid, 0, false).unwrap();
        assert_eq!(ra.dominators().collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
        let pruned = st_assign(&grid, 0, true).unwrap();
        assert!(is_valid_rwcds(&grid, &pruned));
        assert!(pruned.dominators().all(|u| ra.is_dominator(u)));
    }

    #[test]
    fn st_rejects_disconnected() {
        let g = NetworkGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(st_assign(&g, 0, false), Err(Error::Disconnected { .. })));
        assert!(matches!(mis_assign(&g), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn mis_examples() {
        let out = mis_assign(&path(3)).unwrap();
        assert_eq!(out.assignment.dominators().collect::<Vec<_>>(), vec![0, 2]);
        assert!(out.report.is_valid());

        let c4 = NetworkGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let out = mis_assign(&c4).unwrap();
        assert_eq!(out.assignment.dominators().collect::<Vec<_>>(), vec![0, 2]);
        assert!(out.report.is_valid());
    }

    fn two_points(d: f64) -> NetworkGraph {
        NetworkGraph::unit_disk(vec![Point::new(0.0, 0.0), Point::new(d, 0.0)], 10.0, 30.0)
    }

    #[test]
    fn channel_examples() {
        let g = path(1);
        let ca = greedy_channels(&g, &RoleAssignment::new(vec![D]), 12).unwrap();
        assert_eq!(ca.get(0), Some(0));

        let near = two_points(20.0);
        let both = RoleAssignment::new(vec![D, D]);
        let ca = greedy_channels(&near, &both, 12).unwrap();
        assert_eq!((ca.get(0), ca.get(1)), (Some(0), Some(1)));
        assert_eq!(channel_conflicts(&near, &ca).count(), 0);

        let far = two_points(40.0);
        let ca = greedy_channels(&far, &both, 12).unwrap();
        assert_eq!((ca.get(0), ca.get(1)), (Some(0), Some(0)));

        let forced = ChannelAssignment::new([(0, 0), (1, 0)].into_iter().collect());
        assert_eq!(channel_conflicts(&near, &forced).pairs, vec![(0, 1)]);

        assert_eq!(greedy_channels(&near, &both, 0), Err(Error::NoChannels));
    }

    #[test]
    fn single_channel_counts_all_close_pairs() {
        let grid = gen_grid(3, 3, 10.0);
        let ra = RoleAssignment::uniform(9, D);
        let ca = greedy_channels(&grid, &ra, 1).unwrap();
        let expected = (0..9)
            .flat_map(|u| (u + 1..9).map(move |v| (u, v)))
            .filter(|&(u, v)| grid.position(u).dist(&grid.position(v)) <= 30.0)
            .count();
        assert_eq!(channel_conflicts(&grid, &ca).count(), expected);
    }

    #[test]
    fn channel_text_round_trip() {
        let ca = ChannelAssignment::new([(0, 3), (5, 1)].into_iter().collect());
        assert_eq!(ca.to_text(), "chan 0 3\nchan 5 1\n");
        assert_eq!(ChannelAssignment::from_text(&ca.to_text()).unwrap(), ca);
        assert!(ChannelAssignment::from_text("chan 1").is_err());
    }
}
