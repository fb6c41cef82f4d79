//! Network graph model, topology generators and the basic graph queries used
//! by every other module.
//!
//! Node ids are dense in `[0, n)`. Adjacency lists are kept sorted so that
//! every traversal in the crate visits neighbors in ascending id order.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{parse_err, Error, Result};

pub type NodeId = usize;

/// Ratio between interference and radio range used by the generators.
pub const INTERFERENCE_FACTOR: f64 = 3.0;

/// Resampling budget for [`gen_random_geometric`].
pub const DEFAULT_CONNECT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Undirected graph with node positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    positions: Vec<Point>,
    adj: Vec<Vec<NodeId>>,
    radio_range: f64,
    interference_range: f64,
}

impl NetworkGraph {
    /// Unit-disk graph over `positions`: `{u,v}` is an edge iff the nodes are
    /// at most `radio_range` apart.
    pub fn unit_disk(positions: Vec<Point>, radio_range: f64, interference_range: f64) -> Self {
        let n = positions.len();
        let mut adj = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                if positions[u].dist(&positions[v]) <= radio_range {
                    adj[u].push(v);
                    adj[v].push(u);
                }
            }
        }
        NetworkGraph {
            positions,
            adj,
            radio_range,
            interference_range: interference_range.max(radio_range),
        }
    }

    /// Graph with explicit edges. Nodes are laid out on a line one radio range
    /// apart; use [`NetworkGraph::with_positions`] when geometry matters.
    ///
    /// Self-loops and duplicate edges are ignored.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let positions = (0..n).map(|i| Point::new(i as f64 * 10.0, 0.0)).collect();
        Self::with_positions(positions, edges, 10.0, 10.0 * INTERFERENCE_FACTOR)
    }

    pub fn with_positions(
        positions: Vec<Point>,
        edges: &[(NodeId, NodeId)],
        radio_range: f64,
        interference_range: f64,
    ) -> Result<Self> {
        let n = positions.len();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::UnknownNode(w));
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(NetworkGraph {
            positions,
            adj,
            radio_range,
            interference_range: interference_range.max(radio_range),
        })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.n()
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn has_node(&self, u: NodeId) -> bool {
        u < self.n()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n() && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn position(&self, u: NodeId) -> Point {
        self.positions[u]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    pub fn interference_range(&self) -> f64 {
        self.interference_range
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n() as f64
    }

    /// Node-induced subgraph on `nodes`. Returns the subgraph, whose node `i`
    /// is `nodes[i]` after sorting, and that sorted id map.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> (NetworkGraph, Vec<NodeId>) {
        let mut map: Vec<NodeId> = nodes.to_vec();
        map.sort_unstable();
        map.dedup();
        let mut local = vec![usize::MAX; self.n()];
        for (i, &u) in map.iter().enumerate() {
            local[u] = i;
        }
        let adj = map
            .iter()
            .map(|&u| {
                self.adj[u]
                    .iter()
                    .filter(|&&v| local[v] != usize::MAX)
                    .map(|&v| local[v])
                    .collect()
            })
            .collect();
        let sub = NetworkGraph {
            positions: map.iter().map(|&u| self.positions[u]).collect(),
            adj,
            radio_range: self.radio_range,
            interference_range: self.interference_range,
        };
        (sub, map)
    }

    /// Copy of the graph with `{u,v}` removed.
    pub fn without_edge(&self, u: NodeId, v: NodeId) -> NetworkGraph {
        let mut g = self.clone();
        if u < g.n() && v < g.n() {
            g.adj[u].retain(|&w| w != v);
            g.adj[v].retain(|&w| w != u);
        }
        g
    }

    /// Serializes to the line-oriented text format:
    /// `n radio interference`, then `node id x y` and `edge u v` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.n(), self.radio_range, self.interference_range);
        for (u, p) in self.positions.iter().enumerate() {
            let _ = writeln!(out, "node {} {} {}", u, p.x, p.y);
        }
        for (u, v) in self.edges() {
            let _ = writeln!(out, "edge {} {}", u, v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<NetworkGraph> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(hline, "header must be `n radio_range interference_range`"));
        }
        let n: usize = parse_field(hline, fields[0])?;
        let radio: f64 = parse_field(hline, fields[1])?;
        let interference: f64 = parse_field(hline, fields[2])?;
        let mut positions: Vec<Option<Point>> = vec![None; n];
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["node", id, x, y] => {
                    let id: usize = parse_field(lineno, id)?;
                    if id >= n {
                        return Err(parse_err(lineno, format!("node id {id} out of range")));
                    }
                    positions[id] = Some(Point::new(parse_field(lineno, x)?, parse_field(lineno, y)?));
                }
                ["edge", u, v] => {
                    let u: usize = parse_field(lineno, u)?;
                    let v: usize = parse_field(lineno, v)?;
                    if u >= n || v >= n {
                        return Err(parse_err(lineno, format!("edge {u} {v} out of range")));
                    }
                    edges.push((u, v));
                }
                _ => return Err(parse_err(lineno, format!("unrecognized line `{line}`"))),
            }
        }
        let positions = positions
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| parse_err(0, format!("missing node {i}"))))
            .collect::<Result<Vec<_>>>()?;
        NetworkGraph::with_positions(positions, &edges, radio, interference)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{s}`")))
}

/// Regular grid, one radio range per cell. Node `(r, c)` has id `r * cols + c`.
pub fn gen_grid(rows: usize, cols: usize, radio_range: f64) -> NetworkGraph {
    let positions = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Point::new(c as f64 * radio_range, r as f64 * radio_range)))
        .collect();
    NetworkGraph::unit_disk(positions, radio_range, radio_range * INTERFERENCE_FACTOR)
}

/// Side of the square deployment area giving an expected mean degree of
/// `mean_degree` for `n` uniformly placed nodes.
pub fn area_side(n: usize, radio_range: f64, mean_degree: f64) -> f64 {
    radio_range * (std::f64::consts::PI * n as f64 / mean_degree).sqrt()
}

/// Connected random geometric graph with uniform placement in a square sized
/// for `mean_degree`. Disconnected draws are rejected and redrawn from a
/// fresh sub-stream of the seeded generator.
pub fn gen_random_geometric(
    n: usize,
    radio_range: f64,
    mean_degree: f64,
    seed: u64,
) -> Result<NetworkGraph> {
    gen_random_geometric_with_attempts(n, radio_range, mean_degree, seed, DEFAULT_CONNECT_ATTEMPTS)
}

pub fn gen_random_geometric_with_attempts(
    n: usize,
    radio_range: f64,
    mean_degree: f64,
    seed: u64,
    attempts: usize,
) -> Result<NetworkGraph> {
    let side = area_side(n, radio_range, mean_degree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..attempts {
        rng.set_stream(attempt as u64);
        rng.set_word_pos(0);
        let positions = (0..n)
            .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
            .collect();
        let g = NetworkGraph::unit_disk(positions, radio_range, radio_range * INTERFERENCE_FACTOR);
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::FailsConnectivity { attempts })
}

/// Hop counts from `src`; `None` marks unreachable nodes.
pub fn bfs_distances(g: &NetworkGraph, src: NodeId) -> Result<Vec<Option<usize>>> {
    if !g.has_node(src) {
        return Err(Error::UnknownNode(src));
    }
    Ok(bfs_from(g.n(), |u| g.neighbors(u), src))
}

/// BFS over any adjacency oracle.
pub(crate) fn bfs_from<'a, F>(n: usize, neighbors: F, src: NodeId) -> Vec<Option<usize>>
where
    F: Fn(NodeId) -> &'a [NodeId],
{
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    dist[src] = Some(0);
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Connected components, each sorted, ordered by smallest member.
pub fn components(g: &NetworkGraph) -> Vec<Vec<NodeId>> {
    let mut seen = vec![false; g.n()];
    let mut out = Vec::new();
    for s in g.nodes() {
        if seen[s] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn is_connected(g: &NetworkGraph) -> bool {
    components(g).len() <= 1
}

/// Largest finite hop distance between any two nodes of the same component.
pub fn diameter(g: &NetworkGraph) -> usize {
    g.nodes()
        .map(|s| {
            bfs_from(g.n(), |u| g.neighbors(u), s)
                .into_iter()
                .flatten()
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Rooted spanning tree given as a parent map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
}

impl SpanningTree {
    /// Depth of every node, or `MalformedTree` if the parent map has a cycle,
    /// a second root or points outside the node range.
    pub fn depths(&self) -> Result<Vec<usize>> {
        let n = self.parent.len();
        if self.root >= n {
            return Err(Error::MalformedTree(format!("root {} out of range", self.root)));
        }
        if self.parent[self.root].is_some() {
            return Err(Error::MalformedTree("root has a parent".into()));
        }
        let mut depth: Vec<Option<usize>> = vec![None; n];
        depth[self.root] = Some(0);
        for start in 0..n {
            let mut path = Vec::new();
            let mut u = start;
            while depth[u].is_none() {
                if path.len() > n {
                    return Err(Error::MalformedTree(format!("cycle through node {start}")));
                }
                path.push(u);
                u = match self.parent[u] {
                    Some(p) if p < n => p,
                    Some(p) => return Err(Error::MalformedTree(format!("parent {p} out of range"))),
                    None => {
                        return Err(Error::MalformedTree(format!(
                            "node {u} is a second root"
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
        Ok(depth.into_iter().map(Option::unwrap).collect())
    }

    pub fn children(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.parent.len()];
        for (u, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                out[p].push(u);
            }
        }
        out
    }
}

/// Breadth-first spanning tree of the component of `root`. Each node's parent
/// is its lowest-id neighbor one hop closer to the root, which is the same
/// rule the distributed protocol converges to.
pub fn bfs_tree(g: &NetworkGraph, root: NodeId) -> Result<SpanningTree> {
    let dist = bfs_distances(g, root)?;
    let mut parent = vec![None; g.n()];
    for u in g.nodes() {
        match dist[u] {
            Some(0) => {}
            Some(d) => {
                parent[u] = g
                    .neighbors(u)
                    .iter()
                    .copied()
                    .find(|&v| dist[v] == Some(d - 1));
            }
            None => {
                return Err(Error::Disconnected {
                    components: components(g).len(),
                })
            }
        }
    }
    Ok(SpanningTree { root, parent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> NetworkGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        NetworkGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn grid_shapes() {
        let g = gen_grid(1, 2, 10.0);
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        let g = gen_grid(3, 3, 10.0);
        assert_eq!(g.n(), 9);
        assert_eq!(g.edge_count(), 12);
        assert_eq!(g.degree(4), 4);
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.position(5), Point::new(20.0, 10.0));

        let g = gen_grid(2, 2, 10.0);
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn grid_edge_count_formula() {
        for r in 1..6 {
            for c in 1..6 {
                let g = gen_grid(r, c, 7.5);
                assert_eq!(g.edge_count(), r * (c - 1) + c * (r - 1));
            }
        }
    }

    #[test]
    fn two_node_random_graph_is_adjacent() {
        for seed in 0..20 {
            let g = gen_random_geometric(2, 10.0, 1.0, seed).unwrap();
            assert!(g.has_edge(0, 1));
        }
    }

    #[test]
    fn random_geometric_is_deterministic() {
        let a = gen_random_geometric(30, 10.0, 8.0, 42).unwrap();
        let b = gen_random_geometric(30, 10.0, 8.0, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_random_geometric(30, 10.0, 8.0, 43).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn random_geometric_fails_when_sparse() {
        let err = gen_random_geometric_with_attempts(200, 10.0, 0.2, 1, 5).unwrap_err();
        assert_eq!(err, Error::FailsConnectivity { attempts: 5 });
    }

    #[test]
    fn bfs_cases() {
        assert_eq!(bfs_distances(&path(3), 0).unwrap(), vec![Some(0), Some(1), Some(2)]);
        let g = NetworkGraph::from_edges(2, &[]).unwrap();
        assert_eq!(bfs_distances(&g, 0).unwrap(), vec![Some(0), None]);
        assert_eq!(bfs_distances(&gen_grid(3, 3, 10.0), 0).unwrap()[8], Some(4));
        assert_eq!(bfs_distances(&g, 5), Err(Error::UnknownNode(5)));
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&path(2)));
        assert!(!is_connected(&NetworkGraph::from_edges(2, &[]).unwrap()));
        assert!(is_connected(&gen_grid(3, 3, 10.0)));
    }

    #[test]
    fn bfs_tree_uses_lowest_id_parent() {
        // 0-1, 0-2, 1-3, 2-3: node 3 may hang off 1 or 2.
        let g = NetworkGraph::from_edges(4, &[(0, 2), (0, 1), (2, 3), (1, 3)]).unwrap();
        let t = bfs_tree(&g, 0).unwrap();
        assert_eq!(t.parent, vec![None, Some(0), Some(0), Some(1)]);
        assert_eq!(t.depths().unwrap(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn malformed_trees_rejected() {
        let cyc = SpanningTree { root: 0, parent: vec![None, Some(2), Some(1)] };
        assert!(matches!(cyc.depths(), Err(Error::MalformedTree(_))));
        let two_roots = SpanningTree { root: 0, parent: vec![None, None] };
        assert!(matches!(two_roots.depths(), Err(Error::MalformedTree(_))));
    }

    #[test]
    fn text_round_trip() {
        let g = gen_random_geometric(12, 10.0, 5.0, 3).unwrap();
        let back = NetworkGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(g, back);
        assert!(NetworkGraph::from_text("2 10 30\nnode 0 0 0\nedge 0 7\n").is_err());
    }

    #[test]
    fn induced_subgraph_relabels_in_order() {
        let g = gen_grid(3, 3, 10.0);
        let (sub, map) = g.induced_subgraph(&[4, 1, 3, 0]);
        assert_eq!(map, vec![0, 1, 3, 4]);
        assert_eq!(sub.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }
}
