//! Test-side oracles written without the library's LP model or validator.
#![allow(dead_code)]

use meshroles::netgraph::NetworkGraph;
use meshroles::roles::{Role, RoleAssignment};
use proptest::prelude::*;

/// Dense two-phase simplex with Bland's rule on `max c·x, A x (<=|=) b,
/// x >= 0`, all `b >= 0`. Returns the optimum, `None` if infeasible.
pub struct Dense {
    pub cols: usize,
    pub le: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub objective: Vec<f64>,
}

const EPS: f64 = 1e-10;

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for x in t[r].iter_mut() {
        *x /= p;
    }
    let row = t[r].clone();
    for (i, other) in t.iter_mut().enumerate() {
        if i != r {
            let f = other[c];
            if f.abs() > 0.0 {
                for (x, y) in other.iter_mut().zip(&row) {
                    *x -= f * y;
                }
            }
        }
    }
    basis[r] = c;
}

/// Maximizes the last row of `t` (stored as reduced costs `-c`) over the
/// columns allowed by `usable`.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], usable: &dyn Fn(usize) -> bool) -> bool {
    let m = t.len() - 1;
    let width = t[0].len() - 1;
    loop {
        let Some(c) = (0..width).find(|&j| usable(j) && t[m][j] < -EPS) else {
            return true;
        };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            if t[i][c] > EPS {
                let ratio = t[i][width] / t[i][c];
                let better = match best {
                    None => true,
                    Some((r, bi)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[bi]),
                };
                if better {
                    best = Some((ratio, i));
                }
            }
        }
        let Some((_, r)) = best else {
            return false;
        };
        pivot(t, basis, r, c);
    }
}

impl Dense {
    pub fn new(cols: usize) -> Self {
        Dense {
            cols,
            le: Vec::new(),
            eq: Vec::new(),
            objective: vec![0.0; cols],
        }
    }

    pub fn solve(&self) -> Option<f64> {
        let (nl, ne) = (self.le.len(), self.eq.len());
        let m = nl + ne;
        let width = self.cols + nl + ne;
        let mut t = vec![vec![0.0; width + 1]; m + 1];
        let mut basis = vec![0; m];
        for (i, (a, b)) in self.le.iter().chain(&self.eq).enumerate() {
            assert!(*b >= -EPS, "oracle expects non-negative right-hand sides");
            t[i][..self.cols].copy_from_slice(a);
            t[i][self.cols + i] = 1.0;
            t[i][width] = *b;
            basis[i] = self.cols + i;
        }
        // Phase 1: drive the artificial columns (equality slacks) to zero.
        let art = |j: usize| j >= self.cols + nl && j < width;
        for i in nl..m {
            for j in 0..=width {
                t[m][j] -= t[i][j];
            }
            t[m][self.cols + i] = 0.0;
        }
        run(&mut t, &mut basis, &|j| !art(j));
        if t[m][width] < -1e-8 {
            return None;
        }
        for i in 0..m {
            if art(basis[i]) {
                if let Some(c) = (0..self.cols + nl).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, c);
                }
            }
        }
        // Phase 2.
        for x in t[m].iter_mut() {
            *x = 0.0;
        }
        for j in 0..self.cols {
            t[m][j] = -self.objective[j];
        }
        for i in 0..m {
            let f = t[m][basis[i]];
            if f != 0.0 {
                for j in 0..=width {
                    t[m][j] -= f * t[i][j];
                }
            }
        }
        if !run(&mut t, &mut basis, &|j| !art(j)) {
            return Some(f64::INFINITY);
        }
        Some(t[m][width])
    }
}

/// Max-min throughput LP built straight from the graph. `roles[u]` is the
/// fixed indicator, or `None` for a relaxed role in `[0, 1]`.
pub fn oracle_tmin(g: &NetworkGraph, roles: &[Option<f64>], bw: f64) -> Option<f64> {
    let n = g.n();
    let mut idx = std::collections::HashMap::new();
    let mut cols = 1; // column 0 is T_min
    let mut role_col = vec![None; n];
    for u in 0..n {
        if roles[u].is_none() {
            role_col[u] = Some(cols);
            cols += 1;
        }
    }
    for u in 0..n {
        for &v in g.neighbors(u) {
            for d in (0..n).filter(|&d| d != u) {
                idx.insert((u, v, d), cols);
                cols += 1;
            }
        }
    }
    let mut lp = Dense::new(cols);
    lp.objective[0] = 1.0;
    let var = |k: &(usize, usize, usize)| idx.get(k).copied();

    for u in 0..n {
        if let Some(c) = role_col[u] {
            let mut a = vec![0.0; cols];
            a[c] = 1.0;
            lp.le.push((a, 1.0));
        }
    }
    for (u, v) in g.edges() {
        let mut load = vec![0.0; cols];
        for d in 0..n {
            for k in [(u, v, d), (v, u, d)] {
                if let Some(c) = var(&k) {
                    load[c] += 1.0 / bw;
                }
            }
        }
        let mut up = load.clone();
        let mut down = load;
        let mut constant = 0.0;
        for w in [u, v] {
            match (roles[w], role_col[w]) {
                (Some(r), _) => constant += r,
                (None, Some(c)) => {
                    up[c] += 1.0;
                    down[c] -= 1.0;
                }
                _ => unreachable!(),
            }
        }
        lp.le.push((up, 2.0 - constant));
        lp.le.push((down, constant));
    }
    for u in 0..n {
        for d in (0..n).filter(|&d| d != u) {
            let mut a = vec![0.0; cols];
            for &v in g.neighbors(u) {
                if let Some(c) = var(&(u, v, d)) {
                    a[c] += 1.0;
                }
                if let Some(c) = var(&(v, u, d)) {
                    a[c] -= 1.0;
                }
            }
            a[0] -= 1.0;
            lp.eq.push((a, 0.0));
        }
        let mut a = vec![0.0; cols];
        for &v in g.neighbors(u) {
            if let Some(c) = var(&(v, u, u)) {
                a[c] += 1.0;
            }
        }
        a[0] -= (n - 1) as f64;
        lp.eq.push((a, 0.0));

        let mut a = vec![0.0; cols];
        for &v in g.neighbors(u) {
            for d in 0..n {
                for k in [(u, v, d), (v, u, d)] {
                    if let Some(c) = var(&k) {
                        a[c] += 1.0;
                    }
                }
            }
        }
        lp.le.push((a, bw));
    }
    lp.solve()
}

pub fn indicators(ra: &RoleAssignment) -> Vec<Option<f64>> {
    ra.as_slice()
        .iter()
        .map(|r| Some(if *r == Role::Dominator { 1.0 } else { 0.0 }))
        .collect()
}

/// Validity by definition, using union-find over opposite-role edges.
pub fn brute_valid(g: &NetworkGraph, roles: &[Role]) -> bool {
    let n = g.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut dominated = vec![false; n];
    for u in 0..n {
        for &v in g.neighbors(u) {
            if roles[u] != roles[v] {
                dominated[u] = true;
                let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                parent[a] = b;
            }
        }
    }
    let roots = (0..n).filter(|&u| find(&mut parent, u) == u).count();
    dominated.iter().all(|&d| d) && roots <= 1
}

/// Every role vector of length `n`, bit `u` set meaning dominator.
pub fn all_assignments(n: usize) -> impl Iterator<Item = Vec<Role>> {
    (0u32..1 << n).map(move |mask| {
        (0..n)
            .map(|u| if mask >> u & 1 == 1 { Role::Dominator } else { Role::Dominatee })
            .collect()
    })
}

/// Best `T_min` over all valid assignments by enumeration and the dense oracle.
pub fn brute_opt(g: &NetworkGraph, fixed: &[(usize, Role)]) -> Option<f64> {
    all_assignments(g.n())
        .filter(|r| fixed.iter().all(|&(u, role)| r[u] == role))
        .filter(|r| brute_valid(g, r))
        .map(|r| oracle_tmin(g, &indicators(&RoleAssignment::new(r)), 1.0).unwrap())
        .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.max(t))))
}

pub fn graph(n: usize, edges: &[(usize, usize)]) -> NetworkGraph {
    NetworkGraph::from_edges(n, edges).unwrap()
}

pub fn path(n: usize) -> NetworkGraph {
    let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    graph(n, &e)
}

pub fn star(leaves: usize) -> NetworkGraph {
    let e: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
    graph(leaves + 1, &e)
}

/// Connected graph on `lo..=hi` nodes: a random spanning tree plus extra edges.
pub fn connected_graph(lo: usize, hi: usize) -> impl Strategy<Value = NetworkGraph> {
    (lo..=hi)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            let extra = proptest::collection::vec((0..n, 0..n), 0..n);
            (Just(n), parents, extra)
        })
        .prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            edges.sort_by_key(|&(a, b)| (a.min(b), a.max(b)));
            edges.dedup_by_key(|&mut (a, b)| (a.min(b), a.max(b)));
            graph(n, &edges)
        })
}

/// Any graph (possibly disconnected) on `lo..=hi` nodes.
pub fn any_graph(lo: usize, hi: usize) -> impl Strategy<Value = NetworkGraph> {
    (lo..=hi)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..2 * n)))
        .prop_map(|(n, pairs)| {
            let mut edges: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            edges.sort();
            edges.dedup();
            graph(n, &edges)
        })
}

pub fn roles_for(n: usize) -> impl Strategy<Value = Vec<Role>> {
    proptest::collection::vec(prop_oneof![Just(Role::Dominator), Just(Role::Dominatee)], n)
}
