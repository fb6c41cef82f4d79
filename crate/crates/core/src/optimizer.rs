//! Exact role optimization: branch-and-bound over the binary role variables
//! with the flow LP (roles relaxed to `[0,1]`, cuts enabled) as bound.
//!
//! Search order is depth-first, diving into the child that agrees with the
//! rounded LP value, and backtracking to the open node with the best bound.
//! The branching variable is the most fractional free role, lowest id first.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::flowlp::{build_lp, evaluate_tmin, LpModel, LpStatus, RoleVar, WarmLp};
use crate::netgraph::{bfs_tree, components, NetworkGraph, NodeId};
use crate::roles::{is_valid_rwcds, parity_coloring, Role, RoleAssignment};

/// Default branch-and-bound node budget.
pub const DEFAULT_BUDGET: usize = 200_000;
/// Largest graph accepted by [`enumerate_oracle`].
pub const ENUMERATION_LIMIT: usize = 14;

const PRUNE_EPS: f64 = 1e-9;
const INTEGRAL_EPS: f64 = 1e-6;
/// Open nodes beyond this many replay their fixings from the root instead of
/// keeping a copy of the parent's factored LP.
const WARM_OPEN_LIMIT: usize = 256;

/// Roles imposed on some nodes before optimizing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedRoles(BTreeMap<NodeId, Role>);

impl FixedRoles {
    pub fn new() -> Self {
        FixedRoles(BTreeMap::new())
    }

    pub fn with(mut self, u: NodeId, role: Role) -> Self {
        self.0.insert(u, role);
        self
    }

    /// Records `role` for `u`; returns the previous role if any.
    pub fn insert(&mut self, u: NodeId, role: Role) -> Option<Role> {
        self.0.insert(u, role)
    }

    pub fn get(&self, u: NodeId) -> Option<Role> {
        self.0.get(&u).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, Role)> + '_ {
        self.0.iter().map(|(&u, &r)| (u, r))
    }

    pub fn admits(&self, ra: &RoleAssignment) -> bool {
        self.iter().all(|(u, r)| ra.role(u) == r)
    }

    fn check_nodes(&self, g: &NetworkGraph) -> Result<()> {
        match self.0.keys().find(|&&u| !g.has_node(u)) {
            Some(&u) => Err(Error::UnknownNode(u)),
            None => Ok(()),
        }
    }

    fn role_vars(&self, n: usize) -> Vec<RoleVar> {
        (0..n)
            .map(|u| self.get(u).map_or(RoleVar::Free, RoleVar::Fixed))
            .collect()
    }
}

impl FromIterator<(NodeId, Role)> for FixedRoles {
    fn from_iter<I: IntoIterator<Item = (NodeId, Role)>>(iter: I) -> Self {
        FixedRoles(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnBStatus {
    Optimal,
    Infeasible,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnBResult {
    /// Best assignment found; `None` only when infeasible or when the budget
    /// ran out before any valid assignment was seen.
    pub assignment: Option<RoleAssignment>,
    pub t_min: f64,
    /// LP relaxations solved.
    pub nodes_explored: usize,
    pub status: BnBStatus,
    /// Upper bound from the root relaxation.
    pub root_bound: f64,
}

struct OpenNode {
    fixes: Vec<(NodeId, Role)>,
    bound: f64,
    /// Solved parent relaxation, when kept.
    parent: Option<WarmLp>,
}

/// Maximizes `T_min` over all valid assignments extending `fixed`.
///
/// Child relaxations are re-optimized from the parent's basis; nodes resumed
/// from the open list replay their fixings on a copy of the root relaxation.
pub fn solve_opt(g: &NetworkGraph, fixed: &FixedRoles, budget: usize) -> Result<BnBResult> {
    fixed.check_nodes(g)?;
    let comps = components(g).len();
    if comps > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    if g.n() < 2 {
        return Err(Error::InfeasibleFixed);
    }

    let base = build_lp(g, &fixed.role_vars(g.n()), 1.0, true);
    let mut incumbent: Option<(RoleAssignment, f64)> = warm_start(g, fixed)?;
    let mut explored = 0;
    let mut root_bound = f64::INFINITY;
    let mut root: Option<WarmLp> = None;
    let mut open: Vec<OpenNode> = Vec::new();
    let mut current = Some(OpenNode {
        fixes: Vec::new(),
        bound: f64::INFINITY,
        parent: None,
    });
    let mut exhausted = false;
    let mut evaluated: HashMap<RoleAssignment, Option<f64>> = HashMap::new();

    let best = |inc: &Option<(RoleAssignment, f64)>| inc.as_ref().map_or(-1.0, |(_, t)| *t);

    while let Some(node) = current.take().or_else(|| pop_best(&mut open)) {
        if node.bound <= best(&incumbent) + PRUNE_EPS {
            continue;
        }
        if explored >= budget {
            exhausted = true;
            break;
        }
        explored += 1;
        let lp = match (node.parent, &root) {
            (Some(parent), _) => {
                let &(u, r) = node.fixes.last().expect("child node carries a fixing");
                parent.pin(u, r)?
            }
            (None, Some(root)) => {
                let mut lp = root.clone();
                for &(u, r) in &node.fixes {
                    lp = lp.pin(u, r)?;
                    if !lp.is_feasible() {
                        break;
                    }
                }
                lp
            }
            (None, None) => {
                let lp = WarmLp::solve(&base)?;
                root = Some(lp.clone());
                lp
            }
        };
        let sol = lp.solution();
        if explored == 1 {
            root_bound = if sol.status == LpStatus::Optimal { sol.t_min } else { 0.0 };
        }
        if sol.status == LpStatus::Infeasible || sol.t_min <= best(&incumbent) + PRUNE_EPS {
            continue;
        }
        if let Some((ra, t)) = round_incumbent(g, fixed, &sol.roles, &mut evaluated)? {
            if t > best(&incumbent) + PRUNE_EPS {
                incumbent = Some((ra, t));
                if sol.t_min <= t + PRUNE_EPS {
                    continue;
                }
            }
        }
        match most_fractional(&base, lp.model(), &sol.roles) {
            Some(u) => {
                let preferred = if sol.roles[u] >= 0.5 {
                    Role::Dominator
                } else {
                    Role::Dominatee
                };
                let child = |role: Role, parent: Option<WarmLp>| {
                    let mut fixes = node.fixes.clone();
                    fixes.push((u, role));
                    OpenNode {
                        fixes,
                        bound: sol.t_min,
                        parent,
                    }
                };
                let keep = (open.len() < WARM_OPEN_LIMIT).then(|| lp.clone());
                open.push(child(preferred.flipped(), keep));
                current = Some(child(preferred, Some(lp)));
            }
            None => {
                // Scored cold so the reported value does not carry drift from
                // a long chain of warm re-optimizations.
                if let Some((ra, t)) = round_incumbent(g, fixed, &sol.roles, &mut evaluated)? {
                    if t > best(&incumbent) + PRUNE_EPS {
                        incumbent = Some((ra, t));
                    }
                }
            }
        }
    }

    let status = if exhausted {
        BnBStatus::BudgetExceeded
    } else if incumbent.is_some() {
        BnBStatus::Optimal
    } else {
        return Err(Error::InfeasibleFixed);
    };
    let (assignment, t_min) = match incumbent {
        Some((ra, t)) => (Some(ra), t),
        None => (None, 0.0),
    };
    Ok(BnBResult {
        assignment,
        t_min,
        nodes_explored: explored,
        status,
        root_bound: root_bound.min(f64::MAX),
    })
}

fn round_roles(roles: &[f64]) -> RoleAssignment {
    RoleAssignment::new(
        roles
            .iter()
            .map(|&x| if x >= 0.5 { Role::Dominator } else { Role::Dominatee })
            .collect(),
    )
}

/// Best bound first; among equal bounds the most recently opened node.
fn pop_best(open: &mut Vec<OpenNode>) -> Option<OpenNode> {
    let idx = open
        .iter()
        .enumerate()
        .rev()
        .max_by(|a, b| a.1.bound.total_cmp(&b.1.bound))
        .map(|(i, _)| i)?;
    Some(open.remove(idx))
}

fn most_fractional(base: &LpModel, current: &LpModel, roles: &[f64]) -> Option<NodeId> {
    let mut pick: Option<(NodeId, f64)> = None;
    for (u, &x) in roles.iter().enumerate() {
        let Some(var) = base.role_var[u] else {
            continue;
        };
        if current.lower[var] == current.upper[var] {
            continue;
        }
        let frac = x.min(1.0 - x);
        if frac <= INTEGRAL_EPS {
            continue;
        }
        if pick.is_none_or(|(_, f)| frac > f + 1e-12) {
            pick = Some((u, frac));
        }
    }
    pick.map(|(u, _)| u)
}

/// Rounds relaxed roles to the nearest integer and evaluates the result when
/// it is a valid r-WCDS respecting `fixed`. Scores are memoized in `seen`.
fn round_incumbent(
    g: &NetworkGraph,
    fixed: &FixedRoles,
    roles: &[f64],
    seen: &mut HashMap<RoleAssignment, Option<f64>>,
) -> Result<Option<(RoleAssignment, f64)>> {
    let ra = round_roles(roles);
    if let Some(&t) = seen.get(&ra) {
        return Ok(t.map(|t| (ra, t)));
    }
    let t = if fixed.admits(&ra) && is_valid_rwcds(g, &ra) {
        Some(evaluate_tmin(g, &ra)?.t_min)
    } else {
        None
    };
    seen.insert(ra.clone(), t);
    Ok(t.map(|t| (ra, t)))
}

/// Parity coloring of the BFS tree from the lowest-id root whose coloring (or
/// its complement) extends `fixed`.
fn warm_start(g: &NetworkGraph, fixed: &FixedRoles) -> Result<Option<(RoleAssignment, f64)>> {
    for root in g.nodes() {
        let col = parity_coloring(&bfs_tree(g, root)?)?;
        let flipped = RoleAssignment::new(col.as_slice().iter().map(|r| r.flipped()).collect());
        for cand in [col, flipped] {
            if fixed.admits(&cand) && is_valid_rwcds(g, &cand) {
                let sol = evaluate_tmin(g, &cand)?;
                return Ok(Some((cand, sol.t_min)));
            }
        }
    }
    Ok(None)
}

/// Exhaustive search over all `2^n` assignments extending `fixed`. Among
/// equal `T_min` values the lexicographically smallest assignment wins
/// (dominator before dominatee, node 0 most significant).
pub fn enumerate_oracle(g: &NetworkGraph, fixed: &FixedRoles) -> Result<BnBResult> {
    fixed.check_nodes(g)?;
    let n = g.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(RoleAssignment, f64)> = None;
    let mut explored = 0;
    for mask in 0u32..(1u32 << n) {
        let ra = RoleAssignment::new(
            (0..n)
                .map(|u| {
                    if mask >> (n - 1 - u) & 1 == 1 {
                        Role::Dominatee
                    } else {
                        Role::Dominator
                    }
                })
                .collect(),
        );
        if !fixed.admits(&ra) || !is_valid_rwcds(g, &ra) {
            continue;
        }
        explored += 1;
        let t = evaluate_tmin(g, &ra)?.t_min;
        if best.as_ref().is_none_or(|(_, b)| t > *b + PRUNE_EPS) {
            best = Some((ra, t));
        }
    }
    Ok(match best {
        Some((ra, t)) => BnBResult {
            assignment: Some(ra),
            t_min: t,
            nodes_explored: explored,
            status: BnBStatus::Optimal,
            root_bound: t,
        },
        None => BnBResult {
            assignment: None,
            t_min: 0.0,
            nodes_explored: explored,
            status: BnBStatus::Infeasible,
            root_bound: 0.0,
        },
    })
}

/// Optimal roles inside one cluster, given as its node-induced subgraph, with
/// the cluster's leaders pre-fixed.
///
/// A single-node cluster takes its fixed role (dominator by default). When
/// the budget runs out the best assignment found so far is returned.
pub fn assign_cluster_roles(
    cluster: &NetworkGraph,
    leader_fixed: &FixedRoles,
    budget: usize,
) -> Result<(RoleAssignment, BnBResult)> {
    if cluster.n() == 1 {
        leader_fixed.check_nodes(cluster)?;
        let role = leader_fixed.get(0).unwrap_or(Role::Dominator);
        let ra = RoleAssignment::new(vec![role]);
        let res = BnBResult {
            assignment: Some(ra.clone()),
            t_min: 0.0,
            nodes_explored: 0,
            status: BnBStatus::Optimal,
            root_bound: 0.0,
        };
        return Ok((ra, res));
    }
    let res = solve_opt(cluster, leader_fixed, budget)?;
    match &res.assignment {
        Some(ra) => Ok((ra.clone(), res)),
        None => Err(Error::InfeasibleFixed),
    }
}
