//! Max-min multicommodity flow LP over the dominator–dominatee links.
//!
//! Variables are `T(u,v,d)` (traffic sent by `u` over `{u,v}` towards `d`),
//! `T_min`, and one `role(u) ∈ [0,1]` per node whose role is left free. Rows:
//!
//! * link rows: `role(u)+role(v) + Σ_d (T(u,v,d)+T(v,u,d))/BW ≤ 2` and
//!   `Σ_d (T(u,v,d)+T(v,u,d))/BW ≤ role(u)+role(v)`,
//! * conservation: `Σ_v T(u,v,d) = Σ_v T(v,u,d) + T_min` for `d ≠ u`,
//! * sink: `Σ_v T(v,u,u) = (n-1)·T_min`,
//! * atom capacity: `Σ_v Σ_d (T(u,v,d)+T(v,u,d)) ≤ BW`,
//! * optional cuts: `1 ≤ role(u) + Σ_{v∈N(u)} role(v) ≤ Δ(u)`.
//!
//! `T(u,v,u)` is identically zero and is not materialized.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::netgraph::{NetworkGraph, NodeId};
use crate::roles::{validate_rwcds, Role, RoleAssignment};

/// Feasibility tolerance used when reading back LP solutions.
pub const FEAS_TOL: f64 = 1e-7;
/// Residual bound accepted by [`check_flow_solution`] callers.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Role of a node as seen by the LP: a constant, or a relaxed `[0,1]` variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleVar {
    Fixed(Role),
    Free,
}

impl From<Role> for RoleVar {
    fn from(r: Role) -> Self {
        RoleVar::Fixed(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Traffic { from: NodeId, to: NodeId, dest: NodeId },
    TMin,
    Role(NodeId),
}

/// Constraint family a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowFamily {
    /// Link unusable between two dominators.
    LinkDominators,
    /// Link unusable between two dominatees.
    LinkDominatees,
    Conservation,
    Sink,
    AtomCapacity,
    CutLower,
    CutUpper,
}

impl RowFamily {
    fn tag(self) -> &'static str {
        match self {
            RowFamily::LinkDominators => "link_dd",
            RowFamily::LinkDominatees => "link_ee",
            RowFamily::Conservation => "cons",
            RowFamily::Sink => "sink",
            RowFamily::AtomCapacity => "atom",
            RowFamily::CutLower => "cut_lo",
            RowFamily::CutUpper => "cut_hi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub family: RowFamily,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    fn satisfied_by_constant(&self) -> bool {
        match self.sense {
            Sense::Le => 0.0 <= self.rhs + FEAS_TOL,
            Sense::Ge => 0.0 >= self.rhs - FEAS_TOL,
            Sense::Eq => self.rhs.abs() <= FEAS_TOL,
        }
    }
}

/// Linear program maximizing `T_min`.
#[derive(Debug, Clone)]
pub struct LpModel {
    pub n: usize,
    pub bw: f64,
    pub vars: Vec<VarKind>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    pub tmin_var: usize,
    /// Variable index of each free role, `None` for fixed roles.
    pub role_var: Vec<Option<usize>>,
    pub fixed: Vec<RoleVar>,
}

impl LpModel {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn count_rows(&self, family: RowFamily) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    /// Pins a free role variable to 0 or 1 through its bounds.
    pub fn pin_role(&mut self, u: NodeId, role: Role) {
        if let Some(var) = self.role_var[u] {
            self.lower[var] = role.indicator();
            self.upper[var] = role.indicator();
        }
    }

    /// CPLEX-style LP text, for cross-checking with external solvers.
    pub fn to_lp_text(&self) -> String {
        let name = |i: usize| match self.vars[i] {
            VarKind::Traffic { from, to, dest } => format!("t_{from}_{to}_{dest}"),
            VarKind::TMin => "tmin".to_string(),
            VarKind::Role(u) => format!("role_{u}"),
        };
        let mut out = String::from("Maximize\n obj: tmin\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " {}_{}:", row.family.tag(), i);
            if row.terms.is_empty() {
                out.push_str(" 0 tmin");
            }
            for &(v, c) in &row.terms {
                let sign = if c < 0.0 { '-' } else { '+' };
                let _ = write!(out, " {} {} {}", sign, c.abs(), name(v));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {} {}", op, row.rhs);
        }
        out.push_str("Bounds\n");
        for i in 0..self.vars.len() {
            if self.upper[i].is_finite() {
                let _ = writeln!(out, " {} <= {} <= {}", self.lower[i], name(i), self.upper[i]);
            } else {
                let _ = writeln!(out, " {} >= {}", name(i), self.lower[i]);
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Builds the flow LP for `g` with the given (possibly relaxed) roles.
pub fn build_lp(g: &NetworkGraph, roles: &[RoleVar], bw: f64, with_cuts: bool) -> LpModel {
    assert_eq!(roles.len(), g.n(), "role vector must cover the graph");
    let n = g.n();
    let mut vars = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut push = |kind: VarKind, lo: f64, hi: f64| {
        vars.push(kind);
        lower.push(lo);
        upper.push(hi);
        vars.len() - 1
    };
    let tmin_var = push(VarKind::TMin, 0.0, f64::INFINITY);
    let role_var: Vec<Option<usize>> = roles
        .iter()
        .enumerate()
        .map(|(u, r)| match r {
            RoleVar::Free => Some(push(VarKind::Role(u), 0.0, 1.0)),
            RoleVar::Fixed(_) => None,
        })
        .collect();
    let mut traffic: HashMap<(NodeId, NodeId, NodeId), usize> = HashMap::new();
    for u in g.nodes() {
        for &v in g.neighbors(u) {
            for d in g.nodes().filter(|&d| d != u) {
                let idx = push(VarKind::Traffic { from: u, to: v, dest: d }, 0.0, f64::INFINITY);
                traffic.insert((u, v, d), idx);
            }
        }
    }
    let t = |u: NodeId, v: NodeId, d: NodeId| traffic.get(&(u, v, d)).copied();

    // role(u) contributes either a variable term or a constant.
    let role_term = |u: NodeId, coeff: f64, terms: &mut Vec<(usize, f64)>, constant: &mut f64| {
        match roles[u] {
            RoleVar::Free => terms.push((role_var[u].unwrap(), coeff)),
            RoleVar::Fixed(r) => *constant += coeff * r.indicator(),
        }
    };

    let mut rows = Vec::new();
    let inv_bw = 1.0 / bw;
    for (u, v) in g.edges() {
        let link_terms: Vec<(usize, f64)> = g
            .nodes()
            .flat_map(|d| [t(u, v, d), t(v, u, d)])
            .flatten()
            .map(|i| (i, inv_bw))
            .collect();

        let mut terms = link_terms.clone();
        let mut constant = 0.0;
        role_term(u, 1.0, &mut terms, &mut constant);
        role_term(v, 1.0, &mut terms, &mut constant);
        rows.push(Row {
            family: RowFamily::LinkDominators,
            terms,
            sense: Sense::Le,
            rhs: 2.0 - constant,
        });

        let mut terms = link_terms;
        let mut constant = 0.0;
        role_term(u, -1.0, &mut terms, &mut constant);
        role_term(v, -1.0, &mut terms, &mut constant);
        rows.push(Row {
            family: RowFamily::LinkDominatees,
            terms,
            sense: Sense::Le,
            rhs: -constant,
        });
    }

    for u in g.nodes() {
        for d in g.nodes().filter(|&d| d != u) {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for &v in g.neighbors(u) {
                if let Some(i) = t(u, v, d) {
                    terms.push((i, 1.0));
                }
                if let Some(i) = t(v, u, d) {
                    terms.push((i, -1.0));
                }
            }
            terms.push((tmin_var, -1.0));
            rows.push(Row {
                family: RowFamily::Conservation,
                terms,
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }

    for u in g.nodes() {
        let mut terms: Vec<(usize, f64)> = g
            .neighbors(u)
            .iter()
            .filter_map(|&v| t(v, u, u))
            .map(|i| (i, 1.0))
            .collect();
        terms.push((tmin_var, -((n - 1) as f64)));
        rows.push(Row {
            family: RowFamily::Sink,
            terms,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }

    for u in g.nodes() {
        let terms: Vec<(usize, f64)> = g
            .neighbors(u)
            .iter()
            .flat_map(|&v| g.nodes().flat_map(move |d| [(u, v, d), (v, u, d)]))
            .filter_map(|(a, b, d)| t(a, b, d))
            .map(|i| (i, 1.0))
            .collect();
        rows.push(Row {
            family: RowFamily::AtomCapacity,
            terms,
            sense: Sense::Le,
            rhs: bw,
        });
    }

    if with_cuts {
        for u in g.nodes() {
            let mut terms = Vec::new();
            let mut constant = 0.0;
            role_term(u, 1.0, &mut terms, &mut constant);
            for &v in g.neighbors(u) {
                role_term(v, 1.0, &mut terms, &mut constant);
            }
            rows.push(Row {
                family: RowFamily::CutLower,
                terms: terms.clone(),
                sense: Sense::Ge,
                rhs: 1.0 - constant,
            });
            rows.push(Row {
                family: RowFamily::CutUpper,
                terms,
                sense: Sense::Le,
                rhs: g.degree(u) as f64 - constant,
            });
        }
    }

    LpModel {
        n,
        bw,
        vars,
        lower,
        upper,
        rows,
        tmin_var,
        role_var,
        fixed: roles.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub status: LpStatus,
    pub t_min: f64,
    /// Nonzero traffic values keyed by `(from, to, dest)`.
    pub traffic: BTreeMap<(NodeId, NodeId, NodeId), f64>,
    /// Value of every role: the constant for fixed roles, the LP value for
    /// free ones. Empty when infeasible.
    pub roles: Vec<f64>,
}

impl FlowSolution {
    fn infeasible() -> Self {
        FlowSolution {
            status: LpStatus::Infeasible,
            t_min: 0.0,
            traffic: BTreeMap::new(),
            roles: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn traffic(&self, from: NodeId, to: NodeId, dest: NodeId) -> f64 {
        self.traffic.get(&(from, to, dest)).copied().unwrap_or(0.0)
    }
}

/// Solves the model with the bundled simplex solver.
pub fn solve_lp(m: &LpModel) -> Result<FlowSolution> {
    Ok(WarmLp::solve(m)?.solution())
}

/// A solved LP kept in factored form, so that pinning a free role
/// re-optimizes from the current basis instead of starting over.
#[derive(Clone)]
pub struct WarmLp {
    model: LpModel,
    vars: Vec<microlp::Variable>,
    state: WarmState,
}

#[derive(Clone)]
enum WarmState {
    Trivial,
    Infeasible,
    Solved(Box<microlp::Solution>),
}

impl WarmLp {
    pub fn solve(m: &LpModel) -> Result<WarmLp> {
        let mut lp = WarmLp {
            model: m.clone(),
            vars: Vec::new(),
            state: WarmState::Infeasible,
        };
        if m.n <= 1 {
            lp.state = WarmState::Trivial;
            return Ok(lp);
        }
        let trivially_infeasible = m
            .rows
            .iter()
            .any(|r| r.terms.is_empty() && !r.satisfied_by_constant())
            || m.lower.iter().zip(&m.upper).any(|(lo, hi)| lo > hi);
        if trivially_infeasible {
            return Ok(lp);
        }

        let mut problem = Problem::new(OptimizationDirection::Maximize);
        lp.vars = (0..m.num_vars())
            .map(|i| {
                let obj = if i == m.tmin_var { 1.0 } else { 0.0 };
                problem.add_var(obj, (m.lower[i], m.upper[i]))
            })
            .collect();
        for row in m.rows.iter().filter(|r| !r.terms.is_empty()) {
            let expr: Vec<_> = row.terms.iter().map(|&(i, c)| (lp.vars[i], c)).collect();
            let op = match row.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(expr.as_slice(), op, row.rhs);
        }
        lp.state = settle(problem.solve())?;
        Ok(lp)
    }

    /// Pins the role of `u` and re-optimizes.
    pub fn pin(mut self, u: NodeId, role: Role) -> Result<WarmLp> {
        self.model.pin_role(u, role);
        let Some(var) = self.model.role_var[u] else {
            return Ok(self);
        };
        let target = role.indicator();
        let WarmState::Solved(sol) = self.state else {
            return Ok(self);
        };
        let x = self.vars[var];
        // The dual pivot in `fix_var` reports infeasibility when the variable
        // is basic and already at the target; an equality row avoids that.
        let at_target = (sol[x] - target).abs() <= 1e-9;
        let outcome = if at_target {
            sol.add_constraint([(x, 1.0)], ComparisonOp::Eq, target)
        } else {
            sol.fix_var(x, target)
        };
        self.state = settle(outcome)?;
        if at_target && !self.is_feasible() {
            return WarmLp::solve(&self.model);
        }
        Ok(self)
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self.state, WarmState::Infeasible)
    }

    pub fn model(&self) -> &LpModel {
        &self.model
    }

    pub fn solution(&self) -> FlowSolution {
        let m = &self.model;
        let sol = match &self.state {
            WarmState::Infeasible => return FlowSolution::infeasible(),
            WarmState::Trivial => {
                return FlowSolution {
                    status: LpStatus::Optimal,
                    t_min: 0.0,
                    traffic: BTreeMap::new(),
                    roles: m.fixed.iter().map(|r| fixed_value(*r)).collect(),
                }
            }
            WarmState::Solved(sol) => sol,
        };
        let value = |i: usize| sol.var_value_raw(self.vars[i]);
        let mut traffic = BTreeMap::new();
        for (i, kind) in m.vars.iter().enumerate() {
            if let VarKind::Traffic { from, to, dest } = *kind {
                let x = value(i);
                if x.abs() > 1e-12 {
                    traffic.insert((from, to, dest), x);
                }
            }
        }
        let roles = m
            .fixed
            .iter()
            .enumerate()
            .map(|(u, r)| match m.role_var[u] {
                Some(var) => value(var).clamp(0.0, 1.0),
                None => fixed_value(*r),
            })
            .collect();
        FlowSolution {
            status: LpStatus::Optimal,
            t_min: value(m.tmin_var).max(0.0),
            traffic,
            roles,
        }
    }
}

fn settle(outcome: std::result::Result<microlp::SolveOutcome, microlp::Error>) -> Result<WarmState> {
    match outcome {
        Ok(outcome) => outcome
            .into_solution()
            .map(|s| WarmState::Solved(Box::new(s)))
            .map_err(|_| Error::NumericalFailure("solve interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(WarmState::Infeasible),
        Err(e) => Err(Error::NumericalFailure(e.to_string())),
    }
}

fn fixed_value(r: RoleVar) -> f64 {
    match r {
        RoleVar::Fixed(role) => role.indicator(),
        RoleVar::Free => 0.5,
    }
}

/// Optimal `T_min` for a fixed, valid role assignment with unit bandwidth.
pub fn evaluate_tmin(g: &NetworkGraph, ra: &RoleAssignment) -> Result<FlowSolution> {
    evaluate_tmin_bw(g, ra, 1.0)
}

pub fn evaluate_tmin_bw(g: &NetworkGraph, ra: &RoleAssignment, bw: f64) -> Result<FlowSolution> {
    if !validate_rwcds(g, ra)?.is_valid() && g.n() > 1 {
        return Err(Error::InvalidAssignment);
    }
    let roles: Vec<RoleVar> = ra.as_slice().iter().map(|&r| RoleVar::Fixed(r)).collect();
    solve_lp(&build_lp(g, &roles, bw, false))
}

/// Largest violation per constraint family, recomputed from the traffic map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualReport {
    pub link_dominators: f64,
    pub link_dominatees: f64,
    pub conservation: f64,
    pub sink: f64,
    pub atom_capacity: f64,
    /// Negative traffic, negative `T_min`, or traffic on a missing link or
    /// addressed to its own sender.
    pub domain: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        [
            self.link_dominators,
            self.link_dominatees,
            self.conservation,
            self.sink,
            self.atom_capacity,
            self.domain,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Recomputes every link, conservation, sink and capacity row for `sol`
/// directly from the graph, independently of the LP model.
pub fn check_flow_solution(
    g: &NetworkGraph,
    ra: &RoleAssignment,
    sol: &FlowSolution,
    bw: f64,
) -> Result<ResidualReport> {
    ra.check_total(g)?;
    let n = g.n();
    let t = |u, v, d| sol.traffic(u, v, d);
    let mut rep = ResidualReport {
        domain: (-sol.t_min).max(0.0),
        ..Default::default()
    };
    for (&(u, v, d), &x) in &sol.traffic {
        let bad = u >= n || v >= n || d >= n || !g.has_edge(u, v) || d == u;
        if bad {
            rep.domain = rep.domain.max(x.abs());
        } else {
            rep.domain = rep.domain.max(-x);
        }
    }
    for (u, v) in g.edges() {
        let load: f64 = g.nodes().map(|d| t(u, v, d) + t(v, u, d)).sum::<f64>() / bw;
        let rs = ra.role(u).indicator() + ra.role(v).indicator();
        rep.link_dominators = rep.link_dominators.max(rs + load - 2.0);
        rep.link_dominatees = rep.link_dominatees.max(load - rs);
    }
    for u in g.nodes() {
        for d in g.nodes().filter(|&d| d != u) {
            let out: f64 = g.neighbors(u).iter().map(|&v| t(u, v, d)).sum();
            let inc: f64 = g.neighbors(u).iter().map(|&v| t(v, u, d)).sum();
            rep.conservation = rep.conservation.max((out - inc - sol.t_min).abs());
        }
        let sink: f64 = g.neighbors(u).iter().map(|&v| t(v, u, u)).sum();
        rep.sink = rep.sink.max((sink - (n as f64 - 1.0) * sol.t_min).abs());
        let through: f64 = g
            .neighbors(u)
            .iter()
            .map(|&v| g.nodes().map(|d| t(u, v, d) + t(v, u, d)).sum::<f64>())
            .sum();
        rep.atom_capacity = rep.atom_capacity.max(through - bw);
    }
    Ok(rep)
}
