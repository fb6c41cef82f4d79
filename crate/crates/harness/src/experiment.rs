//! Runs every configured algorithm over the topology corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use meshroles::clusterproto::{potatoes_detailed, run_protocol_with_cache, ProtocolConfig, ProtocolParams, SolveCache};
use meshroles::flowlp::evaluate_tmin;
use meshroles::heuristics::{channel_conflicts, greedy_channels, mis_assign, st_assign};
use meshroles::netgraph::{gen_grid, gen_random_geometric, NetworkGraph};
use meshroles::optimizer::{solve_opt, BnBStatus, FixedRoles};
use meshroles::roles::{is_valid_rwcds, stretch_factor, RoleAssignment};

use crate::config::{Algorithm, ExperimentConfig, Topology};
use crate::error::Result;
use crate::stats::{summarize, Summary};

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// The solver budget ran out; the row reports the best assignment found.
    BudgetExceeded,
    /// The protocol did not converge within its time budget.
    NotConverged,
    Failed(String),
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowStatus::Ok => f.write_str("ok"),
            RowStatus::BudgetExceeded => f.write_str("budget_exceeded"),
            RowStatus::NotConverged => f.write_str("not_converged"),
            RowStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub algorithm: Algorithm,
    pub topology: String,
    pub seed: u64,
    pub n: usize,
    pub edges: usize,
    pub status: RowStatus,
    pub valid: bool,
    /// Only reported for valid assignments.
    pub t_min: Option<f64>,
    pub avg_stretch: Option<f64>,
    pub dominators: usize,
    pub conflicts: usize,
    /// Protocol convergence time, for potatoes rows when enabled.
    pub convergence_time: Option<f64>,
    pub wall_time: f64,
}

/// Per `(algorithm, topology)` aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub algorithm: Algorithm,
    pub topology: String,
    pub n: usize,
    pub runs: usize,
    pub validity_rate: f64,
    pub t_min: Option<Summary>,
    pub avg_stretch: Option<Summary>,
    pub conflicts: Option<Summary>,
    pub convergence_time: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub include_wall_time: bool,
    pub rows: Vec<MetricsRow>,
    /// Grouped by algorithm in configuration order, then topology.
    pub aggregates: Vec<Aggregate>,
}

fn with_interference(g: NetworkGraph, cfg: &ExperimentConfig) -> NetworkGraph {
    if g.interference_range() == cfg.interference_range {
        return g;
    }
    NetworkGraph::unit_disk(g.positions().to_vec(), cfg.radio_range, cfg.interference_range)
}

/// Topology label and generated graph for every corpus entry and seed.
pub fn corpus(cfg: &ExperimentConfig) -> Vec<(String, u64, meshroles::Result<NetworkGraph>)> {
    let mut out = Vec::new();
    match &cfg.topology {
        Topology::Grid(sizes) => {
            for &(r, c) in sizes {
                for &seed in &cfg.seeds {
                    let g = with_interference(gen_grid(r, c, cfg.radio_range), cfg);
                    out.push((format!("grid-{r}x{c}"), seed, Ok(g)));
                }
            }
        }
        Topology::Random { nodes, degree } => {
            for &n in nodes {
                for &seed in &cfg.seeds {
                    let g = gen_random_geometric(n, cfg.radio_range, *degree, seed)
                        .map(|g| with_interference(g, cfg));
                    out.push((format!("random-n{n}-d{degree}"), seed, g));
                }
            }
        }
    }
    out
}

pub fn protocol_config(cfg: &ExperimentConfig, seed: u64) -> ProtocolConfig {
    let params = ProtocolParams {
        radius: cfg.radius,
        hello_period: cfg.hello_period,
        dead_interval: cfg.dead_interval,
        stabilization: cfg.stabilization,
    };
    ProtocolConfig {
        params,
        loss: cfg.loss,
        seed,
        max_time: cfg.max_time,
        budget: cfg.cluster_budget,
        events: Vec::new(),
        confirm_time: params.dead_interval + params.stabilization as f64 * params.hello_period,
    }
}

struct Assigned {
    roles: RoleAssignment,
    status: RowStatus,
    convergence_time: Option<f64>,
}

fn assign(g: &NetworkGraph, alg: Algorithm, cfg: &ExperimentConfig, seed: u64) -> meshroles::Result<Assigned> {
    let plain = |roles| Assigned {
        roles,
        status: RowStatus::Ok,
        convergence_time: None,
    };
    Ok(match alg {
        Algorithm::Opt => {
            let res = solve_opt(g, &FixedRoles::new(), cfg.opt_budget)?;
            let status = match res.status {
                BnBStatus::Optimal => RowStatus::Ok,
                BnBStatus::BudgetExceeded => RowStatus::BudgetExceeded,
                BnBStatus::Infeasible => RowStatus::Failed("infeasible".into()),
            };
            match res.assignment {
                Some(roles) => Assigned {
                    roles,
                    status,
                    convergence_time: None,
                },
                None => return Err(meshroles::Error::InfeasibleFixed),
            }
        }
        Algorithm::Potatoes => {
            let rep = potatoes_detailed(g, cfg.radius, cfg.cluster_budget)?;
            let exhausted = rep
                .cluster_results
                .iter()
                .any(|r| r.status == BnBStatus::BudgetExceeded);
            let mut out = plain(rep.assignment);
            if exhausted {
                out.status = RowStatus::BudgetExceeded;
            }
            if cfg.protocol {
                let pc = protocol_config(cfg, seed);
                match run_protocol_with_cache(g, &pc, &mut SolveCache::new()) {
                    Ok(o) => out.convergence_time = o.convergence_time,
                    Err(meshroles::Error::SimBudgetExceeded { .. }) => {
                        out.status = RowStatus::NotConverged
                    }
                    Err(e) => return Err(e),
                }
            }
            out
        }
        Algorithm::St => plain(st_assign(g, 0, false)?),
        Algorithm::StPruned => plain(st_assign(g, 0, true)?),
        Algorithm::Mis => plain(mis_assign(g)?.assignment),
    })
}

fn measure(
    g: &NetworkGraph,
    alg: Algorithm,
    cfg: &ExperimentConfig,
    seed: u64,
) -> meshroles::Result<(Assigned, bool, Option<f64>, f64, usize)> {
    let a = assign(g, alg, cfg, seed)?;
    let valid = is_valid_rwcds(g, &a.roles);
    let t_min = if valid {
        Some(evaluate_tmin(g, &a.roles)?.t_min)
    } else {
        None
    };
    let stretch = stretch_factor(g, &a.roles)?.average_stretch;
    let conflicts = channel_conflicts(g, &greedy_channels(g, &a.roles, cfg.channels)?).count();
    Ok((a, valid, t_min, stretch, conflicts))
}

fn failed_row(alg: Algorithm, topology: &str, seed: u64, g: Option<&NetworkGraph>, msg: String) -> MetricsRow {
    MetricsRow {
        algorithm: alg,
        topology: topology.to_string(),
        seed,
        n: g.map_or(0, NetworkGraph::n),
        edges: g.map_or(0, NetworkGraph::edge_count),
        status: RowStatus::Failed(msg),
        valid: false,
        t_min: None,
        avg_stretch: None,
        dominators: 0,
        conflicts: 0,
        convergence_time: None,
        wall_time: 0.0,
    }
}

/// One row per (topology, seed, algorithm). Per-row failures are recorded in
/// the row status rather than aborting the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (topology, seed, graph) in corpus(cfg) {
        for &alg in &cfg.algorithms {
            let g = match &graph {
                Ok(g) => g,
                Err(e) => {
                    rows.push(failed_row(alg, &topology, seed, None, e.to_string()));
                    continue;
                }
            };
            let start = Instant::now();
            let row = match measure(g, alg, cfg, seed) {
                Ok((a, valid, t_min, stretch, conflicts)) => MetricsRow {
                    algorithm: alg,
                    topology: topology.clone(),
                    seed,
                    n: g.n(),
                    edges: g.edge_count(),
                    status: a.status,
                    valid,
                    t_min,
                    avg_stretch: Some(stretch),
                    dominators: a.roles.dominator_count(),
                    conflicts,
                    convergence_time: a.convergence_time,
                    wall_time: start.elapsed().as_secs_f64(),
                },
                Err(e) => failed_row(alg, &topology, seed, Some(g), e.to_string()),
            };
            rows.push(row);
        }
    }
    let aggregates = aggregate(&rows, &cfg.algorithms);
    Ok(MetricsTable {
        include_wall_time: cfg.wall_time,
        rows,
        aggregates,
    })
}

pub fn aggregate(rows: &[MetricsRow], order: &[Algorithm]) -> Vec<Aggregate> {
    let mut topo_order: Vec<&str> = Vec::new();
    for r in rows {
        if !topo_order.contains(&r.topology.as_str()) {
            topo_order.push(&r.topology);
        }
    }
    let mut groups: BTreeMap<(usize, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let a = order.iter().position(|&x| x == r.algorithm).unwrap_or(order.len());
        let t = topo_order.iter().position(|&t| t == r.topology).unwrap();
        groups.entry((a, t)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let pick = |f: &dyn Fn(&MetricsRow) -> Option<f64>| {
                summarize(&group.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let valid = group.iter().filter(|r| r.valid).count();
            Aggregate {
                algorithm: group[0].algorithm,
                topology: group[0].topology.clone(),
                n: group[0].n,
                runs: group.len(),
                validity_rate: valid as f64 / group.len() as f64,
                t_min: pick(&|r| r.t_min),
                avg_stretch: pick(&|r| r.avg_stretch),
                conflicts: pick(&|r| r.avg_stretch.map(|_| r.conflicts as f64)),
                convergence_time: pick(&|r| r.convergence_time),
            }
        })
        .collect()
}
