//! Acceptance suite: one PASS/FAIL line per criterion. With
//! `MESHROLES_ACCEPTANCE_STRICT=1` any failed criterion makes the run fail;
//! otherwise failures are only reported.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use meshroles::clusterproto::{
    build_cluster_tree_oracle, leader_parity_roles, potatoes, run_protocol_with_cache, ProtocolConfig, SolveCache,
};
use meshroles::flowlp::{check_flow_solution, evaluate_tmin, LpStatus};
use meshroles::heuristics::{mis_assign, st_assign};
use meshroles::netgraph::{diameter, gen_grid, gen_random_geometric, NetworkGraph};
use meshroles::optimizer::{enumerate_oracle, solve_opt, BnBStatus, FixedRoles, DEFAULT_BUDGET};
use meshroles::roles::{is_valid_rwcds, stretch_factor, Role, RoleAssignment};

const TMIN_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-6;
const RADIO: f64 = 10.0;
/// Cluster budget for the validity sweep; any budget yields a valid result.
const VALIDITY_BUDGET: usize = 1;

#[derive(Default)]
struct Residuals {
    max: f64,
    checked: usize,
    failures: usize,
}

impl Residuals {
    /// `T_min` of a valid assignment, checking the returned flows.
    fn tmin(&mut self, g: &NetworkGraph, ra: &RoleAssignment) -> f64 {
        let sol = evaluate_tmin(g, ra).expect("valid assignment");
        if sol.status == LpStatus::Optimal {
            let r = check_flow_solution(g, ra, &sol, 1.0).unwrap().max();
            self.max = self.max.max(r);
            self.checked += 1;
            if r > RESIDUAL_TOL {
                self.failures += 1;
            }
        }
        sol.t_min
    }
}

struct Suite {
    failed: Vec<usize>,
    total: usize,
}

impl Suite {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failed.push(id);
        }
        println!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn validity(suite: &mut Suite) {
    let start = Instant::now();
    let (mut cases, mut pot_ok, mut st_ok) = (0, 0, 0);
    for i in 0..210u64 {
        let n = 5 + (i as usize % 36);
        let radius = 1 + (i as usize % 3);
        let g = gen_random_geometric(n, RADIO, 10.0, 1000 + i).unwrap();
        cases += 1;
        pot_ok += usize::from(is_valid_rwcds(&g, &potatoes(&g, radius, VALIDITY_BUDGET).unwrap()));
        st_ok += usize::from(is_valid_rwcds(&g, &st_assign(&g, 0, false).unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    suite.report(
        1,
        "validity suite",
        pot_ok == cases && st_ok == cases && secs < 300.0,
        format!(
            "{cases} graphs n in [5,40], degree 10, D in {{1,2,3}}; potatoes {pot_ok}/{cases}, st {st_ok}/{cases} valid; cluster budget {VALIDITY_BUDGET}; {secs:.1}s (limit 300s)"
        ),
    );
}

fn oracle_equivalence(suite: &mut Suite, res: &mut Residuals) {
    let start = Instant::now();
    let (mut cases, mut with_fixed, mut agree) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for i in 0..120u64 {
        let n = 4 + (i as usize % 7);
        let g = gen_random_geometric(n, RADIO, 4.0, 5000 + i).unwrap();
        let fixed = if i % 2 == 0 {
            FixedRoles::new()
        } else {
            with_fixed += 1;
            leader_parity_roles(&build_cluster_tree_oracle(&g, 1 + (i as usize / 2) % 2).unwrap())
        };
        cases += 1;
        let o = enumerate_oracle(&g, &fixed).unwrap();
        let same = match solve_opt(&g, &fixed, DEFAULT_BUDGET) {
            Ok(b) if o.status == BnBStatus::Optimal && b.status == BnBStatus::Optimal => {
                let diff = (o.t_min - b.t_min).abs();
                worst = worst.max(diff);
                let ra = b.assignment.unwrap();
                res.tmin(&g, &ra);
                diff <= TMIN_TOL && fixed.admits(&ra) && is_valid_rwcds(&g, &ra)
            }
            Err(meshroles::Error::InfeasibleFixed) => o.status == BnBStatus::Infeasible,
            _ => false,
        };
        agree += usize::from(same);
    }
    let secs = start.elapsed().as_secs_f64();
    suite.report(
        2,
        "oracle equivalence",
        agree == cases && cases >= 100 && secs < 600.0,
        format!(
            "{agree}/{cases} graphs n <= 10 agree ({with_fixed} with leader roles fixed); max |diff| {worst:.2e} (tol {TMIN_TOL:.0e}); {secs:.1}s (limit 600s)"
        ),
    );
}

fn lp_goldens(suite: &mut Suite, res: &mut Residuals) {
    use Role::{Dominatee as E, Dominator as D};
    let cases = [
        ("K2", common::path(2), vec![D, E], 0.5),
        ("P3", common::path(3), vec![E, D, E], 0.125),
        ("K13", common::star(3), vec![D, E, E, E], 1.0 / 18.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, g, roles, want) in cases {
        let ra = RoleAssignment::new(roles);
        let dense = common::oracle_tmin(&g, &common::indicators(&ra), 1.0).unwrap();
        let got = res.tmin(&g, &ra);
        pass &= (dense - want).abs() <= TMIN_TOL && (got - want).abs() <= TMIN_TOL;
        parts.push(format!("{name} oracle {dense:.9} library {got:.9} (want {want:.9})"));
    }
    suite.report(3, "LP golden values", pass, parts.join("; "));
}

fn protocol(suite: &mut Suite) {
    let start = Instant::now();
    let (mut exact, mut lossy_ok) = (0, 0);
    let (mut worst, mut worst_lossy): (f64, f64) = (0.0, 0.0);
    let graphs = 50u64;
    for i in 0..graphs {
        let n = 10 + (i as usize % 21);
        let g = gen_random_geometric(n, RADIO, 8.0, 7000 + i).unwrap();
        let base = ProtocolConfig::default();
        let hello = base.params.hello_period;
        let bound = (4 * diameter(&g)).max(10) as f64 * hello;
        let oracle_tree = build_cluster_tree_oracle(&g, 2).unwrap();
        let oracle_roles = potatoes(&g, 2, base.budget).unwrap();
        let mut cache = SolveCache::new();

        let cfg = ProtocolConfig {
            seed: i,
            max_time: bound + base.confirm_time,
            ..base.clone()
        };
        if let Ok(out) = run_protocol_with_cache(&g, &cfg, &mut cache) {
            let t = out.convergence_time.unwrap();
            worst = worst.max(t / bound);
            if out.trees == [oracle_tree.clone()] && out.roles == oracle_roles && t <= bound {
                exact += 1;
            }
        }

        let cfg = ProtocolConfig {
            seed: i,
            loss: 0.2,
            max_time: 4.0 * bound + base.confirm_time,
            ..base
        };
        if let Ok(out) = run_protocol_with_cache(&g, &cfg, &mut cache) {
            let t = out.convergence_time.unwrap();
            worst_lossy = worst_lossy.max(t / bound);
            if out.roles == oracle_roles && out.trees == [oracle_tree] && t <= 4.0 * bound {
                lossy_ok += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    suite.report(
        5,
        "protocol convergence",
        exact == graphs as usize && lossy_ok == graphs as usize && secs < 300.0,
        format!(
            "zero loss {exact}/{graphs} exact within max(10, 4*diam) H (worst {worst:.2} of bound); loss 0.2 {lossy_ok}/{graphs} within 4x (worst {worst_lossy:.2} of bound); n in [10,30], degree 8, D=2; {secs:.1}s (limit 300s)"
        ),
    );
}

fn desk_scale(suite: &mut Suite, res: &mut Residuals) {
    let (mut opt, mut pot, mut st, mut mis) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut s_opt, mut s_pot) = (Vec::new(), Vec::new());
    let mut certified = 0;
    for seed in 0..10 {
        let g = gen_random_geometric(16, RADIO, 8.0, seed).unwrap();
        let r = solve_opt(&g, &FixedRoles::new(), DEFAULT_BUDGET).unwrap();
        certified += usize::from(r.status == BnBStatus::Optimal);
        let ra_opt = r.assignment.unwrap();
        let ra_pot = potatoes(&g, 2, DEFAULT_BUDGET).unwrap();
        opt.push(res.tmin(&g, &ra_opt));
        pot.push(res.tmin(&g, &ra_pot));
        st.push(res.tmin(&g, &st_assign(&g, 0, false).unwrap()));
        let m = mis_assign(&g).unwrap();
        if m.report.is_valid() {
            mis.push(res.tmin(&g, &m.assignment));
        }
        s_opt.push(stretch_factor(&g, &ra_opt).unwrap().average_stretch);
        s_pot.push(stretch_factor(&g, &ra_pot).unwrap().average_stretch);
    }
    let (m_opt, m_pot, m_st) = (mean(&opt), mean(&pot), mean(&st));
    let m_mis = if mis.is_empty() { f64::NAN } else { mean(&mis) };
    suite.report(
        6,
        "near-optimality",
        m_pot >= 0.7 * m_opt,
        format!(
            "mean t_min potatoes {m_pot:.6} / OPT {m_opt:.6} = {:.3} (need >= 0.7); OPT certified on {certified}/10",
            m_pot / m_opt
        ),
    );
    suite.report(
        7,
        "baseline ordering",
        m_pot > m_st && !mis.is_empty() && m_pot > m_mis,
        format!(
            "potatoes {m_pot:.6} > ST {m_st:.6} (ratio {:.3}) and > MIS {m_mis:.6} over {} valid MIS instances (ratio {:.3})",
            m_st / m_pot,
            mis.len(),
            m_mis / m_pot
        ),
    );
    let (so, sp) = (mean(&s_opt), mean(&s_pot));
    suite.report(
        8,
        "stretch sanity",
        (1.0..=1.6).contains(&so) && (sp - so).abs() <= 0.25,
        format!("mean stretch OPT {so:.4} (need [1.0, 1.6]), potatoes {sp:.4} (|diff| {:.4}, need <= 0.25)", (sp - so).abs()),
    );
}

fn grid_parity(suite: &mut Suite, res: &mut Residuals) {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 3..=5 {
        let g = gen_grid(k, k, RADIO);
        let st = res.tmin(&g, &st_assign(&g, 0, false).unwrap());
        let pot = res.tmin(&g, &potatoes(&g, 2, DEFAULT_BUDGET).unwrap());
        pass &= st >= 0.9 * pot;
        parts.push(format!("{k}x{k} ST {st:.6} potatoes {pot:.6} ratio {:.3}", st / pot));
    }
    suite.report(9, "grid parity", pass, format!("{} (need ratio >= 0.9)", parts.join("; ")));
}

fn determinism(suite: &mut Suite) {
    let dir = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.conf");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let csv = dir.path().join(format!("run{i}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_meshroles"))
            .args(["sweep", "--config", config, "--output-csv"])
            .arg(&csv)
            .stderr(std::process::Stdio::null())
            .status()
            .unwrap();
        outputs.push(status.success().then(|| std::fs::read(&csv).unwrap()));
    }
    let same = outputs[0].is_some() && outputs[0] == outputs[1];
    let bytes = outputs[0].as_ref().map_or(0, Vec::len);
    suite.report(
        10,
        "sweep determinism",
        same,
        format!("two sweeps of configs/desk.conf: {bytes} bytes, identical = {same}"),
    );
}

fn main() -> ExitCode {
    let mut suite = Suite {
        failed: Vec::new(),
        total: 0,
    };
    let mut res = Residuals::default();
    lp_goldens(&mut suite, &mut res);
    validity(&mut suite);
    oracle_equivalence(&mut suite, &mut res);
    protocol(&mut suite);
    desk_scale(&mut suite, &mut res);
    grid_parity(&mut suite, &mut res);
    suite.report(
        4,
        "flow residuals",
        res.failures == 0 && res.checked > 0,
        format!(
            "{} optimal solutions checked, max residual {:.2e} (tol {RESIDUAL_TOL:.0e})",
            res.checked, res.max
        ),
    );
    determinism(&mut suite);
    println!("acceptance: {}/{} criteria passed", suite.total - suite.failed.len(), suite.total);
    if !suite.failed.is_empty() {
        println!("failed criteria: {:?}", suite.failed);
    }
    let strict = std::env::var("MESHROLES_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if suite.failed.is_empty() || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
