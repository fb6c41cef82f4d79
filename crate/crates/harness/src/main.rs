use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use meshroles::clusterproto::{potatoes_detailed, ChurnEvent, ChurnKind, Simulator};
use meshroles::flowlp::evaluate_tmin;
use meshroles::heuristics::{channel_conflicts, greedy_channels, mis_assign, st_assign};
use meshroles::netgraph::{gen_grid, gen_random_geometric, NetworkGraph};
use meshroles::optimizer::{solve_opt, FixedRoles, DEFAULT_BUDGET};
use meshroles::roles::{stretch_factor, validate_rwcds, RoleAssignment};
use meshroles_harness::config::KEYS;
use meshroles_harness::experiment::protocol_config;
use meshroles_harness::{emit_csv, emit_plot_data, run_experiment, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "meshroles", version, about = "Dominator/dominatee role assignment for multi-channel mesh networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a topology file.
    Gen(GenArgs),
    /// Assign roles to a graph.
    Assign(AssignArgs),
    /// Report validity, throughput, stretch and channel conflicts.
    Eval(EvalArgs),
    /// Run the distributed cluster protocol and write its trace.
    Simulate(SimArgs),
    /// Run a full experiment from a config file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyKind {
    Grid,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    topology: TopologyKind,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    cols: usize,
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 10.0)]
    degree: f64,
    #[arg(long, default_value_t = 10.0)]
    radio_range: f64,
    #[arg(long, default_value_t = 30.0)]
    interference_range: f64,
    /// Required for random topologies.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_parser = parse_alg)]
    alg: Algorithm,
    /// Cluster radius for potatoes.
    #[arg(long, default_value_t = 2)]
    radius: usize,
    /// Branch-and-bound budget (LP relaxations per solve).
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Spanning-tree root for st and st-pruned.
    #[arg(long, default_value_t = 0)]
    root: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the potatoes cluster tree.
    #[arg(long)]
    tree_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    #[arg(long, default_value_t = 12)]
    channels: usize,
    /// Write the greedy channel assignment here.
    #[arg(long)]
    channels_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Key-value file with protocol keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    hello_period: Option<f64>,
    #[arg(long)]
    dead_interval: Option<f64>,
    #[arg(long)]
    stabilization: Option<usize>,
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
    #[arg(long)]
    cluster_budget: Option<usize>,
    /// Kill a node: `TIME:NODE`, repeatable.
    #[arg(long, value_parser = parse_churn)]
    kill: Vec<(f64, usize)>,
    /// Node joining late: `TIME:NODE`, repeatable.
    #[arg(long, value_parser = parse_churn)]
    join: Vec<(f64, usize)>,
    /// Trace file (stdout when omitted).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final cluster tree dump.
    #[arg(long)]
    tree_out: Option<PathBuf>,
    /// Final roles.
    #[arg(long)]
    roles_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, `KEY=VALUE`, repeatable.
    #[arg(long = "set", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    algorithms: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    output_csv: Option<String>,
    #[arg(long)]
    output_plot: Option<String>,
}

fn parse_alg(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_churn(s: &str) -> Result<(f64, usize), String> {
    let (t, u) = s.split_once(':').ok_or("expected TIME:NODE")?;
    let t: f64 = t.parse().map_err(|_| format!("bad time `{t}`"))?;
    let u: usize = u.parse().map_err(|_| format!("bad node `{u}`"))?;
    Ok((t, u))
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(format!("unknown key `{k}`; known keys: {}", KEYS.join(", ")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<NetworkGraph> {
    NetworkGraph::from_text(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn gen(a: GenArgs) -> Result<()> {
    let g = match a.topology {
        TopologyKind::Grid => gen_grid(a.rows, a.cols, a.radio_range),
        TopologyKind::Random => {
            let Some(seed) = a.seed else {
                bail!("--seed is required for random topologies");
            };
            gen_random_geometric(a.nodes, a.radio_range, a.degree, seed)?
        }
    };
    let g = NetworkGraph::unit_disk(g.positions().to_vec(), a.radio_range, a.interference_range);
    write_out(a.out.as_deref(), &g.to_text())
}

fn assign(a: AssignArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let ra = match a.alg {
        Algorithm::Opt => {
            let res = solve_opt(&g, &FixedRoles::new(), a.budget)?;
            eprintln!(
                "status {:?} t_min {} relaxations {}",
                res.status, res.t_min, res.nodes_explored
            );
            res.assignment.context("no valid assignment found within the budget")?
        }
        Algorithm::Potatoes => {
            let rep = potatoes_detailed(&g, a.radius, a.budget)?;
            if let Some(p) = &a.tree_out {
                fs::write(p, rep.tree.dump()).with_context(|| format!("writing {}", p.display()))?;
            }
            rep.assignment
        }
        Algorithm::St => st_assign(&g, a.root, false)?,
        Algorithm::StPruned => st_assign(&g, a.root, true)?,
        Algorithm::Mis => {
            let out = mis_assign(&g)?;
            if !out.report.is_valid() {
                eprintln!("warning: MIS assignment is not a valid r-WCDS");
            }
            out.assignment
        }
    };
    write_out(a.out.as_deref(), &ra.to_text())
}

fn eval(a: EvalArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let ra = RoleAssignment::from_text(&read(&a.roles)?)
        .with_context(|| format!("parsing {}", a.roles.display()))?;
    let report = validate_rwcds(&g, &ra)?;
    let stretch = stretch_factor(&g, &ra)?;
    let ca = greedy_channels(&g, &ra, a.channels)?;
    let conflicts = channel_conflicts(&g, &ca).count();
    let mut out = String::new();
    writeln!(out, "valid {}", report.is_valid())?;
    if report.is_valid() {
        writeln!(out, "t_min {}", evaluate_tmin(&g, &ra)?.t_min)?;
    } else {
        writeln!(out, "t_min -")?;
    }
    writeln!(out, "avg_stretch {}", stretch.average_stretch)?;
    writeln!(out, "disconnected_pairs {}", stretch.disconnected_pairs)?;
    writeln!(out, "discarded_nodes {}", stretch.discarded_nodes.len())?;
    writeln!(out, "dominators {}", ra.dominator_count())?;
    writeln!(out, "channel_conflicts {conflicts}")?;
    print!("{out}");
    if let Some(p) = &a.channels_out {
        fs::write(p, ca.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn simulate(a: SimArgs) -> Result<bool> {
    let g = load_graph(&a.graph)?;
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("radius", a.radius.map(|v| v.to_string())),
        ("hello_period", a.hello_period.map(|v| v.to_string())),
        ("dead_interval", a.dead_interval.map(|v| v.to_string())),
        ("stabilization", a.stabilization.map(|v| v.to_string())),
        ("loss", a.loss.map(|v| v.to_string())),
        ("max_time", a.max_time.map(|v| v.to_string())),
        ("cluster_budget", a.cluster_budget.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(anyhow::Error::msg)?;
        }
    }
    cfg.validate()?;
    let mut pc = protocol_config(&cfg, a.seed);
    let churn = |kind| move |&(time, node): &(f64, usize)| ChurnEvent { time, kind, node };
    pc.events.extend(a.kill.iter().map(churn(ChurnKind::Kill)));
    pc.events.extend(a.join.iter().map(churn(ChurnKind::Join)));

    let out = Simulator::new(&g, pc)?.run()?;
    let mut trace = String::new();
    for line in &out.trace {
        writeln!(trace, "{line}")?;
    }
    write_out(a.trace.as_deref(), &trace)?;
    if let Some(p) = &a.tree_out {
        let dump: String = out.trees.iter().map(|t| t.dump()).collect();
        fs::write(p, dump).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.roles_out {
        fs::write(p, out.roles.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    match out.convergence_time {
        Some(t) if out.converged => eprintln!("converged at {t:.6} (run ended {:.6})", out.end_time),
        _ => eprintln!("not converged by {:.6}", out.end_time),
    }
    Ok(out.converged)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let text = read(&a.config)?;
    let mut cfg = ExperimentConfig::from_text(&text).with_context(|| format!("in {}", a.config.display()))?;
    let named = [
        ("seeds", a.seeds),
        ("algorithms", a.algorithms),
        ("radius", a.radius),
        ("loss", a.loss),
        ("output_csv", a.output_csv),
        ("output_plot", a.output_plot),
    ];
    let named = named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v)));
    for (k, v) in a.overrides.into_iter().chain(named) {
        cfg.set(&k, &v).map_err(|e| anyhow::anyhow!("--{k}: {e}"))?;
    }
    cfg.validate()?;
    let table = run_experiment(&cfg)?;
    match &cfg.output_csv {
        Some(p) => emit_csv(&table, p)?,
        None => print!("{}", meshroles_harness::rows_csv_string(&table)?),
    }
    if let Some(p) = &cfg.output_plot {
        emit_plot_data(&table, p)?;
    }
    for ag in &table.aggregates {
        let fmt = |s: Option<meshroles_harness::stats::Summary>| match s {
            Some(s) => match s.half_width {
                Some(h) => format!("{:.6} ± {:.6}", s.mean, h),
                None => format!("{:.6}", s.mean),
            },
            None => "-".into(),
        };
        eprintln!(
            "{:<10} {:<18} valid {:>5.1}%  t_min {}  stretch {}",
            ag.algorithm.name(),
            ag.topology,
            100.0 * ag.validity_rate,
            fmt(ag.t_min),
            fmt(ag.avg_stretch)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen(a) => gen(a).map(|_| true),
        Cmd::Assign(a) => assign(a).map(|_| true),
        Cmd::Eval(a) => eval(a).map(|_| true),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Sweep(a) => sweep(a).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
