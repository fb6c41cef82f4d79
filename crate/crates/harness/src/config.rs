//! Key-value experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are comma or
//! space separated, seed lists also accept a half-open range `a..b`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use meshroles::optimizer::DEFAULT_BUDGET;

use crate::error::{config_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Opt,
    Potatoes,
    St,
    StPruned,
    Mis,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Opt,
        Algorithm::Potatoes,
        Algorithm::St,
        Algorithm::StPruned,
        Algorithm::Mis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Opt => "opt",
            Algorithm::Potatoes => "potatoes",
            Algorithm::St => "st",
            Algorithm::StPruned => "st-pruned",
            Algorithm::Mis => "mis",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// `(rows, cols)` grids.
    Grid(Vec<(usize, usize)>),
    /// Random geometric graphs, one corpus per node count.
    Random { nodes: Vec<usize>, degree: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub topology: Topology,
    pub radio_range: f64,
    pub interference_range: f64,
    pub seeds: Vec<u64>,
    /// Cluster radius `D`.
    pub radius: usize,
    pub algorithms: Vec<Algorithm>,
    pub channels: usize,
    pub opt_budget: usize,
    pub cluster_budget: usize,
    /// Also run the distributed protocol for potatoes rows.
    pub protocol: bool,
    pub hello_period: f64,
    pub dead_interval: f64,
    pub stabilization: usize,
    pub loss: f64,
    pub max_time: f64,
    /// Append a wall-clock column to the row CSV (breaks byte stability).
    pub wall_time: bool,
    pub output_csv: Option<PathBuf>,
    pub output_plot: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// Network parameters of the reference evaluation: 50 nodes with 10
    /// neighbors on average, radio range 10, interference range 30.
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            topology: Topology::Random {
                nodes: vec![50],
                degree: 10.0,
            },
            radio_range: 10.0,
            interference_range: 30.0,
            seeds: (0..10).collect(),
            radius: 2,
            algorithms: vec![Algorithm::Potatoes, Algorithm::St, Algorithm::Mis],
            channels: 12,
            opt_budget: DEFAULT_BUDGET,
            cluster_budget: DEFAULT_BUDGET,
            protocol: false,
            hello_period: 1.0,
            dead_interval: 3.5,
            stabilization: 3,
            loss: 0.0,
            max_time: 240.0,
            wall_time: false,
            output_csv: None,
            output_plot: None,
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "name",
    "topology",
    "grids",
    "nodes",
    "degree",
    "radio_range",
    "interference_range",
    "seeds",
    "radius",
    "algorithms",
    "channels",
    "opt_budget",
    "cluster_budget",
    "protocol",
    "hello_period",
    "dead_interval",
    "stabilization",
    "loss",
    "max_time",
    "wall_time",
    "output_csv",
    "output_plot",
];

fn list(value: &str) -> impl Iterator<Item = &str> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("bad value `{value}` for `{key}`"))
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| format!("grid size `{s}` is not ROWSxCOLS"))?;
    Ok((num("grids", r)?, num("grids", c)?))
}

fn parse_seeds(value: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = value.trim().split_once("..") {
        let (a, b): (u64, u64) = (num("seeds", a.trim())?, num("seeds", b.trim())?);
        return Ok((a..b).collect());
    }
    list(value).map(|s| num("seeds", s)).collect()
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value `{value}` for `{key}`")),
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(i + 1, "expected `key = value`"))?;
            cfg.set(k.trim(), v.trim()).map_err(|m| config_err(i + 1, m))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Sets one key. `grids` and `nodes` also switch the topology kind.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "name" => self.name = value.to_string(),
            "topology" => {
                self.topology = match (value, &self.topology) {
                    ("grid", Topology::Grid(_)) | ("random", Topology::Random { .. }) => {
                        self.topology.clone()
                    }
                    ("grid", _) => Topology::Grid(vec![(3, 3)]),
                    ("random", _) => Topology::Random {
                        nodes: vec![50],
                        degree: 10.0,
                    },
                    _ => return Err(format!("unknown topology `{value}`")),
                }
            }
            "grids" => {
                self.topology = Topology::Grid(list(value).map(parse_grid).collect::<Result<_, _>>()?)
            }
            "nodes" => {
                let nodes = list(value).map(|s| num(key, s)).collect::<Result<_, _>>()?;
                let degree = match self.topology {
                    Topology::Random { degree, .. } => degree,
                    Topology::Grid(_) => 10.0,
                };
                self.topology = Topology::Random { nodes, degree };
            }
            "degree" => {
                let d = num(key, value)?;
                match &mut self.topology {
                    Topology::Random { degree, .. } => *degree = d,
                    Topology::Grid(_) => {
                        self.topology = Topology::Random {
                            nodes: vec![50],
                            degree: d,
                        }
                    }
                }
            }
            "radio_range" => self.radio_range = num(key, value)?,
            "interference_range" => self.interference_range = num(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "radius" => self.radius = num(key, value)?,
            "algorithms" => {
                self.algorithms = list(value).map(str::parse).collect::<Result<_, _>>()?
            }
            "channels" => self.channels = num(key, value)?,
            "opt_budget" => self.opt_budget = num(key, value)?,
            "cluster_budget" => self.cluster_budget = num(key, value)?,
            "protocol" => self.protocol = parse_bool(key, value)?,
            "hello_period" => self.hello_period = num(key, value)?,
            "dead_interval" => self.dead_interval = num(key, value)?,
            "stabilization" => self.stabilization = num(key, value)?,
            "loss" => self.loss = num(key, value)?,
            "max_time" => self.max_time = num(key, value)?,
            "wall_time" => self.wall_time = parse_bool(key, value)?,
            "output_csv" => self.output_csv = Some(PathBuf::from(value)),
            "output_plot" => self.output_plot = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(config_err(0, msg));
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if self.algorithms.is_empty() {
            return fail("at least one algorithm is required");
        }
        match &self.topology {
            Topology::Grid(g) if g.is_empty() || g.iter().any(|&(r, c)| r * c == 0) => {
                return fail("grid sizes must be non-empty and positive")
            }
            Topology::Random { nodes, degree } if nodes.is_empty() || nodes.iter().any(|&n| n < 2) || *degree <= 0.0 => {
                return fail("random topologies need node counts >= 2 and a positive degree")
            }
            _ => {}
        }
        if self.radius == 0 {
            return fail("radius must be positive");
        }
        if self.channels == 0 {
            return fail("at least one channel is required");
        }
        if !(self.radio_range > 0.0) || self.interference_range < self.radio_range {
            return fail("need 0 < radio_range <= interference_range");
        }
        if !(0.0..1.0).contains(&self.loss) {
            return fail("loss must lie in [0, 1)");
        }
        if !(self.hello_period > 0.0) || self.dead_interval < self.hello_period {
            return fail("need 0 < hello_period <= dead_interval");
        }
        Ok(())
    }
}
