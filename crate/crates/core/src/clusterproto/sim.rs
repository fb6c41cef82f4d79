//! Discrete-event simulation of the hello protocol that builds the cluster
//! tree, collects each cluster's topology at its leader and spreads the
//! computed roles back down.
//!
//! Every node broadcasts a hello once per period `H` (plus a small seeded
//! jitter). A hello carries the root the sender believes in, its distance and
//! the root's sequence number, its parent and leader, a fragment of cluster
//! topology for its parent, and the role list of its cluster for its
//! children. The root bumps the sequence number in each hello; a node whose
//! view of that counter stops moving for `T_dead` declares the root gone and
//! restarts the election.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_cluster_tree_oracle, cluster_problems, merge_cluster_roles, ClusterTree};
use crate::error::{Error, Result};
use crate::netgraph::{components, NetworkGraph, NodeId};
use crate::optimizer::{assign_cluster_roles, FixedRoles, DEFAULT_BUDGET};
use crate::roles::{Role, RoleAssignment};

const TIME_EPS: f64 = 1e-9;

/// Timing and clustering parameters every node runs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Cluster radius `D`.
    pub radius: usize,
    /// Hello period `H`.
    pub hello_period: f64,
    /// `T_dead`: silence after which a neighbor, or the root's counter, is
    /// considered gone.
    pub dead_interval: f64,
    /// Hello periods a leader's cluster view must stay unchanged before it
    /// solves.
    pub stabilization: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            radius: 2,
            hello_period: 1.0,
            dead_interval: 3.5,
            stabilization: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChurnKind {
    /// The node stops sending and receiving.
    Kill,
    /// The node (absent until then) starts up with empty state.
    Join,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnEvent {
    pub time: f64,
    pub kind: ChurnKind,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub params: ProtocolParams,
    /// Probability that a single hello reception is lost.
    pub loss: f64,
    pub seed: u64,
    /// Simulation time budget.
    pub max_time: f64,
    /// Branch-and-bound budget for each cluster solve.
    pub budget: usize,
    pub events: Vec<ChurnEvent>,
    /// How long roles must stay equal to the target before the run stops.
    pub confirm_time: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let params = ProtocolParams::default();
        ProtocolConfig {
            params,
            loss: 0.0,
            seed: 0,
            max_time: 240.0,
            budget: DEFAULT_BUDGET,
            events: Vec::new(),
            confirm_time: params.dead_interval + params.stabilization as f64 * params.hello_period,
        }
    }
}

/// Partial cluster topology reported up the tree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Fragment {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    /// Leaders among `nodes`, with their depth.
    pub leaders: BTreeMap<NodeId, usize>,
}

impl Fragment {
    fn absorb(&mut self, other: &Fragment) {
        self.nodes.extend(&other.nodes);
        self.edges.extend(&other.edges);
        self.leaders.extend(&other.leaders);
    }
}

/// Roles computed by one leader for its cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RolePayload {
    pub leader: NodeId,
    pub version: u64,
    pub roles: BTreeMap<NodeId, Role>,
}

impl RolePayload {
    fn tag(&self) -> (NodeId, u64) {
        (self.leader, self.version)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelloMessage {
    pub sender: NodeId,
    pub neighbors: Vec<NodeId>,
    /// Root the sender currently believes in.
    pub min_id: NodeId,
    pub distance: usize,
    pub seq: u64,
    pub parent: Option<NodeId>,
    pub leader: NodeId,
    pub is_leader: bool,
    /// Topology for the sender's parent.
    pub fragment: Fragment,
    /// Role list for the sender's children, sent until they all acknowledge.
    pub payload: Option<RolePayload>,
    /// `(leader, version)` of the role list received from the parent.
    pub ack: Option<(NodeId, u64)>,
    pub role: Option<Role>,
}

/// What a node remembers about one neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub last_heard: f64,
    pub root: NodeId,
    pub distance: usize,
    pub seq: u64,
    /// Last time this neighbor's sequence number moved forward.
    pub seq_advanced_at: f64,
    pub parent: Option<NodeId>,
    pub leader: NodeId,
    pub ack: Option<(NodeId, u64)>,
}

/// Cluster as seen by its leader: sorted members, edges among them, and the
/// roles pinned on leaders inside.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterSnapshot {
    pub members: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub fixed: Vec<(NodeId, Role)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub neighbors: BTreeMap<NodeId, NeighborEntry>,
    pub root: NodeId,
    pub distance: usize,
    /// Latest sequence number of `root` seen (own counter when root).
    pub seq: u64,
    seq_heard_at: f64,
    own_seq: u64,
    pub parent: Option<NodeId>,
    pub leader: NodeId,
    pub is_leader: bool,
    /// Rows keyed by the child that reported them.
    pub topology: BTreeMap<NodeId, Fragment>,
    /// Roots declared gone, with the last sequence number seen from them.
    pub dead_roots: BTreeMap<NodeId, u64>,
    /// Role list of the cluster this node belongs to, from its parent.
    pub received: Option<RolePayload>,
    /// Role list computed as a leader.
    pub own: Option<RolePayload>,
    pub assigned_role: Option<Role>,
    snapshot: Option<ClusterSnapshot>,
    snapshot_since: f64,
    solved: Option<ClusterSnapshot>,
    solves: u64,
    /// Malformed hellos discarded.
    pub dropped: usize,
    /// Hellos whose sequence number went backwards.
    pub stale: usize,
}

/// State change worth a trace line.
#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    Root(NodeId),
    RootDead(NodeId),
    Parent(Option<NodeId>, usize),
    Leader(bool),
    Role(Role),
    Expire(NodeId),
    Dropped(NodeId),
}

impl NodeState {
    pub fn new(id: NodeId, now: f64) -> Self {
        NodeState {
            id,
            neighbors: BTreeMap::new(),
            root: id,
            distance: 0,
            seq: 0,
            seq_heard_at: now,
            own_seq: 0,
            parent: None,
            leader: id,
            is_leader: true,
            topology: BTreeMap::new(),
            dead_roots: BTreeMap::new(),
            received: None,
            own: None,
            assigned_role: None,
            snapshot: None,
            snapshot_since: now,
            solved: None,
            solves: 0,
            dropped: 0,
            stale: 0,
        }
    }

    fn is_dead_claim(&self, root: NodeId, seq: u64) -> bool {
        self.dead_roots.get(&root).is_some_and(|&s| seq <= s)
    }

    fn is_fresh(&self, e: &NeighborEntry, now: f64, p: &ProtocolParams) -> bool {
        now - e.seq_advanced_at <= p.dead_interval + TIME_EPS && !self.is_dead_claim(e.root, e.seq)
    }

    /// Applies one received hello.
    pub fn handle_hello(&mut self, m: &HelloMessage, now: f64, p: &ProtocolParams) -> Vec<Note> {
        let malformed = m.sender == self.id
            || (m.distance == 0) != (m.min_id == m.sender)
            || m.parent == Some(m.sender)
            || (m.parent.is_none() != (m.distance == 0));
        if malformed {
            self.dropped += 1;
            return vec![Note::Dropped(m.sender)];
        }

        let prev = self.neighbors.get(&m.sender);
        let goes_back = prev.is_some_and(|e| e.root == m.min_id && m.seq < e.seq);
        let entry = match prev {
            Some(e) if goes_back => {
                // Out-of-date counter: keep the distance we already had.
                self.stale += 1;
                NeighborEntry {
                    last_heard: now,
                    parent: m.parent,
                    leader: m.leader,
                    ack: m.ack,
                    ..e.clone()
                }
            }
            _ => {
                let advanced = match prev {
                    Some(e) if e.root == m.min_id && m.seq <= e.seq => e.seq_advanced_at,
                    _ => now,
                };
                NeighborEntry {
                    last_heard: now,
                    root: m.min_id,
                    distance: m.distance,
                    seq: m.seq,
                    seq_advanced_at: advanced,
                    parent: m.parent,
                    leader: m.leader,
                    ack: m.ack,
                }
            }
        };
        let (entry_root, entry_seq) = (entry.root, entry.seq);
        self.neighbors.insert(m.sender, entry);

        if entry_root == self.root && entry_seq > self.seq && self.root != self.id {
            self.seq = entry_seq;
            self.seq_heard_at = now;
        }

        if m.parent == Some(self.id) && m.min_id == self.root {
            self.topology.insert(m.sender, m.fragment.clone());
        } else {
            self.topology.remove(&m.sender);
        }

        if self.parent == Some(m.sender) {
            if let Some(pl) = &m.payload {
                if pl.leader == m.leader {
                    self.received = Some(pl.clone());
                }
            }
        }

        let mut notes = self.recompute(now, p);
        notes.extend(self.refresh_role());
        notes
    }

    /// Periodic timer: expire silent neighbors, update the tree state, and
    /// build the next hello. `solve` is called when this node leads a
    /// cluster whose view has been stable long enough.
    pub fn tick(
        &mut self,
        now: f64,
        p: &ProtocolParams,
        solve: &mut dyn FnMut(&ClusterSnapshot) -> Option<BTreeMap<NodeId, Role>>,
    ) -> (HelloMessage, Vec<Note>) {
        let mut notes = Vec::new();
        let expired: Vec<NodeId> = self
            .neighbors
            .iter()
            .filter(|(_, e)| now - e.last_heard > p.dead_interval + TIME_EPS)
            .map(|(&v, _)| v)
            .collect();
        for v in expired {
            self.neighbors.remove(&v);
            self.topology.remove(&v);
            notes.push(Note::Expire(v));
        }
        notes.extend(self.recompute(now, p));
        if self.root == self.id {
            self.own_seq += 1;
            self.seq = self.own_seq;
            self.seq_heard_at = now;
        }

        if self.is_leader {
            self.update_snapshot(now);
            let stable = now - self.snapshot_since
                >= p.stabilization as f64 * p.hello_period - TIME_EPS;
            if stable && self.solved != self.snapshot {
                let snap = self.snapshot.clone().unwrap();
                if let Some(roles) = solve(&snap) {
                    self.solves += 1;
                    self.own = Some(RolePayload {
                        leader: self.id,
                        version: self.solves,
                        roles,
                    });
                }
                self.solved = Some(snap);
            }
        }
        notes.extend(self.refresh_role());
        (self.hello(), notes)
    }

    fn recompute(&mut self, now: f64, p: &ProtocolParams) -> Vec<Note> {
        let mut notes = Vec::new();
        let before = (self.root, self.parent, self.distance, self.is_leader);

        if self.root != self.id && now - self.seq_heard_at > p.dead_interval + TIME_EPS {
            notes.push(Note::RootDead(self.root));
            let marker = self.dead_roots.entry(self.root).or_insert(0);
            *marker = (*marker).max(self.seq);
            self.become_root(now);
        }

        let best_root = self
            .neighbors
            .values()
            .filter(|e| self.is_fresh(e, now, p))
            .map(|e| e.root)
            .min()
            .map_or(self.id, |r| r.min(self.id));
        if best_root != self.root && best_root < self.root {
            self.root = best_root;
            if best_root == self.id {
                self.become_root(now);
            } else {
                self.seq = self
                    .neighbors
                    .values()
                    .filter(|e| e.root == best_root)
                    .map(|e| e.seq)
                    .max()
                    .unwrap_or(0);
                self.seq_heard_at = now;
            }
        }

        if self.root == self.id {
            self.distance = 0;
            self.parent = None;
        } else {
            let best = self
                .neighbors
                .iter()
                .filter(|(_, e)| e.root == self.root && self.is_fresh(e, now, p))
                .min_by_key(|(&v, e)| (e.distance, v));
            if let Some((&v, e)) = best {
                self.distance = e.distance + 1;
                self.parent = Some(v);
            }
        }

        let children: BTreeSet<NodeId> = self
            .neighbors
            .iter()
            .filter(|(_, e)| e.parent == Some(self.id) && e.root == self.root)
            .map(|(&v, _)| v)
            .collect();
        self.topology.retain(|c, _| children.contains(c));
        self.is_leader = self.root == self.id
            || (self.distance % p.radius == 0 && !children.is_empty());
        self.leader = if self.is_leader {
            self.id
        } else {
            self.parent
                .and_then(|q| self.neighbors.get(&q))
                .map_or(self.id, |e| e.leader)
        };
        if !self.is_leader {
            self.own = None;
            self.snapshot = None;
            self.solved = None;
        } else {
            self.update_snapshot(now);
        }

        if before.0 != self.root {
            notes.push(Note::Root(self.root));
        }
        if (before.1, before.2) != (self.parent, self.distance) {
            notes.push(Note::Parent(self.parent, self.distance));
        }
        if before.3 != self.is_leader {
            notes.push(Note::Leader(self.is_leader));
        }
        notes
    }

    fn become_root(&mut self, now: f64) {
        self.root = self.id;
        self.distance = 0;
        self.parent = None;
        self.seq = self.own_seq;
        self.seq_heard_at = now;
    }

    fn update_snapshot(&mut self, now: f64) {
        let snap = self.cluster_view();
        if self.snapshot.as_ref() != Some(&snap) {
            self.snapshot = Some(snap);
            self.snapshot_since = now;
        }
    }

    /// Cluster as currently known from this node's topology table.
    fn cluster_view(&self) -> ClusterSnapshot {
        let mut all = Fragment::default();
        for f in self.topology.values() {
            all.absorb(f);
        }
        all.nodes.insert(self.id);
        all.edges.extend(self.links());
        let members: Vec<NodeId> = all.nodes.iter().copied().collect();
        let edges = all
            .edges
            .iter()
            .copied()
            .filter(|(u, v)| all.nodes.contains(u) && all.nodes.contains(v))
            .collect();
        let mut fixed = vec![(self.id, Role::from_depth_parity(self.distance))];
        fixed.extend(
            all.leaders
                .iter()
                .filter(|(&u, _)| u != self.id)
                .map(|(&u, &d)| (u, Role::from_depth_parity(d))),
        );
        fixed.sort_unstable();
        ClusterSnapshot {
            members,
            edges,
            fixed,
        }
    }

    fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.neighbors.keys().map(|&v| (self.id.min(v), self.id.max(v)))
    }

    fn fragment(&self) -> Fragment {
        let mut f = Fragment::default();
        f.nodes.insert(self.id);
        f.edges.extend(self.links());
        if self.is_leader {
            f.leaders.insert(self.id, self.distance);
        } else {
            for row in self.topology.values() {
                f.absorb(row);
            }
        }
        f
    }

    /// Role list this node hands to its children.
    fn down_payload(&self) -> Option<&RolePayload> {
        if self.is_leader {
            self.own.as_ref()
        } else {
            self.received.as_ref().filter(|pl| pl.leader == self.leader)
        }
    }

    fn refresh_role(&mut self) -> Vec<Note> {
        let from = if self.root == self.id {
            self.own.as_ref()
        } else {
            self.received.as_ref()
        };
        let role = from.and_then(|pl| pl.roles.get(&self.id)).copied();
        match role {
            Some(r) if self.assigned_role != Some(r) => {
                self.assigned_role = Some(r);
                vec![Note::Role(r)]
            }
            _ => Vec::new(),
        }
    }

    pub fn hello(&self) -> HelloMessage {
        let payload = self.down_payload().filter(|pl| {
            self.neighbors
                .values()
                .any(|e| e.parent == Some(self.id) && e.root == self.root && e.ack != Some(pl.tag()))
        });
        HelloMessage {
            sender: self.id,
            neighbors: self.neighbors.keys().copied().collect(),
            min_id: self.root,
            distance: self.distance,
            seq: self.seq,
            parent: self.parent,
            leader: self.leader,
            is_leader: self.is_leader,
            fragment: self.fragment(),
            payload: payload.cloned(),
            ack: self.received.as_ref().map(RolePayload::tag),
            role: self.assigned_role,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Hello,
    Lost,
    Root,
    RootDead,
    Parent,
    Leader,
    Solve,
    SolveFailed,
    Role,
    Expire,
    Dropped,
    Kill,
    Join,
    Converged,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraceEvent::Hello => "hello",
            TraceEvent::Lost => "lost",
            TraceEvent::Root => "root",
            TraceEvent::RootDead => "root_dead",
            TraceEvent::Parent => "parent",
            TraceEvent::Leader => "leader",
            TraceEvent::Solve => "solve",
            TraceEvent::SolveFailed => "solve_failed",
            TraceEvent::Role => "role",
            TraceEvent::Expire => "expire",
            TraceEvent::Dropped => "dropped",
            TraceEvent::Kill => "kill",
            TraceEvent::Join => "join",
            TraceEvent::Converged => "converged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub time: f64,
    pub event: TraceEvent,
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {} {} {}", self.time, self.event, self.node, self.detail)
    }
}

fn note_line(time: f64, node: NodeId, note: Note) -> TraceLine {
    let (event, detail) = match note {
        Note::Root(r) => (TraceEvent::Root, r.to_string()),
        Note::RootDead(r) => (TraceEvent::RootDead, r.to_string()),
        Note::Parent(p, d) => (
            TraceEvent::Parent,
            format!("{} {d}", p.map_or("-".to_string(), |p| p.to_string())),
        ),
        Note::Leader(b) => (TraceEvent::Leader, b.to_string()),
        Note::Role(r) => (TraceEvent::Role, r.to_string()),
        Note::Expire(v) => (TraceEvent::Expire, v.to_string()),
        Note::Dropped(v) => (TraceEvent::Dropped, v.to_string()),
    };
    TraceLine {
        time,
        event,
        node,
        detail,
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub trace: Vec<TraceLine>,
    /// Cluster tree of each component of the live nodes, in node ids of the
    /// full graph. Empty for a component whose parent map is not a tree.
    pub trees: Vec<ClusterTree>,
    /// Roles held at the end; nodes that never got one (or are dead) are
    /// reported as dominators.
    pub roles: RoleAssignment,
    pub alive: Vec<bool>,
    pub converged: bool,
    /// Start of the final stretch during which every live node held its
    /// target role and parent.
    pub convergence_time: Option<f64>,
    /// Start of the final stretch during which the parent map matched the
    /// target tree.
    pub tree_convergence_time: Option<f64>,
    /// Target roles and tree (the centralized pipeline on the live graph).
    pub target_roles: RoleAssignment,
    pub target_parents: Vec<Option<NodeId>>,
    pub end_time: f64,
    pub hellos_sent: usize,
    pub receptions_lost: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Churn(usize),
    Hello(NodeId, u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

type SolveKey = (usize, Vec<(NodeId, NodeId)>, Vec<(NodeId, Role)>);

/// Memoized cluster solutions keyed by cluster shape (local ids), so the
/// simulated leaders and the target computation solve each shape once.
/// Results depend on the branch-and-bound budget, so a cache must only be
/// shared between runs using the same budget.
#[derive(Debug, Clone, Default)]
pub struct SolveCache(HashMap<SolveKey, Option<Vec<Role>>>);

impl SolveCache {
    pub fn new() -> Self {
        SolveCache::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Event-driven protocol run over a fixed radio graph.
pub struct Simulator<'g> {
    g: &'g NetworkGraph,
    cfg: ProtocolConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(Time, u64, Event)>>,
    next_seq: u64,
    now: f64,
    nodes: Vec<NodeState>,
    alive: Vec<bool>,
    epoch: Vec<u64>,
    cache: SolveCache,
    trace: Vec<TraceLine>,
    target_roles: Vec<Role>,
    target_parents: Vec<Option<NodeId>>,
    roles_since: Option<f64>,
    tree_since: Option<f64>,
    last_churn: f64,
    hellos_sent: usize,
    receptions_lost: usize,
}

impl<'g> Simulator<'g> {
    pub fn new(g: &'g NetworkGraph, cfg: ProtocolConfig) -> Result<Self> {
        Self::with_cache(g, cfg, SolveCache::new())
    }

    pub fn with_cache(g: &'g NetworkGraph, cfg: ProtocolConfig, cache: SolveCache) -> Result<Self> {
        let n = g.n();
        if let Some(e) = cfg.events.iter().find(|e| e.node >= n) {
            return Err(Error::UnknownNode(e.node));
        }
        if cfg.params.radius == 0 || cfg.params.hello_period <= 0.0 {
            return Err(Error::MalformedTree("radius and hello period must be positive".into()));
        }
        let mut alive = vec![true; n];
        for e in &cfg.events {
            if e.kind == ChurnKind::Join {
                alive[e.node] = false;
            }
        }
        let mut sim = Simulator {
            g,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            nodes: (0..n).map(|u| NodeState::new(u, 0.0)).collect(),
            alive,
            epoch: vec![0; n],
            cache,
            trace: Vec::new(),
            target_roles: Vec::new(),
            target_parents: Vec::new(),
            roles_since: None,
            tree_since: None,
            last_churn: cfg.events.iter().map(|e| e.time).fold(0.0, f64::max),
            hellos_sent: 0,
            receptions_lost: 0,
            cfg,
        };
        let h = sim.cfg.params.hello_period;
        for u in 0..n {
            if sim.alive[u] {
                let t = sim.rng.gen_range(0.0..h);
                sim.schedule(t, Event::Hello(u, 0));
            }
        }
        for i in 0..sim.cfg.events.len() {
            sim.schedule(sim.cfg.events[i].time, Event::Churn(i));
        }
        sim.retarget()?;
        Ok(sim)
    }

    fn schedule(&mut self, t: f64, ev: Event) {
        self.queue.push(Reverse((Time(t), self.next_seq, ev)));
        self.next_seq += 1;
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn node(&self, u: NodeId) -> &NodeState {
        &self.nodes[u]
    }

    pub fn trace(&self) -> &[TraceLine] {
        &self.trace
    }

    /// Processes the next event. Returns `false` once the queue is empty or
    /// the time budget is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        let Some(Reverse((Time(t), _, ev))) = self.queue.pop() else {
            return Ok(false);
        };
        if t > self.cfg.max_time {
            return Ok(false);
        }
        self.now = t;
        match ev {
            Event::Hello(u, epoch) => {
                if self.alive[u] && self.epoch[u] == epoch {
                    self.fire_hello(u);
                    let h = self.cfg.params.hello_period;
                    let next = t + h + self.rng.gen_range(0.0..=0.1 * h);
                    self.schedule(next, Event::Hello(u, epoch));
                }
            }
            Event::Churn(i) => {
                self.apply_churn(self.cfg.events[i])?;
            }
        }
        self.observe();
        Ok(true)
    }

    fn apply_churn(&mut self, e: ChurnEvent) -> Result<()> {
        let u = e.node;
        match e.kind {
            ChurnKind::Kill => {
                self.alive[u] = false;
                self.epoch[u] += 1;
                self.push(u, TraceEvent::Kill, String::new());
            }
            ChurnKind::Join => {
                self.alive[u] = true;
                self.epoch[u] += 1;
                self.nodes[u] = NodeState::new(u, self.now);
                let t = self.now + self.rng.gen_range(0.0..self.cfg.params.hello_period);
                self.schedule(t, Event::Hello(u, self.epoch[u]));
                self.push(u, TraceEvent::Join, String::new());
            }
        }
        self.retarget()
    }

    fn push(&mut self, node: NodeId, event: TraceEvent, detail: String) {
        self.trace.push(TraceLine {
            time: self.now,
            event,
            node,
            detail,
        });
    }

    fn fire_hello(&mut self, u: NodeId) {
        let params = self.cfg.params;
        let budget = self.cfg.budget;
        let mut solved_line = None;
        let (msg, notes) = {
            let cache = &mut self.cache;
            let mut solve = |snap: &ClusterSnapshot| {
                let roles = solve_snapshot(cache, snap, budget);
                solved_line = Some(roles.is_some());
                roles
            };
            self.nodes[u].tick(self.now, &params, &mut solve)
        };
        match solved_line {
            Some(true) => {
                let n = self.nodes[u].snapshot.as_ref().map_or(0, |s| s.members.len());
                self.push(u, TraceEvent::Solve, format!("members {n}"));
            }
            Some(false) => self.push(u, TraceEvent::SolveFailed, String::new()),
            None => {}
        }
        for note in notes {
            self.trace.push(note_line(self.now, u, note));
        }
        self.hellos_sent += 1;
        self.push(
            u,
            TraceEvent::Hello,
            format!("root {} dist {} seq {}", msg.min_id, msg.distance, msg.seq),
        );
        let g = self.g;
        for &v in g.neighbors(u) {
            if !self.alive[v] {
                continue;
            }
            if self.cfg.loss > 0.0 && self.rng.gen_bool(self.cfg.loss.min(1.0)) {
                self.receptions_lost += 1;
                self.push(v, TraceEvent::Lost, u.to_string());
                continue;
            }
            let notes = self.nodes[v].handle_hello(&msg, self.now, &params);
            for note in notes {
                self.trace.push(note_line(self.now, v, note));
            }
        }
    }

    /// Recomputes the target state for the current set of live nodes.
    fn retarget(&mut self) -> Result<()> {
        let n = self.g.n();
        let live: Vec<NodeId> = (0..n).filter(|&u| self.alive[u]).collect();
        let (sub, map) = self.g.induced_subgraph(&live);
        let mut roles = vec![Role::Dominator; n];
        let mut parents = vec![None; n];
        for comp in components(&sub) {
            let (cg, cmap) = sub.induced_subgraph(&comp);
            let ct = build_cluster_tree_oracle(&cg, self.cfg.params.radius)?;
            let problems = cluster_problems(&cg, &ct);
            let mut local = Vec::new();
            for p in &problems {
                let snap = ClusterSnapshot {
                    members: p.members.clone(),
                    edges: p.subgraph.edges().map(|(a, b)| (p.members[a], p.members[b])).collect(),
                    fixed: p.fixed.iter().map(|(i, r)| (p.members[i], r)).collect(),
                };
                let solved = solve_snapshot(&mut self.cache, &snap, self.cfg.budget)
                    .ok_or(Error::InfeasibleFixed)?;
                local.push(RoleAssignment::new(
                    p.members.iter().map(|u| solved[u]).collect(),
                ));
            }
            let ra = merge_cluster_roles(cg.n(), &ct, &problems, &local);
            for i in 0..cg.n() {
                let u = map[cmap[i]];
                roles[u] = ra.role(i);
                parents[u] = ct.parent(i).map(|p| map[cmap[p]]);
            }
        }
        self.target_roles = roles;
        self.target_parents = parents;
        self.roles_since = None;
        self.tree_since = None;
        Ok(())
    }

    fn observe(&mut self) {
        let roles_ok = (0..self.g.n())
            .filter(|&u| self.alive[u])
            .all(|u| self.nodes[u].assigned_role == Some(self.target_roles[u]));
        let tree_ok = (0..self.g.n())
            .filter(|&u| self.alive[u])
            .all(|u| self.nodes[u].parent == self.target_parents[u]);
        self.roles_since = match (roles_ok, self.roles_since) {
            (true, Some(t)) => Some(t),
            (true, None) => Some(self.now),
            (false, _) => None,
        };
        self.tree_since = match (tree_ok, self.tree_since) {
            (true, Some(t)) => Some(t),
            (true, None) => Some(self.now),
            (false, _) => None,
        };
    }

    /// Time since which both roles and parents have matched the target.
    fn settled_since(&self) -> Option<f64> {
        Some(self.roles_since?.max(self.tree_since?))
    }

    /// True once roles and parents have matched the target for the
    /// confirmation window and no churn is pending.
    pub fn is_settled(&self) -> bool {
        self.now >= self.last_churn
            && self
                .settled_since()
                .is_some_and(|t| self.now - t >= self.cfg.confirm_time - TIME_EPS)
    }

    /// Runs until settled or out of time.
    pub fn run(mut self) -> Result<ProtocolOutcome> {
        self.drive()?;
        let converged = self.is_settled();
        Ok(self.finish(converged))
    }

    /// Hands back the solve cache.
    pub fn take_cache(&mut self) -> SolveCache {
        std::mem::take(&mut self.cache)
    }

    fn drive(&mut self) -> Result<()> {
        while !self.is_settled() {
            if !self.step()? {
                break;
            }
        }
        let converged = self.is_settled();
        if converged {
            let t = self.settled_since().unwrap();
            self.trace.push(TraceLine {
                time: self.now,
                event: TraceEvent::Converged,
                node: 0,
                detail: format!("{t:.6}"),
            });
        }
        Ok(())
    }

    fn finish(self, converged: bool) -> ProtocolOutcome {
        let n = self.g.n();
        let settled = self.settled_since().filter(|_| converged);
        let live: Vec<NodeId> = (0..n).filter(|&u| self.alive[u]).collect();
        let (sub, map) = self.g.induced_subgraph(&live);
        let parents: Vec<Option<NodeId>> = (0..n)
            .map(|u| if self.alive[u] { self.nodes[u].parent } else { None })
            .collect();
        let trees = components(&sub)
            .into_iter()
            .filter_map(|comp| {
                let root = map[comp[0]];
                let mut p = vec![None; n];
                for &i in &comp {
                    p[map[i]] = parents[map[i]];
                }
                ClusterTree::from_parents(root, p, self.cfg.params.radius)
                    .ok()
                    .filter(|ct| comp.iter().all(|&i| ct.contains(map[i])))
            })
            .collect();
        let roles = RoleAssignment::new(
            (0..n)
                .map(|u| {
                    if self.alive[u] {
                        self.nodes[u].assigned_role.unwrap_or(Role::Dominator)
                    } else {
                        Role::Dominator
                    }
                })
                .collect(),
        );
        ProtocolOutcome {
            trace: self.trace,
            trees,
            roles,
            alive: self.alive,
            converged,
            convergence_time: settled,
            tree_convergence_time: self.tree_since,
            target_roles: RoleAssignment::new(self.target_roles),
            target_parents: self.target_parents,
            end_time: self.now,
            hellos_sent: self.hellos_sent,
            receptions_lost: self.receptions_lost,
        }
    }
}

/// Solves a cluster given in global ids, memoized on its shape.
fn solve_snapshot(
    cache: &mut SolveCache,
    snap: &ClusterSnapshot,
    budget: usize,
) -> Option<BTreeMap<NodeId, Role>> {
    let local = |u: NodeId| snap.members.binary_search(&u).unwrap();
    let key: SolveKey = (
        snap.members.len(),
        snap.edges.iter().map(|&(a, b)| (local(a), local(b))).collect(),
        snap.fixed.iter().map(|&(u, r)| (local(u), r)).collect(),
    );
    let roles = cache
        .0
        .entry(key)
        .or_insert_with_key(|(n, edges, fixed)| {
            let sub = NetworkGraph::from_edges(*n, edges).ok()?;
            let fixed: FixedRoles = fixed.iter().copied().collect();
            assign_cluster_roles(&sub, &fixed, budget)
                .ok()
                .map(|(ra, _)| ra.as_slice().to_vec())
        })
        .clone()?;
    Some(snap.members.iter().copied().zip(roles).collect())
}

/// Runs the protocol to convergence.
///
/// Fails with `SimBudgetExceeded` when the roles have not settled on the
/// target by `max_time`; use [`Simulator`] directly to inspect such runs.
pub fn run_protocol(g: &NetworkGraph, cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    run_protocol_with_cache(g, cfg, &mut SolveCache::new())
}

/// [`run_protocol`] reusing (and extending) cluster solutions from `cache`.
pub fn run_protocol_with_cache(
    g: &NetworkGraph,
    cfg: &ProtocolConfig,
    cache: &mut SolveCache,
) -> Result<ProtocolOutcome> {
    let mut sim = Simulator::with_cache(g, cfg.clone(), std::mem::take(cache))?;
    let driven = sim.drive();
    *cache = sim.take_cache();
    driven?;
    let converged = sim.is_settled();
    let out = sim.finish(converged);
    if out.converged {
        Ok(out)
    } else {
        Err(Error::SimBudgetExceeded { time: out.end_time })
    }
}
