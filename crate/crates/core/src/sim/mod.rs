//! Discrete-event simulation of store-carry-forward delivery.
//!
//! Both modes share one event loop ordered by `(time, sequence number)`. In
//! queue mode every (cycle, slot) pair is an M/M/1 server. In ferry mode
//! ferries are explicit tokens walking their cycles hop by hop, and scripted
//! failures, repairs and subdivisions drive the procedures in `recovery`.

mod metrics;
mod recovery;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{CycleClass, CycleId, CyclePlan, Scheme, Slot};
use crate::geometry::{DirectedEdge, FaceId, GeometryError, Network, NodeId, NodeState};
use crate::queueing::{self, DemandMatrix, QueueError, ServerKey};
use crate::routing::{DamageSet, RouteSampler, Router};
use crate::seed;

pub use metrics::{
    CostComponents, LogEntry, LogKind, MessageRecord, Metrics, NodeQueueMetrics, PairMetrics, RecoveryEpisode,
    ServerMetrics,
};
pub use recovery::CycleDelta;

use metrics::{percentile, Level};
use recovery::LiveCycle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FerryId(pub u32);

impl fmt::Display for FerryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every (cycle, slot) is an exponential server; no ferry tokens.
    #[default]
    Queue,
    /// Ferries carry messages hop by hop; supports failure and growth scripts.
    Ferry,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Queue => "queue",
            Mode::Ferry => "ferry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Failed ferry-node interactions before a node counts as failed.
    #[serde(rename = "F", default = "default_failed_interactions")]
    pub failed_interactions: u32,
    /// A stop unvisited for this many expected turnarounds reports its ferry.
    #[serde(rename = "T_mult", default = "default_timeout_multiplier")]
    pub timeout_multiplier: f64,
}

fn default_failed_interactions() -> u32 {
    3
}

fn default_timeout_multiplier() -> f64 {
    3.0
}

impl Default for Detection {
    fn default() -> Self {
        Self { failed_interactions: default_failed_interactions(), timeout_multiplier: default_timeout_multiplier() }
    }
}

/// Service rates given to cycles created during recovery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePolicy {
    /// Re-run the optimizer over the new plan.
    #[default]
    Reoptimize,
    /// Take the largest rate among the cycles being replaced.
    InheritMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    NodeFailure,
    FerryFailure,
    NodeRepair,
    FerryRepair,
    Subdivide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    #[serde(rename = "type")]
    pub kind: ScriptKind,
    /// Node, ferry or face id depending on `kind`.
    pub target: u32,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    /// Messages created after `horizon - drain` are not required to arrive.
    #[serde(default)]
    pub drain: f64,
    #[serde(default)]
    pub demands: DemandMatrix,
    #[serde(default)]
    pub rates: BTreeMap<CycleId, f64>,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default)]
    pub detection: Detection,
    #[serde(default = "default_ferries_per_cycle")]
    pub ferries_per_cycle: u32,
    #[serde(default)]
    pub rate_policy: RatePolicy,
    /// Speed of ferries on cycles whose rate is below it (zero-traffic
    /// cycles still need to move to detect failures). Defaults to the smallest
    /// positive configured rate.
    #[serde(default)]
    pub idle_rate: Option<f64>,
}

fn default_ferries_per_cycle() -> u32 {
    1
}

impl SimConfig {
    pub fn new(mode: Mode, seed: u64, horizon: f64) -> Self {
        Self {
            mode,
            seed,
            horizon,
            drain: 0.0,
            demands: DemandMatrix::new(),
            rates: BTreeMap::new(),
            events: Vec::new(),
            detection: Detection::default(),
            ferries_per_cycle: 1,
            rate_policy: RatePolicy::default(),
            idle_rate: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.drain >= 0.0 && self.drain < self.horizon) {
            return bad(format!("drain must lie in [0, horizon), got {}", self.drain));
        }
        if self.detection.failed_interactions < 1 {
            return bad("F must be at least 1".into());
        }
        if !(self.detection.timeout_multiplier > 1.0) {
            return bad(format!("T_mult must exceed 1, got {}", self.detection.timeout_multiplier));
        }
        if self.ferries_per_cycle < 1 {
            return bad("ferries_per_cycle must be at least 1".into());
        }
        if let Some((c, r)) = self.rates.iter().find(|(_, r)| !(r.is_finite() && **r >= 0.0)) {
            return bad(format!("rate of cycle {c} is {r}"));
        }
        if let Some(r) = self.idle_rate {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("idle_rate must be positive, got {r}"));
            }
        }
        if let Some(e) = self.events.iter().find(|e| !(e.time >= 0.0 && e.time <= self.horizon)) {
            return bad(format!("event at {} lies outside [0, horizon]", e.time));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unstable configuration: cycle {cycle} slot {slot} has lambda = {lambda} but mu = {mu}")]
    UnstableConfig { cycle: CycleId, slot: Slot, lambda: f64, mu: f64 },
    #[error("unknown {kind} {id}")]
    UnknownEntity { kind: &'static str, id: u32 },
    #[error("{kind} {id} has already failed")]
    AlreadyFailed { kind: &'static str, id: u32 },
    #[error("{kind} {id} has not failed")]
    NotFailed { kind: &'static str, id: u32 },
    #[error("face {0} carries no child cycles to unify")]
    NotDivided(FaceId),
    #[error("no failure recorded inside face {0}")]
    NoTrigger(FaceId),
    #[error("face {0} carries no unified cycle")]
    NotUnified(FaceId),
    #[error("every child of face {0} still has a failed corner")]
    NodesStillInactive(FaceId),
    #[error("face {0} is not a leaf")]
    NotALeaf(FaceId),
    #[error("face {0} carries no active cycle")]
    NoActiveCycle(FaceId),
    #[error("scripted events need ferry mode")]
    EventsRequireFerryMode,
    #[error("time {time} lies outside [{now}, {horizon}]")]
    TimeOutOfRange { time: f64, now: f64, horizon: f64 },
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Arrival(usize),
    Service(ServerKey),
    Depart { ferry: FerryId, epoch: u64 },
    Hop { ferry: FerryId, epoch: u64 },
    Script(usize),
    Watch { cycle: CycleId, node: NodeId },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Message {
    source: NodeId,
    terminal: NodeId,
    created_at: f64,
    delivered_at: Option<f64>,
    path: Vec<DirectedEdge>,
    /// Queue mode only: the server chosen for each hop.
    trace: Vec<ServerKey>,
    hop: usize,
    hops: u32,
    at: NodeId,
    entered: f64,
}

#[derive(Debug, Clone)]
struct Ferry {
    class: CycleClass,
    cycle: Option<CycleId>,
    last_face: Option<FaceId>,
    node: NodeId,
    stop: usize,
    heading: Option<DirectedEdge>,
    moving: bool,
    epoch: u64,
    onboard: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
struct Server {
    queue: VecDeque<u64>,
    busy: bool,
    level: Level,
    visits: u64,
    sojourn: f64,
}

/// A running simulation. Build with [`Simulation::new`], advance with
/// [`Simulation::run_until`], collect with [`Simulation::finish`].
pub struct Simulation {
    config: SimConfig,
    scheme: Scheme,
    net: Network,
    now: f64,
    rng: ChaCha8Rng,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    script: Vec<ScriptEvent>,

    cycles: BTreeMap<CycleId, LiveCycle>,
    next_cycle: u32,
    plan: CyclePlan,
    rates: BTreeMap<CycleId, f64>,
    idle_rate: f64,

    /// Ground truth: nodes that are down.
    down: BTreeSet<NodeId>,
    /// Failures the ferries have detected.
    known_failed: BTreeSet<NodeId>,
    /// Nodes added at runtime that no ferry has visited yet.
    undetected: BTreeSet<NodeId>,
    misses: BTreeMap<NodeId, u32>,
    failed_ferries: BTreeSet<FerryId>,
    last_visit: BTreeMap<(CycleId, NodeId), f64>,
    ferries: Vec<Ferry>,

    demand_pairs: Vec<(NodeId, NodeId, f64)>,
    messages: Vec<Message>,
    delivered: u64,
    waiting: BTreeMap<DirectedEdge, VecDeque<u64>>,
    parked: BTreeSet<u64>,
    servers: BTreeMap<ServerKey, Server>,
    node_levels: BTreeMap<NodeId, Level>,
    samplers: BTreeMap<(NodeId, NodeId), Option<RouteSampler>>,

    log: Vec<LogEntry>,
    coverage_violations: u64,
    episodes: Vec<RecoveryEpisode>,
    open_episode: Option<RecoveryEpisode>,
}

impl Simulation {
    /// Checks the configuration and the stability of every used server, then
    /// schedules arrivals, ferries and scripted events.
    pub fn new(net: &Network, plan: &CyclePlan, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        if config.mode == Mode::Queue && !config.events.is_empty() {
            return Err(SimError::EventsRequireFerryMode);
        }
        for (s, t, _) in config.demands.iter() {
            for n in [s, t] {
                if net.node(n).is_none() {
                    return Err(SimError::UnknownEntity { kind: "node", id: n.0 });
                }
            }
        }
        let router = Router::from_plan(net, plan, &DamageSet::none());
        let analysis = queueing::analyze(&router, plan, &config.demands)?;
        for ((cycle, slot), lambda) in analysis.flows.iter() {
            let mu = config.rates.get(&cycle).copied().unwrap_or(0.0);
            if lambda > 0.0 && mu <= lambda {
                return Err(SimError::UnstableConfig { cycle, slot, lambda, mu });
            }
        }
        let initial_ferries = plan.cycles().len() as u32 * config.ferries_per_cycle;
        for e in &config.events {
            check_target(net, e.kind, e.target, initial_ferries)?;
        }

        let idle_rate = config
            .idle_rate
            .or_else(|| config.rates.values().copied().filter(|r| *r > 0.0).min_by(f64::total_cmp))
            .unwrap_or(1.0);
        let mut cycles = BTreeMap::new();
        let mut perimeter = 0;
        for c in plan.cycles() {
            let index = c.face.is_none().then(|| {
                perimeter += 1;
                perimeter - 1
            });
            cycles.insert(c.id, LiveCycle { cycle: c.clone(), ferries: Vec::new(), pending: false, perimeter: index });
        }
        let next_cycle = plan.cycles().iter().map(|c| c.id.0 + 1).max().unwrap_or(0);
        let rates = plan.cycles().iter().map(|c| (c.id, config.rates.get(&c.id).copied().unwrap_or(0.0))).collect();
        let down = net.nodes().iter().filter(|n| n.state == NodeState::Failed).map(|n| n.id).collect();

        let mut sim = Self {
            rng: seed::rng(config.seed, "simulate"),
            scheme: plan.scheme,
            net: net.clone(),
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            script: config.events.clone(),
            cycles,
            next_cycle,
            plan: plan.clone(),
            rates,
            idle_rate,
            down,
            known_failed: BTreeSet::new(),
            undetected: BTreeSet::new(),
            misses: BTreeMap::new(),
            failed_ferries: BTreeSet::new(),
            last_visit: BTreeMap::new(),
            ferries: Vec::new(),
            demand_pairs: config.demands.iter().collect(),
            messages: Vec::new(),
            delivered: 0,
            waiting: BTreeMap::new(),
            parked: BTreeSet::new(),
            servers: BTreeMap::new(),
            node_levels: BTreeMap::new(),
            samplers: BTreeMap::new(),
            log: Vec::new(),
            coverage_violations: 0,
            episodes: Vec::new(),
            open_episode: None,
            config,
        };

        for i in 0..sim.demand_pairs.len() {
            let rate = sim.demand_pairs[i].2;
            if rate > 0.0 {
                let t = sim.exp(rate);
                if t <= sim.config.horizon {
                    sim.schedule(t, Event::Arrival(i));
                }
            }
        }
        if sim.config.mode == Mode::Ferry {
            let ids: Vec<CycleId> = sim.cycles.keys().copied().collect();
            for c in ids {
                for _ in 0..sim.config.ferries_per_cycle {
                    let stops = sim.cycles[&c].cycle.stops();
                    let node = stops[sim.rng.random_range(0..stops.len())];
                    let f = sim.new_ferry(sim.cycles[&c].cycle.class, node);
                    sim.attach(f, c);
                    sim.log(LogKind::FerryDeployed, format!("{f} on {c} at {node}"));
                    sim.place(f);
                }
                for n in sim.cycles[&c].cycle.stops() {
                    sim.last_visit.insert((c, n), 0.0);
                }
            }
        }
        for i in 0..sim.script.len() {
            sim.schedule(sim.script[i].time, Event::Script(i));
        }
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Processes every event up to and including time `until`.
    pub fn run_until(&mut self, until: f64) {
        while let Some(top) = self.queue.peek() {
            if top.time > until {
                break;
            }
            let Scheduled { time, event, .. } = self.queue.pop().expect("peeked");
            self.now = time;
            self.handle(event);
        }
        if until.is_finite() {
            self.now = self.now.max(until);
        }
    }

    /// Active cycles as a plan.
    pub fn active_plan(&self) -> &CyclePlan {
        &self.plan
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn cycle_signatures(&self) -> BTreeSet<crate::cycles::CycleSignature> {
        self.plan.signatures()
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn rates(&self) -> &BTreeMap<CycleId, f64> {
        &self.rates
    }

    pub fn known_failed(&self) -> &BTreeSet<NodeId> {
        &self.known_failed
    }

    /// Current cycle of every ferry; `None` for failed or idle ferries.
    pub fn ferry_assignments(&self) -> BTreeMap<FerryId, Option<CycleId>> {
        self.ferries.iter().enumerate().map(|(i, f)| (FerryId(i as u32), f.cycle)).collect()
    }

    pub fn generated(&self) -> u64 {
        self.messages.len() as u64
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn in_flight(&self) -> u64 {
        self.generated() - self.delivered
    }

    pub fn coverage_violations(&self) -> u64 {
        self.coverage_violations
    }

    pub fn inject_node_failure(&mut self, node: NodeId, time: f64) -> Result<(), SimError> {
        if self.down.contains(&node) {
            return Err(SimError::AlreadyFailed { kind: "node", id: node.0 });
        }
        self.inject(ScriptKind::NodeFailure, node.0, time)
    }

    pub fn inject_ferry_failure(&mut self, ferry: FerryId, time: f64) -> Result<(), SimError> {
        if self.ferries.get(ferry.0 as usize).is_some_and(|f| !f.moving) {
            return Err(SimError::AlreadyFailed { kind: "ferry", id: ferry.0 });
        }
        self.inject(ScriptKind::FerryFailure, ferry.0, time)
    }

    pub fn inject_node_repair(&mut self, node: NodeId, time: f64) -> Result<(), SimError> {
        self.inject(ScriptKind::NodeRepair, node.0, time)
    }

    pub fn inject_ferry_repair(&mut self, ferry: FerryId, time: f64) -> Result<(), SimError> {
        self.inject(ScriptKind::FerryRepair, ferry.0, time)
    }

    /// Schedules the quartering of a leaf face. Its new nodes stay inactive
    /// until a ferry of the face's cycle notices them.
    pub fn subdivide_at_runtime(&mut self, face: FaceId, time: f64) -> Result<(), SimError> {
        let f = self.net.face(face).ok_or(SimError::UnknownEntity { kind: "face", id: face.0 })?;
        if !f.is_leaf() {
            return Err(SimError::NotALeaf(face));
        }
        self.inject(ScriptKind::Subdivide, face.0, time)
    }

    fn inject(&mut self, kind: ScriptKind, target: u32, time: f64) -> Result<(), SimError> {
        if self.config.mode != Mode::Ferry {
            return Err(SimError::EventsRequireFerryMode);
        }
        check_target(&self.net, kind, target, self.ferries.len() as u32)?;
        if !(time >= self.now && time <= self.config.horizon) {
            return Err(SimError::TimeOutOfRange { time, now: self.now, horizon: self.config.horizon });
        }
        self.script.push(ScriptEvent { kind, target, time });
        self.schedule(time, Event::Script(self.script.len() - 1));
        Ok(())
    }

    /// Merges the cycles below `face` into one cycle per class on its boundary.
    /// Needs a detected node failure or a failed ferry inside the face.
    pub fn unify_cycles(&mut self, face: FaceId) -> Result<CycleDelta, SimError> {
        let f = self.net.face(face).ok_or(SimError::UnknownEntity { kind: "face", id: face.0 })?;
        if f.is_leaf() {
            return Err(SimError::NotDivided(face));
        }
        if !self.has_trigger(face) {
            return Err(SimError::NoTrigger(face));
        }
        self.unify(face)
    }

    /// Splits a unified cycle back into child cycles where the children's
    /// corners are not known to be failed.
    pub fn redivide_cycles(&mut self, face: FaceId) -> Result<CycleDelta, SimError> {
        if self.net.face(face).is_none() {
            return Err(SimError::UnknownEntity { kind: "face", id: face.0 });
        }
        self.redivide(face)
    }

    /// Ends the run and assembles the metrics.
    pub fn finish(mut self) -> Metrics {
        self.close_episode();
        let until = self.now;
        let cutoff = self.config.horizon - self.config.drain;
        let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<f64>> = BTreeMap::new();
        let mut all = Vec::new();
        let mut undelivered_before_drain = 0;
        for m in &self.messages {
            match m.delivered_at {
                Some(t) => {
                    by_pair.entry((m.source, m.terminal)).or_default().push(t - m.created_at);
                    all.push(t - m.created_at);
                }
                None if m.created_at < cutoff => undelivered_before_drain += 1,
                None => {}
            }
        }
        let mut pairs = Vec::new();
        let mut delay_cost = 0.0;
        for &(s, t, rate) in &self.demand_pairs {
            let mut delays = by_pair.remove(&(s, t)).unwrap_or_default();
            delays.sort_by(f64::total_cmp);
            let mean = if delays.is_empty() { 0.0 } else { delays.iter().sum::<f64>() / delays.len() as f64 };
            delay_cost += rate * mean;
            pairs.push(PairMetrics {
                source: s,
                terminal: t,
                delivered: delays.len() as u64,
                mean_delay: mean,
                p50_delay: percentile(&delays, 0.5),
                p95_delay: percentile(&delays, 0.95),
            });
        }
        let servers = self
            .servers
            .iter()
            .map(|(&(cycle, slot), s)| ServerMetrics {
                cycle,
                slot,
                visits: s.visits,
                mean_sojourn: if s.visits == 0 { 0.0 } else { s.sojourn / s.visits as f64 },
                mean_in_system: s.level.mean(until),
            })
            .collect();
        let node_queues = self
            .node_levels
            .iter()
            .map(|(&node, l)| NodeQueueMetrics { node, mean_stored: l.mean(until) })
            .collect();
        let messages = self
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| MessageRecord {
                id: i as u64,
                source: m.source,
                terminal: m.terminal,
                created_at: m.created_at,
                delivered_at: m.delivered_at,
                hops: m.hops,
            })
            .collect();
        Metrics {
            mode: self.config.mode.as_str().to_string(),
            horizon: self.config.horizon,
            generated: self.messages.len() as u64,
            delivered: self.delivered,
            in_flight: self.messages.len() as u64 - self.delivered,
            undelivered_before_drain,
            mean_delay: (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64),
            pairs,
            servers,
            node_queues,
            recovery: self.episodes,
            coverage_violations: self.coverage_violations,
            realized_cost: CostComponents { delay: delay_cost, service: self.rates.values().sum() },
            final_cycles: self.cycles.len(),
            final_rates: self.rates,
            messages,
            log: self.log,
        }
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled { time, seq: self.seq, event });
    }

    fn exp(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive finite rate").sample(&mut self.rng)
    }

    fn log(&mut self, kind: LogKind, detail: String) {
        self.log.push(LogEntry { time: self.now, kind, detail });
    }

    fn rate(&self, c: CycleId) -> f64 {
        self.rates.get(&c).copied().unwrap_or(0.0)
    }

    fn effective_rate(&self, c: CycleId) -> f64 {
        self.rate(c).max(self.idle_rate)
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Arrival(pair) => self.on_arrival(pair),
            Event::Service(key) => self.on_service(key),
            Event::Depart { ferry, epoch } => {
                if self.live(ferry, epoch) {
                    self.depart(ferry);
                }
            }
            Event::Hop { ferry, epoch } => {
                if self.live(ferry, epoch) {
                    self.on_hop(ferry, epoch);
                }
            }
            Event::Script(i) => self.on_script(i),
            Event::Watch { cycle, node } => self.on_watch(cycle, node),
        }
    }

    fn live(&self, f: FerryId, epoch: u64) -> bool {
        let ferry = &self.ferries[f.0 as usize];
        ferry.moving && ferry.epoch == epoch && ferry.cycle.is_some()
    }

    fn on_arrival(&mut self, pair: usize) {
        let (s, t, rate) = self.demand_pairs[pair];
        let next = self.now + self.exp(rate);
        if next <= self.config.horizon {
            self.schedule(next, Event::Arrival(pair));
        }
        let id = self.messages.len() as u64;
        self.messages.push(Message {
            source: s,
            terminal: t,
            created_at: self.now,
            delivered_at: None,
            path: Vec::new(),
            trace: Vec::new(),
            hop: 0,
            hops: 0,
            at: s,
            entered: self.now,
        });
        match self.config.mode {
            Mode::Queue => {
                // the stability check already routed every demand over this plan
                let Some(path) = self.sample_path(s, t) else { return };
                let mut trace = Vec::with_capacity(path.len());
                for e in &path {
                    let serving = self.plan.serving_cycles(*e).unwrap_or(&[]);
                    trace.push(serving[self.rng.random_range(0..serving.len())]);
                }
                let m = &mut self.messages[id as usize];
                m.path = path;
                m.trace = trace;
                self.enqueue_server(id);
            }
            Mode::Ferry => self.dispatch(id, s),
        }
    }

    fn enqueue_server(&mut self, id: u64) {
        let now = self.now;
        let m = &mut self.messages[id as usize];
        m.entered = now;
        let key = m.trace[m.hop];
        let server = self.servers.entry(key).or_default();
        server.level.change(now, 1);
        server.queue.push_back(id);
        if !server.busy {
            server.busy = true;
            let d = self.exp(self.rate(key.0));
            self.schedule(now + d, Event::Service(key));
        }
    }

    fn on_service(&mut self, key: ServerKey) {
        let now = self.now;
        let server = self.servers.get_mut(&key).expect("service event for a known server");
        server.busy = false;
        let Some(id) = server.queue.pop_front() else { return };
        server.level.change(now, -1);
        server.visits += 1;
        let m = &mut self.messages[id as usize];
        server.sojourn += now - m.entered;
        m.hop += 1;
        m.hops += 1;
        if m.hop == m.path.len() {
            self.deliver(id);
        } else {
            self.enqueue_server(id);
        }
        let server = self.servers.get_mut(&key).expect("server exists");
        if !server.busy && !server.queue.is_empty() {
            server.busy = true;
            let d = self.exp(self.rate(key.0));
            self.schedule(now + d, Event::Service(key));
        }
    }

    fn deliver(&mut self, id: u64) {
        let m = &mut self.messages[id as usize];
        m.delivered_at = Some(self.now);
        m.hop = m.path.len();
        self.delivered += 1;
    }

    /// Uniformly sampled shortest route over the served hops, cached per pair
    /// until the plan changes.
    fn sample_path(&mut self, s: NodeId, t: NodeId) -> Option<Vec<DirectedEdge>> {
        if !self.samplers.contains_key(&(s, t)) {
            let sampler = Router::from_arcs(&self.net, Some(&self.plan), self.plan.served_edges()).sampler(s, t).ok();
            self.samplers.insert((s, t), sampler);
        }
        let sampler = self.samplers.get(&(s, t))?.as_ref()?;
        Some(sampler.sample(&mut self.rng))
    }

    fn remaining_served(&self, id: u64) -> bool {
        let m = &self.messages[id as usize];
        m.path[m.hop.min(m.path.len())..]
            .iter()
            .all(|e| self.plan.serving_cycles(*e).is_ok_and(|s| !s.is_empty()))
    }

    /// Leaves message `id` at node `at`: delivered, queued for its next hop,
    /// or parked when no route exists.
    fn dispatch(&mut self, id: u64, at: NodeId) {
        let now = self.now;
        let m = &mut self.messages[id as usize];
        m.at = at;
        if at == m.terminal {
            self.deliver(id);
            return;
        }
        let on_track = m.path.get(m.hop).is_some_and(|e| e.from == at);
        if !on_track || !self.remaining_served(id) {
            let t = self.messages[id as usize].terminal;
            match self.sample_path(at, t) {
                Some(path) => {
                    let m = &mut self.messages[id as usize];
                    m.path = path;
                    m.hop = 0;
                }
                None => {
                    self.parked.insert(id);
                    self.node_levels.entry(at).or_default().change(now, 1);
                    return;
                }
            }
        }
        let m = &self.messages[id as usize];
        let e = m.path[m.hop];
        self.waiting.entry(e).or_default().push_back(id);
        self.node_levels.entry(at).or_default().change(now, 1);
    }

    fn depart(&mut self, f: FerryId) {
        let now = self.now;
        let ferry = &self.ferries[f.0 as usize];
        let Some(c) = ferry.cycle else { return };
        let Some(live) = self.cycles.get(&c) else { return };
        let hops = &live.cycle.hops;
        if hops.is_empty() {
            return;
        }
        let mut stop = ferry.stop % hops.len();
        if hops[stop].edge.from != ferry.node {
            stop = nearest_stop(&self.net, hops, ferry.node);
        }
        let edge = hops[stop].edge;
        let n_hops = hops.len() as f64;
        let epoch = ferry.epoch;
        let mut picked = Vec::new();
        if !self.down.contains(&edge.from) {
            if let Some(q) = self.waiting.remove(&edge) {
                let level = self.node_levels.entry(edge.from).or_default();
                for id in q {
                    level.change(now, -1);
                    picked.push(id);
                }
            }
        }
        let ferry = &mut self.ferries[f.0 as usize];
        ferry.stop = stop;
        ferry.node = edge.from;
        ferry.heading = Some(edge);
        ferry.onboard.extend(picked);
        let d = self.exp(self.effective_rate(c) * n_hops);
        self.schedule(now + d, Event::Hop { ferry: f, epoch });
    }

    fn on_hop(&mut self, f: FerryId, epoch: u64) {
        let ferry = &mut self.ferries[f.0 as usize];
        let Some(edge) = ferry.heading.take() else { return };
        let c = ferry.cycle.expect("live ferry has a cycle");
        ferry.node = edge.to;
        ferry.stop += 1;
        let v = edge.to;
        if self.down.contains(&v) {
            if self.known_failed.contains(&v) {
                self.node_failure_detected(v, c);
            } else {
                let misses = self.misses.entry(v).or_insert(0);
                *misses += 1;
                if *misses >= self.config.detection.failed_interactions {
                    self.misses.remove(&v);
                    self.known_failed.insert(v);
                    self.log(LogKind::NodeFailureDetected, format!("{v} by {f} on {c}"));
                    self.node_failure_detected(v, c);
                }
            }
            if self.live(f, epoch) {
                self.depart(f);
            }
            return;
        }
        self.last_visit.insert((c, v), self.now);
        let cargo = std::mem::take(&mut self.ferries[f.0 as usize].onboard);
        for id in cargo {
            let m = &mut self.messages[id as usize];
            if m.path.get(m.hop) == Some(&edge) {
                m.hop += 1;
            }
            m.hops += 1;
            self.dispatch(id, v);
        }
        if self.cycles.get(&c).is_some_and(|l| l.pending) {
            self.handle_pending(c, f);
        }
        if self.live(f, epoch) {
            self.depart(f);
        }
    }

    fn on_script(&mut self, i: usize) {
        let ScriptEvent { kind, target, .. } = self.script[i];
        let outcome = match kind {
            ScriptKind::NodeFailure => self.fail_node(NodeId(target)),
            ScriptKind::FerryFailure => self.fail_ferry(FerryId(target)),
            ScriptKind::NodeRepair => self.repair_node(NodeId(target)),
            ScriptKind::FerryRepair => self.repair_ferry(FerryId(target)),
            ScriptKind::Subdivide => self.grow(FaceId(target)),
        };
        if let Err(e) = outcome {
            self.log(LogKind::Rejected, format!("{kind:?} {target}: {e}"));
        }
    }

    fn on_watch(&mut self, cycle: CycleId, node: NodeId) {
        let Some(live) = self.cycles.get(&cycle) else { return };
        if live.ferries.iter().any(|f| self.ferries[f.0 as usize].moving) {
            return;
        }
        let window = self.config.detection.timeout_multiplier / self.effective_rate(cycle);
        let last = self.last_visit.get(&(cycle, node)).copied().unwrap_or(0.0);
        if self.now - last >= window * (1.0 - 1e-12) {
            self.ferry_failure_detected(cycle, node);
        } else {
            self.schedule(last + window, Event::Watch { cycle, node });
        }
    }

    fn new_ferry(&mut self, class: CycleClass, node: NodeId) -> FerryId {
        let id = FerryId(self.ferries.len() as u32);
        self.ferries.push(Ferry {
            class,
            cycle: None,
            last_face: None,
            node,
            stop: 0,
            heading: None,
            moving: true,
            epoch: 0,
            onboard: Vec::new(),
        });
        id
    }

    fn attach(&mut self, f: FerryId, c: CycleId) {
        let face = self.cycles[&c].cycle.face;
        let ferry = &mut self.ferries[f.0 as usize];
        ferry.cycle = Some(c);
        ferry.last_face = face;
        self.cycles.get_mut(&c).expect("attach to an active cycle").ferries.push(f);
    }

    /// Puts a ferry on the stop of its cycle nearest to where it is, drops its
    /// cargo there and starts it moving.
    fn place(&mut self, f: FerryId) {
        let now = self.now;
        let ferry = &self.ferries[f.0 as usize];
        let Some(c) = ferry.cycle else { return };
        if !ferry.moving {
            return;
        }
        let hops = &self.cycles[&c].cycle.hops;
        if hops.is_empty() {
            return;
        }
        let stop = nearest_stop(&self.net, hops, ferry.node);
        let node = hops[stop].edge.from;
        let ferry = &mut self.ferries[f.0 as usize];
        ferry.stop = stop;
        ferry.node = node;
        ferry.heading = None;
        ferry.epoch += 1;
        let epoch = ferry.epoch;
        let cargo = std::mem::take(&mut ferry.onboard);
        for id in cargo {
            self.dispatch(id, node);
        }
        self.last_visit.insert((c, node), now);
        self.schedule(now, Event::Depart { ferry: f, epoch });
    }
}

fn nearest_stop(net: &Network, hops: &[crate::cycles::Hop], node: NodeId) -> usize {
    if let Some(i) = hops.iter().position(|h| h.edge.from == node) {
        return i;
    }
    let p = net.pos(node);
    (0..hops.len())
        .min_by(|&a, &b| net.pos(hops[a].edge.from).dist(p).total_cmp(&net.pos(hops[b].edge.from).dist(p)))
        .unwrap_or(0)
}

fn check_target(net: &Network, kind: ScriptKind, target: u32, ferries: u32) -> Result<(), SimError> {
    let (entity, exists) = match kind {
        ScriptKind::NodeFailure | ScriptKind::NodeRepair => ("node", (target as usize) < net.node_count()),
        ScriptKind::FerryFailure | ScriptKind::FerryRepair => ("ferry", target < ferries),
        ScriptKind::Subdivide => ("face", (target as usize) < net.faces().len()),
    };
    if exists {
        Ok(())
    } else {
        Err(SimError::UnknownEntity { kind: entity, id: target })
    }
}

/// Runs a whole simulation to its horizon.
pub fn run(net: &Network, plan: &CyclePlan, config: SimConfig) -> Result<Metrics, SimError> {
    let horizon = config.horizon;
    let mut sim = Simulation::new(net, plan, config)?;
    sim.run_until(horizon);
    Ok(sim.finish())
}
