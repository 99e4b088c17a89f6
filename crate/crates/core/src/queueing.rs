//! Per-cycle arrival rates, delivery cost and ferry rate optimization.
//!
//! Every (cycle, slot) pair is treated as an M/M/1 queue whose service rate is
//! the cycle's turnaround rate `mu`. A route is a tandem of such queues, so its
//! mean delay is the sum of `1 / (mu - lambda)` over the queues it visits.
//!
//! The cost of a cycle is `g(mu) = sum_k w(k) / (mu - lambda(k)) + mu`; it is
//! strictly convex on `mu > max_k lambda(k)` and is minimized independently per
//! cycle by Newton's method on `g'`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{CycleId, CyclePlan, Slot};
use crate::geometry::{DirectedEdge, NodeId};
use crate::routing::{Route, Router, RoutingError};

/// Newton stops once `|g'(mu)|` falls below this.
pub const GRADIENT_TOL: f64 = 1e-10;
/// Newton also stops once a step is this small relative to `mu`.
pub const STEP_TOL: f64 = 1e-12;
pub const MAX_NEWTON_ITERATIONS: u32 = 200;

pub type ServerKey = (CycleId, Slot);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: mu = {mu} does not exceed lambda = {lambda}{}", describe_server(.server))]
    Unstable { server: Option<ServerKey>, lambda: f64, mu: f64 },
    #[error("no cycle carries positive weight")]
    NoPositiveWeights,
    #[error("rate search did not converge for cycle {0}")]
    NonConvergence(CycleId),
    #[error("cost of cycle {0} has no interior minimum")]
    NoInteriorOptimum(CycleId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("demand {from} -> {to}: {error}")]
    Routing { from: NodeId, to: NodeId, error: RoutingError },
}

fn describe_server(server: &Option<ServerKey>) -> String {
    match server {
        Some((c, k)) => format!(" at cycle {c} slot {k}"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub rho: f64,
    /// Mean number of requests in the system.
    pub l: f64,
    /// Mean time in the system.
    pub et: f64,
}

/// Closed-form M/M/1 statistics.
pub fn mm1_stats(lambda: f64, mu: f64) -> Result<QueueStats, QueueError> {
    if !(lambda >= 0.0) || !lambda.is_finite() || !mu.is_finite() {
        return Err(QueueError::InvalidInput(format!("lambda = {lambda}, mu = {mu}")));
    }
    if mu <= lambda {
        return Err(QueueError::Unstable { server: None, lambda, mu });
    }
    let rho = lambda / mu;
    Ok(QueueStats { rho, l: rho / (1.0 - rho), et: 1.0 / (mu - lambda) })
}

/// Request rates between ordered node pairs.
///
/// Serialized as a JSON object keyed by `"s,t"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct DemandMatrix {
    entries: BTreeMap<(NodeId, NodeId), f64>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `rate` to the pair. Rejects self-pairs and negative or non-finite rates.
    pub fn add(&mut self, s: NodeId, t: NodeId, rate: f64) -> Result<(), QueueError> {
        if s == t {
            return Err(QueueError::InvalidInput(format!("demand from {s} to itself")));
        }
        if !rate.is_finite() || rate < 0.0 {
            return Err(QueueError::InvalidInput(format!("demand rate {rate} for {s},{t}")));
        }
        *self.entries.entry((s, t)).or_insert(0.0) += rate;
        Ok(())
    }

    pub fn rate(&self, s: NodeId, t: NodeId) -> f64 {
        self.entries.get(&(s, t)).copied().unwrap_or(0.0)
    }

    /// Pairs with a positive rate, in (s, t) order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.entries.iter().filter(|(_, r)| **r > 0.0).map(|(&(s, t), &r)| (s, t, r))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_rate(&self) -> f64 {
        self.iter().map(|(_, _, r)| r).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(s, t, r)| (self.rate(t, s) - r).abs() <= 1e-12 * r.max(1.0))
    }

    /// Demand proportional to the product of node weights, scaled so the
    /// rates sum to `total`. Pairs with a zero product are left out.
    pub fn gravity(weights: &[(NodeId, f64)], total: f64) -> Result<Self, QueueError> {
        let mut raw = Vec::new();
        for &(s, ws) in weights {
            for &(t, wt) in weights {
                if s != t && ws * wt > 0.0 {
                    raw.push((s, t, ws * wt));
                }
            }
        }
        let sum: f64 = raw.iter().map(|(_, _, r)| r).sum();
        let mut m = Self::new();
        if sum > 0.0 {
            for (s, t, r) in raw {
                m.add(s, t, total * r / sum)?;
            }
        }
        Ok(m)
    }
}

impl TryFrom<BTreeMap<String, f64>> for DemandMatrix {
    type Error = QueueError;

    fn try_from(raw: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        let mut m = Self::new();
        for (key, rate) in raw {
            let bad = || QueueError::InvalidInput(format!("demand key `{key}` is not `s,t`"));
            let (s, t) = key.split_once(',').ok_or_else(bad)?;
            let s: u32 = s.trim().parse().map_err(|_| bad())?;
            let t: u32 = t.trim().parse().map_err(|_| bad())?;
            m.add(NodeId(s), NodeId(t), rate)?;
        }
        Ok(m)
    }
}

impl From<DemandMatrix> for BTreeMap<String, f64> {
    fn from(m: DemandMatrix) -> Self {
        m.entries.into_iter().map(|((s, t), r)| (format!("{},{}", s.0, t.0), r)).collect()
    }
}

/// Sparse table keyed by (cycle, slot); absent keys read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServerTable {
    values: BTreeMap<ServerKey, f64>,
}

impl ServerTable {
    pub fn get(&self, cycle: CycleId, slot: Slot) -> f64 {
        self.values.get(&(cycle, slot)).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, cycle: CycleId, slot: Slot, amount: f64) {
        *self.values.entry((cycle, slot)).or_insert(0.0) += amount;
    }

    pub fn set(&mut self, cycle: CycleId, slot: Slot, value: f64) {
        self.values.insert((cycle, slot), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServerKey, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    /// Slots of one cycle with their values.
    pub fn cycle_slots(&self, cycle: CycleId) -> impl Iterator<Item = (Slot, f64)> + '_ {
        self.values.range((cycle, Slot::MIN)..=(cycle, Slot::MAX)).map(|(k, v)| (k.1, *v))
    }

    pub fn cycles(&self) -> Vec<CycleId> {
        let mut out: Vec<CycleId> = self.values.keys().map(|k| k.0).collect();
        out.dedup();
        out
    }
}

/// Arrival rate per (cycle, slot).
pub type FlowTable = ServerTable;
/// Cost weight per (cycle, slot).
pub type WeightTable = ServerTable;

impl Serialize for ServerTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<ServerEntry> =
            self.values.iter().map(|(&(cycle, slot), &value)| ServerEntry { cycle, slot, value }).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ServerTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<ServerEntry>::deserialize(deserializer)?;
        Ok(Self { values: rows.into_iter().map(|r| ((r.cycle, r.slot), r.value)).collect() })
    }
}

#[derive(Serialize, Deserialize)]
struct ServerEntry {
    cycle: CycleId,
    slot: Slot,
    value: f64,
}

/// Per-directed-edge flow before it is attributed to cycles.
pub type EdgeFlow = BTreeMap<DirectedEdge, f64>;

/// Flows and weights derived from one set of demands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowAnalysis {
    pub edge_flow: EdgeFlow,
    pub flows: FlowTable,
    pub weights: WeightTable,
}

/// Splits every demand equally over its equally short routes and attributes
/// each directed edge's flow to its serving cycles, divided by their number.
///
/// Weights count how often each (cycle, slot) delay term appears in the
/// rate-weighted sum of route delays; a term on an edge with two servers binds
/// to either one with probability one half.
pub fn analyze(router: &Router<'_>, plan: &CyclePlan, demands: &DemandMatrix) -> Result<FlowAnalysis, QueueError> {
    let mut out = FlowAnalysis::default();
    for (s, t, rate) in demands.iter() {
        let (shares, _) = router
            .edge_shares(s, t)
            .map_err(|error| QueueError::Routing { from: s, to: t, error })?;
        for (edge, share) in shares {
            let amount = rate * share;
            *out.edge_flow.entry(edge).or_insert(0.0) += amount;
            let serving = plan
                .serving_cycles(edge)
                .map_err(|e| QueueError::InvalidInput(e.to_string()))?;
            if serving.is_empty() {
                return Err(QueueError::InvalidInput(format!("edge {edge} has no serving cycle")));
            }
            let split = serving.len() as f64;
            for &(c, k) in serving {
                out.flows.add(c, k, amount / split);
                out.weights.add(c, k, amount / split);
            }
        }
    }
    Ok(out)
}

/// Arrival rates per (cycle, slot); see [`analyze`].
pub fn edge_flows(router: &Router<'_>, plan: &CyclePlan, demands: &DemandMatrix) -> Result<FlowTable, QueueError> {
    Ok(analyze(router, plan, demands)?.flows)
}

/// Cost weights per (cycle, slot); see [`analyze`].
pub fn weights(router: &Router<'_>, plan: &CyclePlan, demands: &DemandMatrix) -> Result<WeightTable, QueueError> {
    Ok(analyze(router, plan, demands)?.weights)
}

/// Total delivery cost: weighted queue delays plus the sum of service rates.
///
/// Every (cycle, slot) with positive weight or positive arrival rate must be
/// stable under `mu`. Cycles absent from `mu` have rate zero.
pub fn delivery_cost(
    flows: &FlowTable,
    weights: &WeightTable,
    mu: &BTreeMap<CycleId, f64>,
) -> Result<f64, QueueError> {
    let mut cost: f64 = mu.values().sum();
    let mut keys: Vec<ServerKey> = flows.iter().map(|(k, _)| k).chain(weights.iter().map(|(k, _)| k)).collect();
    keys.sort();
    keys.dedup();
    for (c, k) in keys {
        let (lambda, w) = (flows.get(c, k), weights.get(c, k));
        if lambda <= 0.0 && w <= 0.0 {
            continue;
        }
        let m = mu.get(&c).copied().unwrap_or(0.0);
        if m <= lambda {
            return Err(QueueError::Unstable { server: Some((c, k)), lambda, mu: m });
        }
        cost += w / (m - lambda);
    }
    Ok(cost)
}

/// One cycle's cost terms as (weight, arrival rate) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleCost {
    pub terms: Vec<(f64, f64)>,
}

impl CycleCost {
    pub fn new(terms: Vec<(f64, f64)>) -> Self {
        Self { terms }
    }

    /// Smallest feasible rate is strictly above this.
    pub fn lower_bound(&self) -> f64 {
        self.terms.iter().filter(|(w, l)| *w > 0.0 || *l > 0.0).map(|t| t.1).fold(0.0, f64::max)
    }

    pub fn has_weight(&self) -> bool {
        self.terms.iter().any(|(w, _)| *w > 0.0)
    }

    pub fn value(&self, mu: f64) -> f64 {
        self.terms.iter().filter(|(w, _)| *w > 0.0).map(|(w, l)| w / (mu - l)).sum::<f64>() + mu
    }

    pub fn gradient(&self, mu: f64) -> f64 {
        1.0 - self.terms.iter().filter(|(w, _)| *w > 0.0).map(|(w, l)| w / ((mu - l) * (mu - l))).sum::<f64>()
    }

    pub fn curvature(&self, mu: f64) -> f64 {
        2.0 * self.terms.iter().filter(|(w, _)| *w > 0.0).map(|(w, l)| w / (mu - l).powi(3)).sum::<f64>()
    }

    /// Starting rate: square root of the weight at the busiest slot plus its
    /// arrival rate. It never lies above the optimum.
    pub fn initial_rate(&self) -> f64 {
        let busiest = self
            .terms
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(j.cmp(i)))
            .map(|(_, t)| *t)
            .unwrap_or((0.0, 0.0));
        busiest.0.max(0.0).sqrt() + busiest.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptimum {
    pub mu: f64,
    pub initial: f64,
    pub iterations: u32,
    pub bisected: bool,
}

/// Minimizes one cycle's cost. Newton from [`CycleCost::initial_rate`], with
/// bisection on the gradient if an iterate leaves the feasible region.
pub fn optimize_cycle(cycle: CycleId, cost: &CycleCost) -> Result<CycleOptimum, QueueError> {
    for &(w, l) in &cost.terms {
        if !w.is_finite() || !l.is_finite() || w < 0.0 || l < 0.0 {
            return Err(QueueError::InvalidInput(format!("cycle {cycle} has term w = {w}, lambda = {l}")));
        }
    }
    let lb = cost.lower_bound();
    let pinned = cost.terms.iter().any(|(w, l)| *w > 0.0 && *l == lb);
    if !pinned {
        // the gradient stays finite at the lower bound
        let limit = 1.0
            - cost.terms.iter().filter(|(w, l)| *w > 0.0 && *l < lb).map(|(w, l)| w / ((lb - l) * (lb - l))).sum::<f64>();
        if limit >= 0.0 {
            return Err(QueueError::NoInteriorOptimum(cycle));
        }
    }
    let initial = cost.initial_rate();
    let mut mu = initial;
    let mut iterations = 0;
    if mu > lb && mu.is_finite() {
        while iterations < MAX_NEWTON_ITERATIONS {
            let g = cost.gradient(mu);
            if g.abs() <= GRADIENT_TOL {
                return Ok(CycleOptimum { mu, initial, iterations, bisected: false });
            }
            let step = g / cost.curvature(mu);
            let next = mu - step;
            iterations += 1;
            if !(next > lb) || !next.is_finite() {
                break;
            }
            mu = next;
            if step.abs() <= STEP_TOL * mu {
                return Ok(CycleOptimum { mu, initial, iterations, bisected: false });
            }
        }
    }
    let (mu, extra) = bisect(cycle, cost, lb)?;
    Ok(CycleOptimum { mu, initial, iterations: iterations + extra, bisected: true })
}

fn bisect(cycle: CycleId, cost: &CycleCost, lb: f64) -> Result<(f64, u32), QueueError> {
    let mut width = lb.max(1.0);
    let mut hi = lb + width;
    let mut iterations = 0;
    while cost.gradient(hi) <= 0.0 {
        width *= 2.0;
        hi = lb + width;
        iterations += 1;
        if iterations > 2000 || !hi.is_finite() {
            return Err(QueueError::NonConvergence(cycle));
        }
    }
    let mut lo = lb;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let g = cost.gradient(mid);
        if g.abs() <= GRADIENT_TOL {
            return Ok((mid, iterations));
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    if mu > lb {
        Ok((mu, iterations))
    } else {
        Err(QueueError::NonConvergence(cycle))
    }
}

/// Optimized service rate per cycle together with the resulting cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    pub mu: BTreeMap<CycleId, f64>,
    /// Starting rates of the search, for comparison.
    pub initial: BTreeMap<CycleId, f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: BTreeMap<CycleId, u32>,
    /// `mu - max_k lambda(k)` for every cycle with traffic.
    pub margins: BTreeMap<CycleId, f64>,
}

impl RateSolution {
    pub fn rate(&self, cycle: CycleId) -> f64 {
        self.mu.get(&cycle).copied().unwrap_or(0.0)
    }

    /// Rates given directly rather than optimized; `cost` is filled when stable.
    pub fn fixed(mu: BTreeMap<CycleId, f64>, flows: &FlowTable, weights: &WeightTable) -> Result<Self, QueueError> {
        let cost = delivery_cost(flows, weights, &mu)?;
        let margins = margins(flows, &mu);
        Ok(Self { initial: mu.clone(), iterations: BTreeMap::new(), initial_cost: cost, cost, mu, margins })
    }
}

fn margins(flows: &FlowTable, mu: &BTreeMap<CycleId, f64>) -> BTreeMap<CycleId, f64> {
    let mut out = BTreeMap::new();
    for c in flows.cycles() {
        let max_l = flows.cycle_slots(c).map(|(_, l)| l).fold(0.0, f64::max);
        if max_l > 0.0 {
            out.insert(c, mu.get(&c).copied().unwrap_or(0.0) - max_l);
        }
    }
    out
}

/// Minimizes the delivery cost cycle by cycle. Cycles whose weights are all
/// zero get rate zero. `cycles` lists any further cycles to report (with rate
/// zero when they carry no weight).
pub fn optimize_rates(
    flows: &FlowTable,
    weights: &WeightTable,
    cycles: impl IntoIterator<Item = CycleId>,
) -> Result<RateSolution, QueueError> {
    let mut all: Vec<CycleId> = flows.cycles();
    all.extend(weights.cycles());
    all.extend(cycles);
    all.sort();
    all.dedup();
    let mut mu = BTreeMap::new();
    let mut initial = BTreeMap::new();
    let mut iterations = BTreeMap::new();
    let mut any = false;
    for c in all {
        let mut slots: BTreeMap<Slot, (f64, f64)> = BTreeMap::new();
        for (k, w) in weights.cycle_slots(c) {
            slots.entry(k).or_default().0 = w;
        }
        for (k, l) in flows.cycle_slots(c) {
            slots.entry(k).or_default().1 = l;
        }
        let cost = CycleCost::new(slots.into_values().collect());
        if !cost.has_weight() {
            if cost.lower_bound() > 0.0 {
                return Err(QueueError::InvalidInput(format!("cycle {c} has traffic but zero weight")));
            }
            mu.insert(c, 0.0);
            initial.insert(c, 0.0);
            continue;
        }
        any = true;
        let opt = optimize_cycle(c, &cost)?;
        mu.insert(c, opt.mu);
        initial.insert(c, opt.initial);
        iterations.insert(c, opt.iterations);
    }
    if !any {
        return Err(QueueError::NoPositiveWeights);
    }
    let cost = delivery_cost(flows, weights, &mu)?;
    let initial_cost = delivery_cost(flows, weights, &initial).unwrap_or(f64::INFINITY);
    let margins = margins(flows, &mu);
    Ok(RateSolution { mu, initial, cost, initial_cost, iterations, margins })
}

/// Sum of `1 / (mu - lambda)` over the servers a route visits.
pub fn analytic_route_delay(route: &Route, flows: &FlowTable, solution: &RateSolution) -> Result<f64, QueueError> {
    if route.cycle_trace.len() != route.directed_edges.len() {
        return Err(QueueError::InvalidInput("route has no complete cycle trace".into()));
    }
    let mut total = 0.0;
    for &(c, k) in &route.cycle_trace {
        let (lambda, mu) = (flows.get(c, k), solution.rate(c));
        if mu <= lambda {
            return Err(QueueError::Unstable { server: Some((c, k)), lambda, mu });
        }
        total += 1.0 / (mu - lambda);
    }
    Ok(total)
}

impl fmt::Display for RateSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cycles, cost {}", self.mu.len(), self.cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{assign_cycles, Scheme};
    use crate::geometry::{regions, FaceId, Network, Point};
    use crate::routing::DamageSet;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mm1_closed_forms() {
        let s = mm1_stats(1.0, 2.0).unwrap();
        assert_eq!((s.rho, s.l, s.et), (0.5, 1.0, 1.0));
        let s = mm1_stats(0.0, 1.0).unwrap();
        assert_eq!((s.rho, s.l, s.et), (0.0, 0.0, 1.0));
        assert!(matches!(mm1_stats(1.0, 1.0), Err(QueueError::Unstable { .. })));
    }

    #[test]
    fn single_cycle_costs() {
        let c = CycleId(0);
        let mut flows = FlowTable::default();
        let mut w = WeightTable::default();
        w.set(c, 1, 1.0);
        let mu = BTreeMap::from([(c, 1.0), (CycleId(1), 0.0)]);
        assert_eq!(delivery_cost(&flows, &w, &mu).unwrap(), 2.0);
        flows.set(c, 1, 1.0);
        w.set(c, 1, 9.0);
        let mu = BTreeMap::from([(c, 4.0)]);
        assert_eq!(delivery_cost(&flows, &w, &mu).unwrap(), 7.0);
        let mu = BTreeMap::from([(c, 1.0)]);
        assert!(matches!(delivery_cost(&flows, &w, &mu), Err(QueueError::Unstable { .. })));
    }

    #[test]
    fn single_slot_optimum_is_closed_form() {
        let opt = optimize_cycle(CycleId(0), &CycleCost::new(vec![(9.0, 1.0)])).unwrap();
        assert_eq!(opt.mu, 4.0);
        assert_eq!(opt.iterations, 0);
    }

    #[test]
    fn three_equal_slots() {
        let opt = optimize_cycle(CycleId(0), &CycleCost::new(vec![(1.0, 0.0); 3])).unwrap();
        assert!(close(opt.mu, 3f64.sqrt(), 1e-12));
        assert!(opt.initial <= opt.mu);
    }

    #[test]
    fn unequal_slots_respect_stability() {
        let cost = CycleCost::new(vec![(4.0, 3.0), (1.0, 1.0), (1.0, 0.0)]);
        let opt = optimize_cycle(CycleId(0), &cost).unwrap();
        assert!(opt.mu > 3.0);
        assert!(cost.gradient(opt.mu).abs() < 1e-8);
        assert!(cost.curvature(opt.mu) > 0.0);
    }

    #[test]
    fn boundary_optimum_is_reported() {
        // the busiest slot carries no weight and the others cannot pull mu below it
        let cost = CycleCost::new(vec![(0.0, 5.0), (1.0, 0.0)]);
        assert_eq!(optimize_cycle(CycleId(3), &cost), Err(QueueError::NoInteriorOptimum(CycleId(3))));
        let cost = CycleCost::new(vec![(0.0, 1.0), (4.0, 0.5)]);
        let opt = optimize_cycle(CycleId(3), &cost).unwrap();
        assert!(opt.bisected || opt.mu > 1.0);
        assert!(cost.gradient(opt.mu).abs() < 1e-8);
    }

    #[test]
    fn zero_weight_cycles_get_zero_rate() {
        let mut flows = FlowTable::default();
        let mut w = WeightTable::default();
        flows.set(CycleId(0), 1, 1.0);
        w.set(CycleId(0), 1, 1.0);
        let sol = optimize_rates(&flows, &w, [CycleId(7)]).unwrap();
        assert_eq!(sol.rate(CycleId(7)), 0.0);
        assert_eq!(sol.rate(CycleId(0)), 2.0);
        assert!(sol.cost <= sol.initial_cost);
        assert_eq!(optimize_rates(&FlowTable::default(), &WeightTable::default(), []), Err(QueueError::NoPositiveWeights));
    }

    #[test]
    fn route_delay_sums_the_tandem() {
        let route = Route {
            source: NodeId(0),
            terminal: NodeId(2),
            directed_edges: vec![DirectedEdge::new(NodeId(0), NodeId(1)), DirectedEdge::new(NodeId(1), NodeId(2))],
            length: 2.0,
            cycle_trace: vec![(CycleId(0), 1), (CycleId(1), 1)],
        };
        let mut flows = FlowTable::default();
        flows.set(CycleId(0), 1, 1.0);
        flows.set(CycleId(1), 1, 1.0);
        let sol = RateSolution::fixed(BTreeMap::from([(CycleId(0), 2.0), (CycleId(1), 2.0)]), &flows, &flows).unwrap();
        assert_eq!(analytic_route_delay(&route, &flows, &sol).unwrap(), 2.0);
    }

    #[test]
    fn demand_matrix_json_uses_pair_keys() {
        let mut m = DemandMatrix::new();
        m.add(NodeId(1), NodeId(2), 0.5).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"1,2":0.5}"#);
        let back: DemandMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<DemandMatrix>(r#"{"1;2":1}"#).is_err());
        assert!(m.add(NodeId(3), NodeId(3), 1.0).is_err());
    }

    #[test]
    fn shared_edge_splits_flow_between_two_cycles() {
        let mut net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        net.subdivide_face(FaceId(0)).unwrap();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let router = Router::from_plan(&net, &plan, &DamageSet::none());
        // an interior edge of the center triangle
        let (u, v) = (NodeId(3), NodeId(4));
        let mut demands = DemandMatrix::new();
        demands.add(u, v, 1.0).unwrap();
        let a = analyze(&router, &plan, &demands).unwrap();
        let serving = plan.serving_cycles(DirectedEdge::new(u, v)).unwrap();
        assert_eq!(serving.len(), 2);
        for &(c, k) in serving {
            assert_eq!(a.flows.get(c, k), 0.5);
            assert_eq!(a.weights.get(c, k), 0.5);
        }
        assert_eq!(a.flows.total(), 1.0);
    }
}
