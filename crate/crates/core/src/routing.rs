//! Source-to-terminal routing restricted to the spanner ellipse.
//!
//! Paths are exact shortest paths over the nodes inside the ellipse with foci
//! `s` and `t` whose major axis is twice `|st|`. On a network with the
//! 2-spanner property every shortest path already lies inside that ellipse, so
//! the restriction only bounds the search. Under damage the ellipse is widened
//! to `4|st|`, then dropped, and greedy forwarding with a face walk is the last
//! resort.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{CycleId, CyclePlan, Slot};
use crate::geometry::{DirectedEdge, Edge, Network, NodeId, NodeState, Point};

/// Ellipse major axis as a multiple of `|st|`, tried in order; `None` is the whole graph.
pub const DETOUR_FACTORS: [Option<f64>; 3] = [Some(2.0), Some(4.0), None];

/// Paths within this relative length of the optimum count as equally short.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("source and terminal are the same node {0}")]
    SameNode(NodeId),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("endpoint {0} is failed, inactive or damaged")]
    EndpointUnavailable(NodeId),
    #[error("no path from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("more than {0} equally short routes")]
    TooManyRoutes(usize),
}

/// Removed edges and failed nodes. A failed node removes every incident edge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DamageSet {
    #[serde(default)]
    pub removed_edges: BTreeSet<Edge>,
    #[serde(default)]
    pub failed_nodes: BTreeSet<NodeId>,
}

impl DamageSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.removed_edges.is_empty() && self.failed_nodes.is_empty()
    }

    pub fn blocks(&self, e: Edge) -> bool {
        self.removed_edges.contains(&e) || self.failed_nodes.contains(&e.a) || self.failed_nodes.contains(&e.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub source: NodeId,
    pub terminal: NodeId,
    pub directed_edges: Vec<DirectedEdge>,
    pub length: f64,
    /// Serving (cycle, slot) chosen for each edge; empty when routed without a plan.
    pub cycle_trace: Vec<(CycleId, Slot)>,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.directed_edges.len()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out = vec![self.source];
        out.extend(self.directed_edges.iter().map(|e| e.to));
        out
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path DAG between one source and terminal.
struct ShortestDag {
    length: f64,
    /// DAG nodes ordered by distance from the source.
    order: Vec<NodeId>,
    succ: BTreeMap<NodeId, Vec<NodeId>>,
    from_source: BTreeMap<NodeId, f64>,
    to_terminal: BTreeMap<NodeId, f64>,
}

/// Directed routing graph over a network snapshot.
///
/// Built either from the raw network edges (both directions) or from the hops
/// served by a cycle plan, minus damage. Immutable once built.
pub struct Router<'a> {
    net: &'a Network,
    plan: Option<&'a CyclePlan>,
    out: Vec<Vec<(NodeId, f64)>>,
    inn: Vec<Vec<(NodeId, f64)>>,
    usable: Vec<bool>,
}

impl<'a> Router<'a> {
    /// Graph of every undamaged network edge between active nodes.
    pub fn from_network(net: &'a Network, damage: &DamageSet) -> Self {
        let usable = usable_nodes(net, damage);
        let arcs = net
            .edges()
            .iter()
            .filter(|e| !damage.blocks(**e))
            .flat_map(|e| [DirectedEdge::new(e.a, e.b), DirectedEdge::new(e.b, e.a)]);
        Self::build(net, None, usable, arcs)
    }

    /// Graph of the hops served by `plan`, minus damage.
    pub fn from_plan(net: &'a Network, plan: &'a CyclePlan, damage: &DamageSet) -> Self {
        let usable = usable_nodes(net, damage);
        let arcs = plan.served_edges().filter(|e| !damage.blocks(e.undirected())).collect::<Vec<_>>();
        Self::build(net, Some(plan), usable, arcs)
    }

    /// Graph over an explicit set of directed hops; `plan` supplies cycle traces.
    pub fn from_arcs(
        net: &'a Network,
        plan: Option<&'a CyclePlan>,
        arcs: impl IntoIterator<Item = DirectedEdge>,
    ) -> Self {
        let usable = usable_nodes(net, &DamageSet::none());
        Self::build(net, plan, usable, arcs)
    }

    fn build(
        net: &'a Network,
        plan: Option<&'a CyclePlan>,
        usable: Vec<bool>,
        arcs: impl IntoIterator<Item = DirectedEdge>,
    ) -> Self {
        let n = net.node_count();
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for e in arcs {
            if e.from == e.to || !usable[e.from.index()] || !usable[e.to.index()] || !seen.insert(e) {
                continue;
            }
            let w = net.pos(e.from).dist(net.pos(e.to));
            out[e.from.index()].push((e.to, w));
            inn[e.to.index()].push((e.from, w));
        }
        for list in out.iter_mut().chain(inn.iter_mut()) {
            list.sort_by_key(|(v, _)| *v);
        }
        Self { net, plan, out, inn, usable }
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn plan(&self) -> Option<&CyclePlan> {
        self.plan
    }

    pub fn has_arc(&self, e: DirectedEdge) -> bool {
        self.out.get(e.from.index()).is_some_and(|l| l.iter().any(|(v, _)| *v == e.to))
    }

    fn check_endpoints(&self, s: NodeId, t: NodeId) -> Result<(), RoutingError> {
        for n in [s, t] {
            if n.index() >= self.usable.len() {
                return Err(RoutingError::UnknownNode(n));
            }
        }
        if s == t {
            return Err(RoutingError::SameNode(s));
        }
        for n in [s, t] {
            if !self.usable[n.index()] {
                return Err(RoutingError::EndpointUnavailable(n));
            }
        }
        Ok(())
    }

    fn in_ellipse(&self, s: Point, t: Point, factor: Option<f64>) -> impl Fn(NodeId) -> bool + '_ {
        let bound = factor.map(|k| k * s.dist(t) * (1.0 + TIE_TOL) + f64::EPSILON);
        move |n| match bound {
            None => true,
            Some(b) => {
                let p = self.net.pos(n);
                s.dist(p) + p.dist(t) <= b
            }
        }
    }

    fn dijkstra(
        &self,
        start: NodeId,
        forward: bool,
        inside: &dyn Fn(NodeId) -> bool,
    ) -> BTreeMap<NodeId, f64> {
        let adj = if forward { &self.out } else { &self.inn };
        let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(start, 0.0);
        heap.push(Entry { dist: 0.0, node: start });
        while let Some(Entry { dist: d, node: u }) = heap.pop() {
            if d > dist[&u] {
                continue;
            }
            for &(v, w) in &adj[u.index()] {
                if !inside(v) {
                    continue;
                }
                let nd = d + w;
                if dist.get(&v).is_none_or(|&old| nd < old) {
                    dist.insert(v, nd);
                    heap.push(Entry { dist: nd, node: v });
                }
            }
        }
        dist
    }

    fn dag(&self, s: NodeId, t: NodeId, factor: Option<f64>) -> Option<ShortestDag> {
        let (ps, pt) = (self.net.pos(s), self.net.pos(t));
        let inside = self.in_ellipse(ps, pt, factor);
        let from_source = self.dijkstra(s, true, &inside);
        let length = *from_source.get(&t)?;
        let to_terminal = self.dijkstra(t, false, &inside);
        let tol = TIE_TOL * length.max(f64::MIN_POSITIVE);
        let on_path = |u: NodeId| match (from_source.get(&u), to_terminal.get(&u)) {
            (Some(a), Some(b)) => (a + b - length).abs() <= tol,
            _ => false,
        };
        let mut order: Vec<NodeId> = from_source.keys().copied().filter(|u| on_path(*u)).collect();
        order.sort_by(|a, b| from_source[a].total_cmp(&from_source[b]).then(a.cmp(b)));
        let mut succ: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &u in &order {
            for &(v, w) in &self.out[u.index()] {
                if on_path(v) && (from_source[&u] + w + to_terminal[&v] - length).abs() <= tol {
                    succ.entry(u).or_default().push(v);
                }
            }
        }
        Some(ShortestDag { length, order, succ, from_source, to_terminal })
    }

    fn dag_with_detours(&self, s: NodeId, t: NodeId) -> Result<ShortestDag, RoutingError> {
        self.check_endpoints(s, t)?;
        DETOUR_FACTORS
            .iter()
            .find_map(|f| self.dag(s, t, *f))
            .ok_or(RoutingError::Unreachable { from: s, to: t })
    }

    /// Length of the shortest path inside the `2|st|` ellipse, widening on failure.
    pub fn shortest_length(&self, s: NodeId, t: NodeId) -> Result<f64, RoutingError> {
        Ok(self.dag_with_detours(s, t)?.length)
    }

    /// One shortest route, chosen uniformly among the equally short ones, with
    /// a serving cycle sampled uniformly for each edge. Falls back to greedy
    /// forwarding when no shortest path exists.
    pub fn route<R: Rng + ?Sized>(&self, s: NodeId, t: NodeId, rng: &mut R) -> Result<Route, RoutingError> {
        self.check_endpoints(s, t)?;
        let edges = match self.sampler(s, t) {
            Ok(sampler) => sampler.sample(rng),
            Err(RoutingError::Unreachable { .. }) => self.greedy_route(s, t)?.directed_edges,
            Err(e) => return Err(e),
        };
        let trace = self.sample_trace(&edges, rng);
        Ok(Route { source: s, terminal: t, length: self.path_length(&edges), directed_edges: edges, cycle_trace: trace })
    }

    /// Owned sampler over the equally short routes from `s` to `t`, for
    /// drawing many routes without repeating the search.
    pub fn sampler(&self, s: NodeId, t: NodeId) -> Result<RouteSampler, RoutingError> {
        let dag = self.dag_with_detours(s, t)?;
        let counts = path_counts_to_terminal(&dag, t);
        let succ = dag
            .succ
            .iter()
            .map(|(u, vs)| {
                let weighted: Vec<(NodeId, f64)> = vs.iter().map(|v| (*v, counts[v])).collect();
                (*u, weighted)
            })
            .collect();
        Ok(RouteSampler { source: s, terminal: t, length: dag.length, routes: counts[&s], succ })
    }

    fn path_length(&self, edges: &[DirectedEdge]) -> f64 {
        edges.iter().map(|e| self.net.pos(e.from).dist(self.net.pos(e.to))).sum()
    }

    fn sample_trace<R: Rng + ?Sized>(&self, edges: &[DirectedEdge], rng: &mut R) -> Vec<(CycleId, Slot)> {
        let Some(plan) = self.plan else { return Vec::new() };
        edges
            .iter()
            .filter_map(|e| {
                let serving = plan.serving_cycles(*e).ok()?;
                if serving.is_empty() {
                    return None;
                }
                Some(serving[rng.random_range(0..serving.len())])
            })
            .collect()
    }

    /// Every equally short route, up to `limit` of them.
    pub fn enumerate_equal_shortest(&self, s: NodeId, t: NodeId, limit: usize) -> Result<Vec<Route>, RoutingError> {
        let dag = self.dag_with_detours(s, t)?;
        let counts = path_counts_to_terminal(&dag, t);
        if counts[&s] > limit as f64 {
            return Err(RoutingError::TooManyRoutes(limit));
        }
        let mut routes = Vec::new();
        let mut stack: Vec<NodeId> = vec![s];
        self.collect_paths(&dag, t, &mut stack, &mut routes);
        Ok(routes)
    }

    fn collect_paths(&self, dag: &ShortestDag, t: NodeId, stack: &mut Vec<NodeId>, out: &mut Vec<Route>) {
        let u = *stack.last().expect("non-empty path");
        if u == t {
            let edges: Vec<DirectedEdge> = stack.windows(2).map(|w| DirectedEdge::new(w[0], w[1])).collect();
            out.push(Route {
                source: stack[0],
                terminal: t,
                length: self.path_length(&edges),
                directed_edges: edges,
                cycle_trace: Vec::new(),
            });
            return;
        }
        for &v in dag.succ.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            stack.push(v);
            self.collect_paths(dag, t, stack, out);
            stack.pop();
        }
    }

    /// Fraction of the equally short routes that use each directed edge, plus
    /// the shortest length. Fractions along any s-t cut sum to one.
    pub fn edge_shares(&self, s: NodeId, t: NodeId) -> Result<(Vec<(DirectedEdge, f64)>, f64), RoutingError> {
        let dag = self.dag_with_detours(s, t)?;
        let to_t = path_counts_to_terminal(&dag, t);
        let mut from_s: BTreeMap<NodeId, f64> = BTreeMap::new();
        from_s.insert(s, 1.0);
        for &u in &dag.order {
            let cu = from_s.get(&u).copied().unwrap_or(0.0);
            for v in dag.succ.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                *from_s.entry(*v).or_insert(0.0) += cu;
            }
        }
        let total = to_t[&s];
        let mut shares = Vec::new();
        for &u in &dag.order {
            for v in dag.succ.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                shares.push((DirectedEdge::new(u, *v), from_s[&u] * to_t[v] / total));
            }
        }
        debug_assert!(dag.from_source.contains_key(&t) && dag.to_terminal.contains_key(&s));
        Ok((shares, dag.length))
    }

    /// Greedy geographic forwarding: always step to the neighbour closest to
    /// `t` if it is closer than the current node; at a local minimum walk the
    /// boundary of the face in the direction of `t` (right-hand rule) until a
    /// node closer than the minimum appears. Loops are erased from the walk.
    pub fn greedy_route(&self, s: NodeId, t: NodeId) -> Result<Route, RoutingError> {
        self.check_endpoints(s, t)?;
        let unreachable = RoutingError::Unreachable { from: s, to: t };
        let pt = self.net.pos(t);
        let d = |n: NodeId| self.net.pos(n).dist(pt);
        let budget = 4 * self.net.node_count() + 16;
        let mut walk = vec![s];
        let mut u = s;
        let mut steps = 0;
        while u != t {
            steps += 1;
            if steps > budget {
                return Err(unreachable);
            }
            let best = self.out[u.index()]
                .iter()
                .map(|(v, _)| *v)
                .min_by(|a, b| d(*a).total_cmp(&d(*b)).then(a.cmp(b)));
            match best {
                Some(v) if d(v) < d(u) => {
                    walk.push(v);
                    u = v;
                }
                _ => {
                    // face walk from the local minimum
                    let floor = d(u);
                    let start = u;
                    let Some(mut next) = self.first_ccw_from(u, pt) else { return Err(unreachable) };
                    let first_arc = (u, next);
                    let mut prev = u;
                    loop {
                        walk.push(next);
                        steps += 1;
                        if next == t || d(next) < floor {
                            u = next;
                            break;
                        }
                        let Some(after) = self.next_on_face(prev, next) else { return Err(unreachable) };
                        if (next, after) == first_arc || steps > budget {
                            return Err(unreachable);
                        }
                        prev = next;
                        next = after;
                    }
                    let _ = start;
                }
            }
        }
        let nodes = erase_loops(&walk);
        let edges: Vec<DirectedEdge> = nodes.windows(2).map(|w| DirectedEdge::new(w[0], w[1])).collect();
        Ok(Route { source: s, terminal: t, length: self.path_length(&edges), directed_edges: edges, cycle_trace: Vec::new() })
    }

    fn angle(&self, from: NodeId, to: Point) -> f64 {
        let p = self.net.pos(from);
        (to.y - p.y).atan2(to.x - p.x)
    }

    /// Out-neighbour of `u` reached first when sweeping counterclockwise from
    /// the direction of `target`.
    fn first_ccw_from(&self, u: NodeId, target: Point) -> Option<NodeId> {
        let base = self.angle(u, target);
        self.out[u.index()]
            .iter()
            .map(|(v, _)| *v)
            .min_by(|a, b| {
                let ka = (self.angle(u, self.net.pos(*a)) - base).rem_euclid(std::f64::consts::TAU);
                let kb = (self.angle(u, self.net.pos(*b)) - base).rem_euclid(std::f64::consts::TAU);
                ka.total_cmp(&kb).then(a.cmp(b))
            })
    }

    /// Right-hand rule: arriving at `v` from `u`, leave along the first edge
    /// counterclockwise from the reverse of the arrival direction.
    fn next_on_face(&self, u: NodeId, v: NodeId) -> Option<NodeId> {
        let back = self.angle(v, self.net.pos(u));
        let candidates: Vec<NodeId> = self.out[v.index()].iter().map(|(w, _)| *w).collect();
        if candidates.is_empty() {
            return None;
        }
        candidates
            .iter()
            .copied()
            .filter(|w| *w != u || candidates.len() == 1)
            .min_by(|a, b| {
                let ka = (self.angle(v, self.net.pos(*a)) - back).rem_euclid(std::f64::consts::TAU);
                let kb = (self.angle(v, self.net.pos(*b)) - back).rem_euclid(std::f64::consts::TAU);
                ka.total_cmp(&kb).then(a.cmp(b))
            })
    }
}

/// Uniform sampler over the shortest-path DAG of one source and terminal.
#[derive(Debug, Clone)]
pub struct RouteSampler {
    pub source: NodeId,
    pub terminal: NodeId,
    pub length: f64,
    /// Number of equally short routes.
    pub routes: f64,
    succ: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl RouteSampler {
    /// One route, each equally short route with the same probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DirectedEdge> {
        let mut edges = Vec::new();
        let mut u = self.source;
        while u != self.terminal {
            let next = &self.succ[&u];
            let mut chosen = next.last().expect("dag node has a successor").0;
            if next.len() > 1 {
                let total: f64 = next.iter().map(|(_, c)| c).sum();
                let mut pick = rng.random::<f64>() * total;
                for &(v, c) in next {
                    pick -= c;
                    if pick < 0.0 {
                        chosen = v;
                        break;
                    }
                }
            }
            edges.push(DirectedEdge::new(u, chosen));
            u = chosen;
        }
        edges
    }
}

fn usable_nodes(net: &Network, damage: &DamageSet) -> Vec<bool> {
    net.nodes()
        .iter()
        .map(|n| n.state == NodeState::Active && !damage.failed_nodes.contains(&n.id))
        .collect()
}

/// Number of DAG paths from each node to `t`.
fn path_counts_to_terminal(dag: &ShortestDag, t: NodeId) -> BTreeMap<NodeId, f64> {
    let mut counts: BTreeMap<NodeId, f64> = BTreeMap::new();
    counts.insert(t, 1.0);
    for &u in dag.order.iter().rev() {
        if u == t {
            continue;
        }
        let c = dag.succ.get(&u).map(|vs| vs.iter().map(|v| counts.get(v).copied().unwrap_or(0.0)).sum()).unwrap_or(0.0);
        counts.insert(u, c);
    }
    counts
}

fn erase_loops(walk: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::new();
    let mut pos: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &n in walk {
        if let Some(&i) = pos.get(&n) {
            for removed in out.drain(i + 1..) {
                pos.remove(&removed);
            }
        } else {
            pos.insert(n, out.len());
            out.push(n);
        }
    }
    out
}

/// Route with the plan as the routing graph; see [`Router::route`].
pub fn route<R: Rng + ?Sized>(
    net: &Network,
    plan: &CyclePlan,
    s: NodeId,
    t: NodeId,
    damage: &DamageSet,
    rng: &mut R,
) -> Result<Route, RoutingError> {
    Router::from_plan(net, plan, damage).route(s, t, rng)
}

/// All equally short routes (capped at `limit`).
pub fn enumerate_equal_shortest(
    net: &Network,
    s: NodeId,
    t: NodeId,
    damage: &DamageSet,
    limit: usize,
) -> Result<Vec<Route>, RoutingError> {
    Router::from_network(net, damage).enumerate_equal_shortest(s, t, limit)
}

/// Shortest route length over straight-line distance on the undamaged network.
pub fn spanner_ratio(net: &Network, s: NodeId, t: NodeId) -> Result<f64, RoutingError> {
    let router = Router::from_network(net, &DamageSet::none());
    let len = router.shortest_length(s, t)?;
    Ok(len / net.pos(s).dist(net.pos(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{assign_cycles, Scheme};
    use crate::geometry::{regions, FaceId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subdivided() -> Network {
        let mut net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        net.subdivide_face(FaceId(0)).unwrap();
        net
    }

    /// Floyd-Warshall over undamaged edges; independent of the Dijkstra path.
    fn all_pairs(net: &Network, damage: &DamageSet) -> Vec<Vec<f64>> {
        let n = net.node_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in net.edges() {
            if damage.blocks(*e) {
                continue;
            }
            let w = net.edge_length(*e);
            d[e.a.index()][e.b.index()] = w;
            d[e.b.index()][e.a.index()] = w;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn adjacent_corners_route_is_the_edge() {
        let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = route(&net, &plan, NodeId(0), NodeId(1), &DamageSet::none(), &mut rng).unwrap();
        assert_eq!(r.directed_edges, vec![DirectedEdge::new(NodeId(0), NodeId(1))]);
        assert_eq!(r.length, 1.0);
        assert_eq!(r.cycle_trace.len(), 1);
        assert_eq!(spanner_ratio(&net, NodeId(0), NodeId(1)).unwrap(), 1.0);
    }

    #[test]
    fn opposite_parent_corners_go_through_the_midpoint() {
        let net = subdivided();
        let oracle = all_pairs(&net, &DamageSet::none());
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = route(&net, &plan, NodeId(0), NodeId(1), &DamageSet::none(), &mut rng).unwrap();
        assert_eq!(r.nodes(), vec![NodeId(0), NodeId(3), NodeId(1)]);
        assert!((r.length - oracle[0][1]).abs() < 1e-12);
        assert!((spanner_ratio(&net, NodeId(0), NodeId(1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failed_midpoint_forces_a_bounded_detour() {
        let net = subdivided();
        let damage = DamageSet { failed_nodes: BTreeSet::from([NodeId(3)]), ..Default::default() };
        let oracle = all_pairs(&net, &damage);
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = route(&net, &plan, NodeId(0), NodeId(1), &damage, &mut rng).unwrap();
        assert!(!r.nodes().contains(&NodeId(3)));
        assert!((r.length - oracle[0][1]).abs() < 1e-12);
        assert!(r.length / 1.0 <= 2.0 + 1e-9);
        assert_eq!(r.length, 1.5);
    }

    #[test]
    fn symmetric_pair_has_two_equal_routes() {
        // corner 0 to the midpoint of the opposite side: via either adjacent midpoint
        let net = subdivided();
        let routes = enumerate_equal_shortest(&net, NodeId(0), NodeId(4), &DamageSet::none(), 100).unwrap();
        assert_eq!(routes.len(), 2);
        assert!((routes[0].length - routes[1].length).abs() < 1e-12);
        let adj = enumerate_equal_shortest(&net, NodeId(0), NodeId(3), &DamageSet::none(), 100).unwrap();
        assert_eq!(adj.len(), 1);
    }

    #[test]
    fn disconnected_pair_is_unreachable() {
        let net = subdivided();
        let damage = DamageSet {
            removed_edges: [(0, 3), (0, 5)].iter().map(|(a, b)| Edge::new(NodeId(*a), NodeId(*b))).collect(),
            ..Default::default()
        };
        assert_eq!(
            enumerate_equal_shortest(&net, NodeId(0), NodeId(1), &damage, 10),
            Err(RoutingError::Unreachable { from: NodeId(0), to: NodeId(1) })
        );
        let router = Router::from_network(&net, &damage);
        assert!(router.greedy_route(NodeId(0), NodeId(1)).is_err());
    }

    #[test]
    fn same_node_is_rejected() {
        let net = subdivided();
        assert_eq!(spanner_ratio(&net, NodeId(2), NodeId(2)), Err(RoutingError::SameNode(NodeId(2))));
    }

    #[test]
    fn edge_shares_split_evenly_over_symmetric_routes() {
        let net = subdivided();
        let router = Router::from_network(&net, &DamageSet::none());
        let (shares, len) = router.edge_shares(NodeId(0), NodeId(4)).unwrap();
        assert!((len - 1.0).abs() < 1e-12);
        assert_eq!(shares.len(), 4);
        for (_, s) in shares {
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_escapes_a_local_minimum_by_face_walk() {
        // strip of four triangles with the middle bottom edges removed: greedy from
        // the bottom-left corner towards the bottom-right one gets stuck
        let net = Network::init_triangulation(&regions::strip(5, 1.0)).unwrap();
        let pos = |i: usize| net.pos(NodeId(i as u32));
        let find = |p: Point| net.nodes().iter().find(|n| n.pos.dist(p) < 1e-9).unwrap().id;
        let a = find(Point::new(0.0, 0.0));
        let b = find(Point::new(1.0, 0.0));
        let c = find(Point::new(2.0, 0.0));
        let t = find(Point::new(3.0, 0.0));
        let _ = pos;
        let damage = DamageSet {
            removed_edges: BTreeSet::from([Edge::new(b, c)]),
            ..Default::default()
        };
        let router = Router::from_network(&net, &damage);
        let greedy = router.greedy_route(a, t).unwrap();
        assert_eq!(greedy.nodes().first(), Some(&a));
        assert_eq!(greedy.nodes().last(), Some(&t));
        let unique: BTreeSet<_> = greedy.nodes().into_iter().collect();
        assert_eq!(unique.len(), greedy.nodes().len());
        for e in &greedy.directed_edges {
            assert!(router.has_arc(*e));
        }
    }

    #[test]
    fn route_is_deterministic_for_a_seed() {
        let mut net = Network::init_triangulation(&regions::hexagon(Point::new(0.0, 0.0), 1.0)).unwrap();
        net.generate(&crate::Population::Uniform, 80, 9).unwrap();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let s = NodeId(0);
        let t = NodeId(net.node_count() as u32 - 1);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            route(&net, &plan, s, t, &DamageSet::none(), &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
    }
}
