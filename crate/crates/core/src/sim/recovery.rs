//! Changes to the active cycle set: unification after failures, re-division
//! after repairs and growth, and the commit step that brings stops, node
//! states, rates, ferries and stored messages in line with the new set.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{FerryId, LogKind, RatePolicy, RecoveryEpisode, SimError, Simulation};
use crate::cycles::{forward_handedness, perimeter_loops, triangle_hops, Cycle, CycleClass, CycleId, Hop, Scheme, Slot};
use crate::geometry::{FaceId, NodeId, NodeState};
use crate::population::point_in_triangle;
use crate::queueing::{self, DemandMatrix};
use crate::routing::Router;

#[derive(Debug, Clone)]
pub(super) struct LiveCycle {
    pub cycle: Cycle,
    pub ferries: Vec<FerryId>,
    /// Re-examine this cycle at its next ferry visit.
    pub pending: bool,
    /// Which boundary loop a perimeter cycle follows.
    pub perimeter: Option<usize>,
}

/// Cycles retired and created by one operation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleDelta {
    pub retired: Vec<CycleId>,
    pub created: Vec<CycleId>,
}

impl Simulation {
    fn classes(&self) -> &'static [CycleClass] {
        match self.scheme {
            Scheme::Mixed => &[CycleClass::Forward, CycleClass::Backward],
            Scheme::AllClockwise => &[CycleClass::Forward],
        }
    }

    fn available(&self, n: NodeId) -> bool {
        !self.known_failed.contains(&n) && !self.undetected.contains(&n)
    }

    fn subtree(&self, face: FaceId) -> BTreeSet<FaceId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![face];
        while let Some(f) = stack.pop() {
            out.insert(f);
            stack.extend(self.net.faces()[f.index()].children.iter().copied());
        }
        out
    }

    fn depth_below(&self, face: FaceId) -> u32 {
        let top = self.net.faces()[face.index()].layer;
        self.subtree(face).iter().map(|f| self.net.faces()[f.index()].layer - top).max().unwrap_or(0).max(1)
    }

    pub(super) fn has_trigger(&self, face: FaceId) -> bool {
        let region = self.subtree(face);
        let node_hit = region.iter().any(|f| {
            self.net
                .boundary_chain(*f)
                .iter()
                .any(|n| self.known_failed.contains(n) || self.down.contains(n))
        });
        let ferry_hit = self
            .failed_ferries
            .iter()
            .any(|f| self.ferries[f.0 as usize].last_face.is_some_and(|lf| region.contains(&lf)));
        node_hit || ferry_hit
    }

    fn create_cycle(&mut self, face: FaceId, class: CycleClass, rate: f64, pending: bool) -> CycleId {
        let id = CycleId(self.next_cycle);
        self.next_cycle += 1;
        let f = &self.net.faces()[face.index()];
        let fwd = forward_handedness(self.scheme, f.orientation);
        let handedness = if class == CycleClass::Forward { fwd } else { fwd.opposite() };
        let corners = f.corners;
        let hops = triangle_hops(&self.net, face, handedness, fwd, |n| corners.contains(&n) && self.available(n));
        let cycle = Cycle { id, face: Some(face), handedness, class, hops };
        self.cycles.insert(id, LiveCycle { cycle, ferries: Vec::new(), pending, perimeter: None });
        self.rates.insert(id, rate);
        id
    }

    fn retire(&mut self, c: CycleId) -> Option<LiveCycle> {
        self.rates.remove(&c);
        self.cycles.remove(&c)
    }

    /// Moves the `pool` ferries onto `targets`: each target first gets up to
    /// `ferries_per_cycle`, shortages are filled by new ferries and any
    /// remainder is dealt round robin.
    fn staff(&mut self, targets: &[CycleId], pool: Vec<FerryId>, to_place: &mut Vec<FerryId>) {
        for &f in &pool {
            if let Some(l) = self.ferries[f.0 as usize].cycle.and_then(|c| self.cycles.get_mut(&c)) {
                l.ferries.retain(|x| *x != f);
            }
        }
        let mut pool: VecDeque<FerryId> = pool.into();
        for &c in targets {
            for _ in 0..self.config.ferries_per_cycle {
                let f = match pool.pop_front() {
                    Some(f) => f,
                    None => {
                        let live = &self.cycles[&c];
                        let node = live.cycle.hops.first().map(|h| h.edge.from).unwrap_or_else(|| {
                            self.net.faces()[live.cycle.face.expect("spawned onto a face cycle").index()].corners[0]
                        });
                        let f = self.new_ferry(live.cycle.class, node);
                        self.log(LogKind::FerrySpawned, format!("{f} for {c}"));
                        f
                    }
                };
                self.assign(f, c, to_place);
            }
        }
        let mut i = 0;
        while let Some(f) = pool.pop_front() {
            self.assign(f, targets[i % targets.len()], to_place);
            i += 1;
        }
    }

    fn assign(&mut self, f: FerryId, c: CycleId, to_place: &mut Vec<FerryId>) {
        let before = self.ferries[f.0 as usize].cycle;
        self.attach(f, c);
        if before != Some(c) {
            to_place.push(f);
        }
    }

    /// Replaces every cycle on a face below `p` with one cycle per class on
    /// the boundary of `p`.
    pub(super) fn unify(&mut self, p: FaceId) -> Result<CycleDelta, SimError> {
        let face = self.net.face(p).ok_or(SimError::UnknownEntity { kind: "face", id: p.0 })?;
        if face.is_leaf() {
            return Err(SimError::NotDivided(p));
        }
        let region = self.subtree(p);
        let retired: Vec<CycleId> = self
            .cycles
            .iter()
            .filter(|(_, l)| l.cycle.face.is_some_and(|f| region.contains(&f)))
            .map(|(c, _)| *c)
            .collect();
        if retired.is_empty() {
            return Err(SimError::NotDivided(p));
        }
        let mut pools: BTreeMap<CycleClass, Vec<FerryId>> = BTreeMap::new();
        let mut inherit: BTreeMap<CycleClass, f64> = BTreeMap::new();
        for &c in &retired {
            let rate = self.rate(c);
            let live = self.retire(c).expect("retired cycle was active");
            pools.entry(live.cycle.class).or_default().extend(live.ferries);
            let r = inherit.entry(live.cycle.class).or_insert(0.0);
            *r = r.max(rate);
        }
        let mut delta = CycleDelta { retired, created: Vec::new() };
        let mut to_place = Vec::new();
        for &class in self.classes() {
            let id = self.create_cycle(p, class, inherit.get(&class).copied().unwrap_or(0.0), false);
            let pool = pools.remove(&class).unwrap_or_default();
            self.staff(&[id], pool, &mut to_place);
            delta.created.push(id);
        }
        let layers = self.depth_below(p);
        let detail = format!("face {p}: retired {} created {}", list(&delta.retired), list(&delta.created));
        self.commit(LogKind::Unify, detail, to_place, layers);
        Ok(delta)
    }

    /// Splits the cycles on `p` back into child cycles for every child whose
    /// corners are not known to be failed. Children that are themselves
    /// divided get a unified cycle that re-divides at its next visit.
    pub(super) fn redivide(&mut self, p: FaceId) -> Result<CycleDelta, SimError> {
        let face = self.net.face(p).ok_or(SimError::UnknownEntity { kind: "face", id: p.0 })?.clone();
        let on_p: Vec<CycleId> =
            self.cycles.iter().filter(|(_, l)| l.cycle.face == Some(p)).map(|(c, _)| *c).collect();
        if face.is_leaf() || on_p.is_empty() {
            return Err(SimError::NotUnified(p));
        }
        let restorable: Vec<FaceId> = face
            .children
            .iter()
            .copied()
            .filter(|ch| self.net.faces()[ch.index()].corners.iter().all(|n| self.available(*n)))
            .collect();
        if restorable.is_empty() {
            for c in &on_p {
                if let Some(l) = self.cycles.get_mut(c) {
                    l.pending = false;
                }
            }
            return Err(SimError::NodesStillInactive(p));
        }
        let full = restorable.len() == face.children.len();
        let mut delta = CycleDelta::default();
        let mut to_place = Vec::new();
        for c in on_p {
            let (class, rate, pool) = {
                let l = &self.cycles[&c];
                (l.cycle.class, self.rate(c), l.ferries.clone())
            };
            let mut targets = Vec::new();
            if full {
                self.retire(c);
                delta.retired.push(c);
            } else {
                self.cycles.get_mut(&c).expect("active").pending = false;
                targets.push(c);
            }
            for &ch in &restorable {
                let leaf = self.net.faces()[ch.index()].is_leaf();
                let id = self.create_cycle(ch, class, rate, !leaf);
                targets.push(id);
                delta.created.push(id);
            }
            self.staff(&targets, pool, &mut to_place);
        }
        let detail = format!("face {p}: retired {} created {}", list(&delta.retired), list(&delta.created));
        self.commit(LogKind::Redivide, detail, to_place, 1);
        Ok(delta)
    }

    /// A ferry of `c` has reached a cycle marked for re-examination.
    pub(super) fn handle_pending(&mut self, c: CycleId, _by: FerryId) {
        let Some(live) = self.cycles.get_mut(&c) else { return };
        live.pending = false;
        match live.cycle.face {
            Some(face) if !self.net.faces()[face.index()].is_leaf() => {
                let tri = self.net.corner_points(face);
                let found: Vec<NodeId> =
                    self.undetected.iter().copied().filter(|n| point_in_triangle(self.net.pos(*n), tri)).collect();
                if !found.is_empty() {
                    for n in &found {
                        self.undetected.remove(n);
                    }
                    let names: Vec<String> = found.iter().map(|n| n.to_string()).collect();
                    self.log(LogKind::GrowthDetected, format!("face {face}: {}", names.join(" ")));
                }
                match self.redivide(face) {
                    Ok(_) | Err(SimError::NodesStillInactive(_)) => {}
                    Err(e) => self.log(LogKind::Rejected, format!("redivide {face}: {e}")),
                }
            }
            _ => {
                self.commit(LogKind::Refresh, format!("{c} revisited"), Vec::new(), 1);
            }
        }
    }

    /// Reaction of cycle `c` to a known failed stop `v`. When `v` is a corner
    /// created by quartering some face, everything below that face is unified;
    /// otherwise the cycles just stop visiting `v`.
    pub(super) fn node_failure_detected(&mut self, v: NodeId, c: CycleId) {
        let Some(live) = self.cycles.get(&c) else { return };
        if !live.cycle.visits(v) {
            return;
        }
        let target = live.cycle.face.and_then(|f| {
            let mut shallowest = None;
            let mut cur = Some(f);
            while let Some(g) = cur {
                let face = &self.net.faces()[g.index()];
                if face.corners.contains(&v) {
                    shallowest = Some(g);
                }
                cur = face.parent;
            }
            shallowest.and_then(|g| self.net.faces()[g.index()].parent)
        });
        match target {
            Some(p) => {
                if let Err(e) = self.unify(p) {
                    self.log(LogKind::Rejected, format!("unify {p}: {e}"));
                }
            }
            None => {
                self.commit(LogKind::Refresh, format!("skip {v}"), Vec::new(), 1);
            }
        }
    }

    pub(super) fn ferry_failure_detected(&mut self, c: CycleId, node: NodeId) {
        self.log(LogKind::FerryFailureDetected, format!("{c} by {node}"));
        let live = &self.cycles[&c];
        match live.cycle.face.and_then(|f| self.net.faces()[f.index()].parent) {
            Some(p) => {
                if let Err(e) = self.unify(p) {
                    self.log(LogKind::Rejected, format!("unify {p}: {e}"));
                }
            }
            None => {
                let f = self.new_ferry(live.cycle.class, node);
                self.attach(f, c);
                self.log(LogKind::FerryReplaced, format!("{f} on {c}"));
                self.place(f);
            }
        }
    }

    pub(super) fn fail_node(&mut self, n: NodeId) -> Result<(), SimError> {
        if !self.down.insert(n) {
            return Err(SimError::AlreadyFailed { kind: "node", id: n.0 });
        }
        self.net.set_state(n, NodeState::Failed)?;
        self.log(LogKind::NodeFailure, n.to_string());
        self.open_episode(LogKind::NodeFailure, n.0);
        Ok(())
    }

    pub(super) fn fail_ferry(&mut self, f: FerryId) -> Result<(), SimError> {
        let ferry = self.ferries.get_mut(f.0 as usize).ok_or(SimError::UnknownEntity { kind: "ferry", id: f.0 })?;
        if !ferry.moving {
            return Err(SimError::AlreadyFailed { kind: "ferry", id: f.0 });
        }
        ferry.moving = false;
        ferry.epoch += 1;
        ferry.heading = None;
        let cycle = ferry.cycle.take();
        self.failed_ferries.insert(f);
        self.log(LogKind::FerryFailure, f.to_string());
        self.open_episode(LogKind::FerryFailure, f.0);
        let Some(c) = cycle else { return Ok(()) };
        let Some(live) = self.cycles.get_mut(&c) else { return Ok(()) };
        live.ferries.retain(|x| *x != f);
        if live.ferries.is_empty() {
            let window = self.config.detection.timeout_multiplier / self.effective_rate(c);
            for n in self.cycles[&c].cycle.stops() {
                let last = self.last_visit.get(&(c, n)).copied().unwrap_or(0.0);
                self.schedule((last + window).max(self.now), super::Event::Watch { cycle: c, node: n });
            }
        }
        Ok(())
    }

    pub(super) fn repair_node(&mut self, n: NodeId) -> Result<(), SimError> {
        if !self.down.remove(&n) {
            return Err(SimError::NotFailed { kind: "node", id: n.0 });
        }
        self.known_failed.remove(&n);
        self.misses.remove(&n);
        self.net.set_state(n, NodeState::Inactive)?;
        self.refresh_states();
        self.samplers.clear();
        for l in self.cycles.values_mut() {
            l.pending = true;
        }
        self.log(LogKind::NodeRepair, n.to_string());
        self.open_episode(LogKind::NodeRepair, n.0);
        Ok(())
    }

    /// The ferry rejoins the deepest cycle of its class whose triangle holds it.
    pub(super) fn repair_ferry(&mut self, f: FerryId) -> Result<(), SimError> {
        let ferry = self.ferries.get(f.0 as usize).ok_or(SimError::UnknownEntity { kind: "ferry", id: f.0 })?;
        if ferry.moving {
            return Err(SimError::NotFailed { kind: "ferry", id: f.0 });
        }
        let (class, p) = (ferry.class, self.net.pos(ferry.node));
        let node = ferry.node;
        let key = |l: &LiveCycle| {
            let holds = match l.cycle.face {
                Some(face) => point_in_triangle(p, self.net.corner_points(face)),
                None => l.cycle.visits(node),
            };
            let layer = l.cycle.face.map(|face| self.net.faces()[face.index()].layer).unwrap_or(0);
            (l.cycle.class == class, holds, layer, std::cmp::Reverse(l.cycle.id))
        };
        let target = self.cycles.values().max_by_key(|l| key(l)).map(|l| l.cycle.id);
        self.ferries[f.0 as usize].moving = true;
        self.failed_ferries.remove(&f);
        self.log(LogKind::FerryRepair, f.to_string());
        self.open_episode(LogKind::FerryRepair, f.0);
        if let Some(c) = target {
            self.attach(f, c);
            self.place(f);
        }
        for l in self.cycles.values_mut() {
            if l.cycle.face.is_some_and(|face| !self.net.faces()[face.index()].is_leaf()) {
                l.pending = true;
            }
        }
        Ok(())
    }

    pub(super) fn grow(&mut self, face: FaceId) -> Result<(), SimError> {
        let f = self.net.face(face).ok_or(SimError::UnknownEntity { kind: "face", id: face.0 })?;
        if !f.is_leaf() {
            return Err(SimError::NotALeaf(face));
        }
        let on_face: Vec<CycleId> =
            self.cycles.iter().filter(|(_, l)| l.cycle.face == Some(face)).map(|(c, _)| *c).collect();
        if on_face.is_empty() {
            return Err(SimError::NoActiveCycle(face));
        }
        let delta = self.net.subdivide_with_state(face, NodeState::Inactive)?;
        self.undetected.extend(delta.new_nodes.iter().copied());
        for c in on_face {
            self.cycles.get_mut(&c).expect("active").pending = true;
        }
        self.samplers.clear();
        let names: Vec<String> = delta.new_nodes.iter().map(|n| n.to_string()).collect();
        self.log(LogKind::Subdivide, format!("face {face}: new {}", names.join(" ")));
        self.open_episode(LogKind::Subdivide, face.0);
        Ok(())
    }

    fn open_episode(&mut self, trigger: LogKind, target: u32) {
        self.close_episode();
        let turnaround = self.cycles.keys().map(|c| 1.0 / self.effective_rate(*c)).fold(0.0, f64::max);
        self.open_episode = Some(RecoveryEpisode {
            trigger,
            target,
            started_at: self.now,
            settled_at: self.now,
            turnaround,
            turnarounds: 0.0,
            affected_layers: 0,
            plan_changes: 0,
        });
    }

    pub(super) fn close_episode(&mut self) {
        if let Some(mut ep) = self.open_episode.take() {
            ep.turnarounds = if ep.turnaround > 0.0 { (ep.settled_at - ep.started_at) / ep.turnaround } else { 0.0 };
            ep.affected_layers = ep.affected_layers.max(1);
            self.episodes.push(ep);
        }
    }

    /// Recomputes every cycle's stops, retires cycles left with fewer than two,
    /// then refreshes node states, the plan snapshot, rates, ferry positions
    /// and stored messages. A refresh that changes nothing is not logged.
    pub(super) fn commit(&mut self, kind: LogKind, detail: String, to_place: Vec<FerryId>, layers: u32) -> bool {
        let structural = kind != LogKind::Refresh;
        self.refresh_hops();
        let degenerate: Vec<CycleId> =
            self.cycles.iter().filter(|(_, l)| l.cycle.hops.is_empty()).map(|(c, _)| *c).collect();
        for c in degenerate {
            let live = self.retire(c).expect("active");
            for f in live.ferries {
                self.ferries[f.0 as usize].cycle = None;
            }
            self.log(LogKind::Rejected, format!("{c} has fewer than two stops and was retired"));
        }
        let cycles: Vec<Cycle> = self.cycles.values().map(|l| l.cycle.clone()).collect();
        let states_changed = self.refresh_states();
        let plan_changed = cycles.as_slice() != self.plan.cycles();
        if !structural && !plan_changed && !states_changed && to_place.is_empty() {
            return false;
        }
        self.plan = crate::cycles::CyclePlan::from_cycles(self.scheme, cycles);
        self.samplers.clear();
        if plan_changed {
            self.apply_rate_policy();
        }
        for f in to_place {
            self.place(f);
        }
        let rerouted = self.reroute();
        self.check_coverage();
        self.log(kind, format!("{detail}; {} cycles active", self.cycles.len()));
        if rerouted > 0 {
            self.log(LogKind::Rerouted, format!("{rerouted} messages"));
        }
        if let Some(ep) = self.open_episode.as_mut() {
            ep.settled_at = self.now;
            ep.plan_changes += 1;
            ep.affected_layers = ep.affected_layers.max(layers);
        }
        let now = self.now;
        for (c, l) in &self.cycles {
            for h in &l.cycle.hops {
                self.last_visit.entry((*c, h.edge.from)).or_insert(now);
            }
        }
        true
    }

    /// Stops of every active cycle. Leaf and perimeter cycles visit every
    /// usable node on their boundary. A cycle on a divided face visits its
    /// corners plus the boundary nodes some cycle outside the face still
    /// visits; that set is found as a least fixed point.
    fn refresh_hops(&mut self) {
        let loops = if self.cycles.values().any(|l| l.perimeter.is_some()) {
            perimeter_loops(&self.net)
        } else {
            Vec::new()
        };
        let mut unified = Vec::new();
        let ids: Vec<CycleId> = self.cycles.keys().copied().collect();
        for c in ids {
            let live = &self.cycles[&c];
            let hops = match (live.cycle.face, live.perimeter) {
                (None, Some(i)) => {
                    let stops: Vec<NodeId> = loops
                        .get(i)
                        .map(|l| l.iter().map(|h| h.edge.from).filter(|n| self.available(*n)).collect())
                        .unwrap_or_default();
                    ring(&stops)
                }
                (None, None) => continue,
                (Some(f), _) if self.net.faces()[f.index()].is_leaf() => {
                    let fwd = forward_handedness(self.scheme, self.net.faces()[f.index()].orientation);
                    triangle_hops(&self.net, f, live.cycle.handedness, fwd, |n| self.available(n))
                }
                (Some(f), _) => {
                    unified.push((c, f));
                    continue;
                }
            };
            self.cycles.get_mut(&c).expect("active").cycle.hops = hops;
        }
        if unified.is_empty() {
            return;
        }
        let regions: BTreeMap<FaceId, BTreeSet<FaceId>> = unified.iter().map(|&(_, f)| (f, self.subtree(f))).collect();
        let mut stops: BTreeMap<CycleId, BTreeSet<NodeId>> =
            self.cycles.iter().map(|(c, l)| (*c, l.cycle.stops().into_iter().collect())).collect();
        for &(c, f) in &unified {
            let corners = self.net.faces()[f.index()].corners;
            stops.insert(c, corners.into_iter().filter(|n| self.available(*n)).collect());
        }
        loop {
            let mut changed = false;
            for &(c, f) in &unified {
                let region = &regions[&f];
                let corners = self.net.faces()[f.index()].corners;
                let want: BTreeSet<NodeId> = self
                    .net
                    .boundary_chain(f)
                    .into_iter()
                    .filter(|n| self.available(*n))
                    .filter(|n| {
                        corners.contains(n)
                            || stops.iter().any(|(other, s)| {
                                *other != c
                                    && !self.cycles[other].cycle.face.is_some_and(|g| region.contains(&g))
                                    && s.contains(n)
                            })
                    })
                    .collect();
                if want != stops[&c] {
                    stops.insert(c, want);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for (c, f) in unified {
            let live = &self.cycles[&c];
            let fwd = forward_handedness(self.scheme, self.net.faces()[f.index()].orientation);
            let keep = &stops[&c];
            let hops = triangle_hops(&self.net, f, live.cycle.handedness, fwd, |n| keep.contains(&n));
            self.cycles.get_mut(&c).expect("active").cycle.hops = hops;
        }
    }

    /// Failed nodes stay failed; stops are active; everything else is inactive.
    pub(super) fn refresh_states(&mut self) -> bool {
        let stops: BTreeSet<NodeId> = self.cycles.values().flat_map(|l| l.cycle.hops.iter().map(|h| h.edge.from)).collect();
        let mut changed = false;
        for i in 0..self.net.node_count() {
            let n = NodeId(i as u32);
            let want = if self.down.contains(&n) {
                NodeState::Failed
            } else if stops.contains(&n) {
                NodeState::Active
            } else {
                NodeState::Inactive
            };
            if self.net.state(n) != want {
                self.net.set_state(n, want).expect("node exists");
                changed = true;
            }
        }
        changed
    }

    fn apply_rate_policy(&mut self) {
        if self.config.rate_policy == RatePolicy::InheritMax {
            return;
        }
        let solution = {
            let router = Router::from_arcs(&self.net, Some(&self.plan), self.plan.served_edges());
            let mut demands = DemandMatrix::new();
            for &(s, t, r) in &self.demand_pairs {
                if router.shortest_length(s, t).is_ok() {
                    demands.add(s, t, r).expect("validated demand");
                }
            }
            queueing::analyze(&router, &self.plan, &demands)
                .and_then(|a| queueing::optimize_rates(&a.flows, &a.weights, self.cycles.keys().copied()))
        };
        // without routable demand the inherited rates stay in force
        if let Ok(sol) = solution {
            for c in self.cycles.keys() {
                self.rates.insert(*c, sol.rate(*c));
            }
        }
    }

    /// Re-routes every stored message whose remaining hops are no longer all
    /// served, and retries parked ones. Returns how many stored messages moved.
    fn reroute(&mut self) -> usize {
        let now = self.now;
        let mut moved = Vec::new();
        let edges: Vec<_> = self.waiting.keys().copied().collect();
        for e in edges {
            let ids: Vec<u64> = self.waiting[&e].iter().copied().collect();
            let go: BTreeSet<u64> = ids.into_iter().filter(|id| !self.remaining_served(*id)).collect();
            if go.is_empty() {
                continue;
            }
            let q = self.waiting.get_mut(&e).expect("listed");
            q.retain(|id| !go.contains(id));
            if q.is_empty() {
                self.waiting.remove(&e);
            }
            let level = self.node_levels.entry(e.from).or_default();
            for id in go {
                level.change(now, -1);
                moved.push((id, e.from));
            }
        }
        let rerouted = moved.len();
        for id in std::mem::take(&mut self.parked) {
            let at = self.messages[id as usize].at;
            self.node_levels.entry(at).or_default().change(now, -1);
            moved.push((id, at));
        }
        for (id, at) in moved {
            self.dispatch(id, at);
        }
        rerouted
    }

    fn check_coverage(&mut self) {
        let bad: Vec<u64> =
            self.waiting.values().flat_map(|q| q.iter().copied()).filter(|id| !self.remaining_served(*id)).collect();
        for id in bad {
            self.coverage_violations += 1;
            self.log(LogKind::CoverageViolation, format!("message {id}"));
        }
    }
}

fn ring(stops: &[NodeId]) -> Vec<Hop> {
    if stops.len() < 2 {
        return Vec::new();
    }
    (0..stops.len())
        .map(|i| Hop {
            edge: crate::geometry::DirectedEdge::new(stops[i], stops[(i + 1) % stops.len()]),
            slot: i as Slot + 1,
        })
        .collect()
}

fn list(ids: &[CycleId]) -> String {
    let names: Vec<String> = ids.iter().map(|c| c.to_string()).collect();
    format!("[{}]", names.join(" "))
}
