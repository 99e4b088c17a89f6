//! Ferry cycles on leaf triangles and the index of which cycles serve each
//! directed edge.
//!
//! Two schemes are supported. In the mixed scheme every leaf carries a forward
//! cycle (clockwise on upward triangles, counterclockwise on downward ones) and
//! a backward cycle of the opposite handedness; neighbouring forward cycles
//! then run the same way along their shared edge. In the all-clockwise scheme
//! every leaf carries one clockwise cycle and a single counterclockwise
//! perimeter cycle covers the reverse direction of the outer boundary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DirectedEdge, Edge, FaceId, Network, NodeId, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleId(pub u32);

impl fmt::Display for CycleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Side index of a cycle. Triangles use 1..=3; perimeter cycles number their
/// edges sequentially.
pub type Slot = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Mixed,
    AllClockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Handedness {
    Clockwise,
    Counterclockwise,
}

impl Handedness {
    pub fn opposite(self) -> Self {
        match self {
            Handedness::Clockwise => Handedness::Counterclockwise,
            Handedness::Counterclockwise => Handedness::Clockwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CycleClass {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub edge: DirectedEdge,
    pub slot: Slot,
}

/// A closed ferry route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub id: CycleId,
    /// `None` only for perimeter cycles.
    pub face: Option<FaceId>,
    pub handedness: Handedness,
    pub class: CycleClass,
    pub hops: Vec<Hop>,
}

impl Cycle {
    /// Nodes the ferry stops at, in travel order.
    pub fn stops(&self) -> Vec<NodeId> {
        self.hops.iter().map(|h| h.edge.from).collect()
    }

    pub fn visits(&self, n: NodeId) -> bool {
        self.hops.iter().any(|h| h.edge.from == n)
    }

    /// Identity of the route ignoring the id.
    pub fn signature(&self) -> CycleSignature {
        CycleSignature { face: self.face, class: self.class, handedness: self.handedness, hops: self.hops.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycleSignature {
    pub face: Option<FaceId>,
    pub class: CycleClass,
    pub handedness: Handedness,
    pub hops: Vec<Hop>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("network has no leaf faces")]
    EmptyNetwork,
    #[error("edge {0} is not served by the plan")]
    UnknownEdge(Edge),
    #[error("invalid plan document: {0}")]
    InvalidDocument(String),
}

/// Set of ferry cycles plus the serving index.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePlan {
    pub scheme: Scheme,
    cycles: Vec<Cycle>,
    by_id: BTreeMap<CycleId, usize>,
    serving: BTreeMap<DirectedEdge, Vec<(CycleId, Slot)>>,
}

impl CyclePlan {
    /// Builds a plan from explicit cycles, indexing every hop.
    pub fn from_cycles(scheme: Scheme, cycles: Vec<Cycle>) -> Self {
        let mut by_id = BTreeMap::new();
        let mut serving: BTreeMap<DirectedEdge, Vec<(CycleId, Slot)>> = BTreeMap::new();
        for (i, c) in cycles.iter().enumerate() {
            by_id.insert(c.id, i);
            for h in &c.hops {
                serving.entry(h.edge).or_default().push((c.id, h.slot));
            }
        }
        for list in serving.values_mut() {
            list.sort();
        }
        Self { scheme, cycles, by_id, serving }
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn cycle(&self, id: CycleId) -> Option<&Cycle> {
        self.by_id.get(&id).map(|&i| &self.cycles[i])
    }

    pub fn serving_index(&self) -> &BTreeMap<DirectedEdge, Vec<(CycleId, Slot)>> {
        &self.serving
    }

    /// Every directed hop that at least one cycle serves.
    pub fn served_edges(&self) -> impl Iterator<Item = DirectedEdge> + '_ {
        self.serving.keys().copied()
    }

    /// Cycles (with their slot) serving `edge` in its stated direction.
    pub fn serving_cycles(&self, edge: DirectedEdge) -> Result<&[(CycleId, Slot)], PlanError> {
        if let Some(list) = self.serving.get(&edge) {
            return Ok(list);
        }
        if self.serving.contains_key(&edge.reversed()) {
            return Ok(&[]);
        }
        Err(PlanError::UnknownEdge(edge.undirected()))
    }

    pub fn signatures(&self) -> BTreeSet<CycleSignature> {
        self.cycles.iter().map(Cycle::signature).collect()
    }

    pub fn to_document(&self) -> PlanDocument {
        PlanDocument {
            scheme: self.scheme,
            cycles: self
                .cycles
                .iter()
                .map(|c| CycleRecord {
                    id: c.id,
                    face: c.face,
                    handedness: c.handedness,
                    class: c.class,
                    edges: c.hops.iter().map(|h| [h.edge.from, h.edge.to]).collect(),
                    slots: c.hops.iter().map(|h| h.slot).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &PlanDocument) -> Result<Self, PlanError> {
        let mut cycles = Vec::with_capacity(doc.cycles.len());
        for r in &doc.cycles {
            if r.edges.len() != r.slots.len() || r.edges.is_empty() {
                return Err(PlanError::InvalidDocument(format!("cycle {} has mismatched edges and slots", r.id)));
            }
            let hops: Vec<Hop> = r
                .edges
                .iter()
                .zip(&r.slots)
                .map(|([a, b], &slot)| Hop { edge: DirectedEdge::new(*a, *b), slot })
                .collect();
            for w in 0..hops.len() {
                if hops[w].edge.to != hops[(w + 1) % hops.len()].edge.from {
                    return Err(PlanError::InvalidDocument(format!("cycle {} is not closed", r.id)));
                }
            }
            cycles.push(Cycle { id: r.id, face: r.face, handedness: r.handedness, class: r.class, hops });
        }
        Ok(Self::from_cycles(doc.scheme, cycles))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("plan document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let doc: PlanDocument =
            serde_json::from_str(text).map_err(|e| PlanError::InvalidDocument(e.to_string()))?;
        Self::from_document(&doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub id: CycleId,
    pub face: Option<FaceId>,
    pub handedness: Handedness,
    pub class: CycleClass,
    pub edges: Vec<[NodeId; 2]>,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub scheme: Scheme,
    pub cycles: Vec<CycleRecord>,
}

/// Handedness of the forward cycle on a face with the given orientation.
pub fn forward_handedness(scheme: Scheme, orientation: Orientation) -> Handedness {
    match (scheme, orientation) {
        (Scheme::AllClockwise, _) | (Scheme::Mixed, Orientation::Up) => Handedness::Clockwise,
        (Scheme::Mixed, Orientation::Down) => Handedness::Counterclockwise,
    }
}

/// Hops of a triangle cycle around `face` (leaf or not), walking its boundary
/// chain in `handedness` order from the smallest corner id and stopping only
/// at nodes accepted by `keep`.
///
/// Slots number the three sides in `slot_walk` order from the smallest corner
/// id, so a face's forward and backward cycles give the same side the same slot.
pub fn triangle_hops(
    net: &Network,
    face: FaceId,
    handedness: Handedness,
    slot_walk: Handedness,
    keep: impl Fn(NodeId) -> bool,
) -> Vec<Hop> {
    let f = &net.faces()[face.index()];
    let start = (0..3).min_by_key(|&i| f.corners[i]).unwrap_or(0);
    let ccw = [f.corners[start], f.corners[(start + 1) % 3], f.corners[(start + 2) % 3]];
    let walk = |h: Handedness| match h {
        Handedness::Counterclockwise => [ccw[0], ccw[1], ccw[2]],
        Handedness::Clockwise => [ccw[0], ccw[2], ccw[1]],
    };
    let slot_order = walk(slot_walk);
    let slot_of = |u: NodeId, v: NodeId| -> Slot {
        let side = Edge::new(u, v);
        (0..3).find(|&k| Edge::new(slot_order[k], slot_order[(k + 1) % 3]) == side).map(|k| k as Slot + 1).unwrap_or(1)
    };
    let order = walk(handedness);
    let mut stops: Vec<(NodeId, Slot)> = Vec::new();
    for k in 0..3 {
        let (u, v) = (order[k], order[(k + 1) % 3]);
        let slot = slot_of(u, v);
        let chain = net.side_chain(u, v);
        for &n in &chain[..chain.len() - 1] {
            if keep(n) {
                stops.push((n, slot));
            }
        }
    }
    ring_hops(&stops)
}

fn ring_hops(stops: &[(NodeId, Slot)]) -> Vec<Hop> {
    if stops.len() < 2 {
        return Vec::new();
    }
    (0..stops.len())
        .map(|i| Hop { edge: DirectedEdge::new(stops[i].0, stops[(i + 1) % stops.len()].0), slot: stops[i].1 })
        .collect()
}

/// Counterclockwise walks around every boundary loop of the region, each
/// starting at its smallest node id with edges numbered 1, 2, ...
pub fn perimeter_loops(net: &Network) -> Vec<Vec<Hop>> {
    let edge_faces = net.edge_faces();
    let mut next: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for f in net.leaf_faces() {
        let ring = net.boundary_chain(f.id);
        for i in 0..ring.len() {
            let (u, v) = (ring[i], ring[(i + 1) % ring.len()]);
            if edge_faces.get(&Edge::new(u, v)).is_some_and(|fs| fs.len() == 1) {
                next.entry(u).or_default().push(v);
            }
        }
    }
    for list in next.values_mut() {
        list.sort();
    }
    let mut used: BTreeSet<DirectedEdge> = BTreeSet::new();
    let mut loops = Vec::new();
    let starts: Vec<NodeId> = next.keys().copied().collect();
    for start in starts {
        while let Some(&first) = next[&start].iter().find(|v| !used.contains(&DirectedEdge::new(start, **v))) {
            let mut hops = Vec::new();
            let (mut u, mut v) = (start, first);
            loop {
                let e = DirectedEdge::new(u, v);
                if !used.insert(e) {
                    break;
                }
                hops.push(Hop { edge: e, slot: hops.len() as Slot + 1 });
                let Some(&w) = next.get(&v).and_then(|ns| ns.iter().find(|w| !used.contains(&DirectedEdge::new(v, **w))))
                else {
                    break;
                };
                u = v;
                v = w;
            }
            loops.push(hops);
        }
    }
    loops
}

/// Assigns cycles to every leaf face under `scheme`.
pub fn assign_cycles(net: &Network, scheme: Scheme) -> Result<CyclePlan, PlanError> {
    let mut cycles = Vec::new();
    let mut next_id = 0u32;
    let mut push = |cycles: &mut Vec<Cycle>, face, handedness, class, hops| {
        cycles.push(Cycle { id: CycleId(next_id), face, handedness, class, hops });
        next_id += 1;
    };
    for f in net.leaf_faces() {
        let fwd = forward_handedness(scheme, f.orientation);
        push(&mut cycles, Some(f.id), fwd, CycleClass::Forward, triangle_hops(net, f.id, fwd, fwd, |_| true));
        if scheme == Scheme::Mixed {
            let bwd = fwd.opposite();
            push(&mut cycles, Some(f.id), bwd, CycleClass::Backward, triangle_hops(net, f.id, bwd, fwd, |_| true));
        }
    }
    if cycles.is_empty() {
        return Err(PlanError::EmptyNetwork);
    }
    if scheme == Scheme::AllClockwise {
        for hops in perimeter_loops(net) {
            push(&mut cycles, None, Handedness::Counterclockwise, CycleClass::Backward, hops);
        }
    }
    Ok(CyclePlan::from_cycles(scheme, cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{regions, Point};

    fn subdivided() -> Network {
        let mut net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        net.subdivide_face(FaceId(0)).unwrap();
        net
    }

    /// Independent count of how many cycles traverse each directed edge,
    /// straight from the cycle hop lists.
    fn multiplicity(plan: &CyclePlan) -> BTreeMap<DirectedEdge, usize> {
        let mut m = BTreeMap::new();
        for c in plan.cycles() {
            for h in &c.hops {
                *m.entry(h.edge).or_insert(0) += 1;
            }
        }
        m
    }

    #[test]
    fn single_up_triangle_mixed() {
        let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        assert_eq!(plan.cycles().len(), 2);
        assert_eq!(plan.cycles()[0].handedness, Handedness::Clockwise);
        assert_eq!(plan.cycles()[0].class, CycleClass::Forward);
        assert_eq!(plan.cycles()[1].handedness, Handedness::Counterclockwise);
        for e in net.edges() {
            for d in [DirectedEdge::new(e.a, e.b), DirectedEdge::new(e.b, e.a)] {
                assert_eq!(plan.serving_cycles(d).unwrap().len(), 1);
            }
        }
        // clockwise around (0,0),(1,0),(0.5,h) goes 0 -> 2 -> 1
        assert_eq!(plan.cycles()[0].stops(), vec![NodeId(0), NodeId(2), NodeId(1)]);
    }

    #[test]
    fn forward_and_backward_share_side_slots() {
        let net = subdivided();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        for pair in plan.cycles().chunks(2) {
            let slot_of = |c: &Cycle| -> BTreeMap<Edge, Slot> {
                c.hops.iter().map(|h| (h.edge.undirected(), h.slot)).collect()
            };
            assert_eq!(slot_of(&pair[0]), slot_of(&pair[1]));
            let mut slots: Vec<Slot> = pair[0].hops.iter().map(|h| h.slot).collect();
            slots.sort();
            assert_eq!(slots, vec![1, 2, 3]);
        }
    }

    #[test]
    fn subdivided_mixed_interior_edges_have_two_servers() {
        let net = subdivided();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let boundary = net.boundary_edges();
        let mult = multiplicity(&plan);
        for e in net.edges() {
            for d in [DirectedEdge::new(e.a, e.b), DirectedEdge::new(e.b, e.a)] {
                let expect = if boundary.contains(e) { 1 } else { 2 };
                assert_eq!(mult[&d], expect);
                let serving = plan.serving_cycles(d).unwrap();
                assert_eq!(serving.len(), expect);
                let classes: BTreeSet<_> = serving.iter().map(|(c, _)| plan.cycle(*c).unwrap().class).collect();
                assert_eq!(classes.len(), 1, "servers of one direction share a class");
            }
        }
    }

    #[test]
    fn subdivided_all_clockwise_uses_perimeter() {
        let net = subdivided();
        let plan = assign_cycles(&net, Scheme::AllClockwise).unwrap();
        assert_eq!(plan.cycles().len(), 5);
        let perimeter = plan.cycles().iter().find(|c| c.face.is_none()).unwrap();
        assert_eq!(perimeter.hops.len(), 6);
        let boundary = net.boundary_edges();
        for e in net.edges() {
            for d in [DirectedEdge::new(e.a, e.b), DirectedEdge::new(e.b, e.a)] {
                let serving = plan.serving_cycles(d).unwrap();
                assert_eq!(serving.len(), 1);
                let on_perimeter = serving[0].0 == perimeter.id;
                if !boundary.contains(e) {
                    assert!(!on_perimeter);
                }
            }
        }
        let perimeter_edges: BTreeSet<Edge> = perimeter.hops.iter().map(|h| h.edge.undirected()).collect();
        assert_eq!(perimeter_edges, boundary);
    }

    #[test]
    fn serving_cycles_rejects_unknown_edges() {
        let net = subdivided();
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let missing = DirectedEdge::new(NodeId(0), NodeId(1));
        assert_eq!(plan.serving_cycles(missing), Err(PlanError::UnknownEdge(Edge::new(NodeId(0), NodeId(1)))));
    }

    #[test]
    fn empty_network_has_no_plan() {
        assert_eq!(assign_cycles(&Network::empty(), Scheme::Mixed), Err(PlanError::EmptyNetwork));
    }

    #[test]
    fn plan_document_round_trip() {
        let mut net = Network::init_triangulation(&regions::hexagon(Point::new(0.0, 0.0), 1.0)).unwrap();
        net.generate(&crate::Population::Uniform, 40, 5).unwrap();
        for scheme in [Scheme::Mixed, Scheme::AllClockwise] {
            let plan = assign_cycles(&net, scheme).unwrap();
            let back = CyclePlan::from_json(&plan.to_json()).unwrap();
            assert_eq!(back, plan);
        }
    }
}
