//! MSQ network construction: equilateral initial triangulations, quartering
//! subdivision with shared-midpoint reuse, population-weighted growth and
//! structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::Population;

/// Relative tolerance for equilateral and coincidence checks.
pub const EQUILATERAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaceId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FaceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Active,
    Inactive,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    pub layer: u32,
    pub state: NodeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Orientation {
    Up,
    Down,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Up => Orientation::Down,
            Orientation::Down => Orientation::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaceKind {
    Initial,
    CornerChild,
    CenterChild,
}

/// A triangle of the subdivision hierarchy. Corners are stored counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub id: FaceId,
    pub corners: [NodeId; 3],
    pub layer: u32,
    pub orientation: Orientation,
    pub kind: FaceKind,
    pub parent: Option<FaceId>,
    /// Empty for leaves; otherwise the three corner children (in corner
    /// order) followed by the center child.
    pub children: Vec<FaceId>,
}

impl Face {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Corner pairs of the three sides, in counterclockwise order.
    pub fn sides(&self) -> [(NodeId, NodeId); 3] {
        let [a, b, c] = self.corners;
        [(a, b), (b, c), (c, a)]
    }
}

/// Undirected edge, stored with the smaller node id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
}

impl Edge {
    pub fn new(u: NodeId, v: NodeId) -> Self {
        if u <= v {
            Self { a: u, b: v }
        } else {
            Self { a: v, b: u }
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: NodeId,
    pub to: NodeId,
}

impl DirectedEdge {
    pub fn new(from: NodeId, to: NodeId) -> Self {
        Self { from, to }
    }

    pub fn reversed(self) -> Self {
        Self { from: self.to, to: self.from }
    }

    pub fn undirected(self) -> Edge {
        Edge::new(self.from, self.to)
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("region contains no triangles")]
    EmptyRegion,
    #[error("triangle {index} is not equilateral (sides {sides:?})")]
    NonEquilateral { index: usize, sides: [f64; 3] },
    #[error("triangles {first} and {second} overlap")]
    OverlappingFaces { first: usize, second: usize },
    #[error("a corner of triangle {triangle} lies inside a side of triangle {other}")]
    DanglingVertex { triangle: usize, other: usize },
    #[error("face {0} is not a leaf")]
    NotALeaf(FaceId),
    #[error("face {0} not found")]
    FaceNotFound(FaceId),
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("corner {node} of face {face} is not active")]
    InactiveCorner { face: FaceId, node: NodeId },
    #[error("target size {target} is below the current node count {current}")]
    TargetTooSmall { target: usize, current: usize },
    #[error("invalid network document: {0}")]
    InvalidDocument(String),
}

/// What a single quartering changed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubdivisionDelta {
    pub face: Option<FaceId>,
    pub new_nodes: Vec<NodeId>,
    pub reused_nodes: Vec<NodeId>,
    pub removed_edges: Vec<Edge>,
    pub added_edges: Vec<Edge>,
    pub children: Vec<FaceId>,
}

/// Planar graph of the leaf triangulation together with the full subdivision
/// hierarchy and the shared-midpoint registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    faces: Vec<Face>,
    edges: BTreeSet<Edge>,
    midpoints: BTreeMap<Edge, NodeId>,
}

impl Network {
    /// An empty network. Only useful as a degenerate input to [`Network::validate`].
    pub fn empty() -> Self {
        Self { nodes: Vec::new(), faces: Vec::new(), edges: BTreeSet::new(), midpoints: BTreeMap::new() }
    }

    /// Builds the layer-0 network from equilateral triangles given by their
    /// corner points.
    pub fn init_triangulation(region: &[[Point; 3]]) -> Result<Self, GeometryError> {
        if region.is_empty() {
            return Err(GeometryError::EmptyRegion);
        }
        let mut scale: f64 = 0.0;
        for (index, tri) in region.iter().enumerate() {
            let sides = [tri[0].dist(tri[1]), tri[1].dist(tri[2]), tri[2].dist(tri[0])];
            let max = sides.iter().cloned().fold(0.0, f64::max);
            let min = sides.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) || (max - min) > EQUILATERAL_TOL * max {
                return Err(GeometryError::NonEquilateral { index, sides });
            }
            scale = scale.max(max);
        }
        let tol = EQUILATERAL_TOL * scale;

        for i in 0..region.len() {
            for j in (i + 1)..region.len() {
                if triangles_overlap(region[i], region[j], tol) {
                    return Err(GeometryError::OverlappingFaces { first: i, second: j });
                }
            }
        }
        for (i, tri) in region.iter().enumerate() {
            for (j, other) in region.iter().enumerate() {
                if i == j {
                    continue;
                }
                for &p in tri {
                    for k in 0..3 {
                        if strictly_inside_segment(p, other[k], other[(k + 1) % 3], tol) {
                            return Err(GeometryError::DanglingVertex { triangle: i, other: j });
                        }
                    }
                }
            }
        }

        let mut net = Network::empty();
        let lookup = |net: &mut Network, p: Point| -> NodeId {
            if let Some(n) = net.nodes.iter().find(|n| n.pos.dist(p) <= tol) {
                return n.id;
            }
            net.push_node(p, 0, NodeState::Active)
        };
        for tri in region {
            let mut ids = [lookup(&mut net, tri[0]), lookup(&mut net, tri[1]), lookup(&mut net, tri[2])];
            let pts = [net.pos(ids[0]), net.pos(ids[1]), net.pos(ids[2])];
            if (pts[1] - pts[0]).cross(pts[2] - pts[0]) < 0.0 {
                ids.swap(1, 2);
            }
            let ordered = [net.pos(ids[0]), net.pos(ids[1]), net.pos(ids[2])];
            let id = FaceId(net.faces.len() as u32);
            net.faces.push(Face {
                id,
                corners: ids,
                layer: 0,
                orientation: orientation_of(ordered),
                kind: FaceKind::Initial,
                parent: None,
                children: Vec::new(),
            });
            for (u, v) in net.faces[id.index()].sides() {
                net.edges.insert(Edge::new(u, v));
            }
        }
        Ok(net)
    }

    fn push_node(&mut self, pos: Point, layer: u32, state: NodeState) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, pos, layer, state });
        id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn midpoints(&self) -> &BTreeMap<Edge, NodeId> {
        &self.midpoints
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    pub fn face(&self, id: FaceId) -> Option<&Face> {
        self.faces.get(id.index())
    }

    pub fn pos(&self, id: NodeId) -> Point {
        self.nodes[id.index()].pos
    }

    pub fn state(&self, id: NodeId) -> NodeState {
        self.nodes[id.index()].state
    }

    pub fn set_state(&mut self, id: NodeId, state: NodeState) -> Result<(), GeometryError> {
        let node = self.nodes.get_mut(id.index()).ok_or(GeometryError::NodeNotFound(id))?;
        node.state = state;
        Ok(())
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.contains(&Edge::new(u, v))
    }

    pub fn edge_length(&self, e: Edge) -> f64 {
        self.pos(e.a).dist(self.pos(e.b))
    }

    pub fn leaf_faces(&self) -> impl Iterator<Item = &Face> {
        self.faces.iter().filter(|f| f.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_faces().count()
    }

    pub fn max_layer(&self) -> u32 {
        self.faces.iter().map(|f| f.layer).max().unwrap_or(0)
    }

    pub fn corner_points(&self, face: FaceId) -> [Point; 3] {
        let f = &self.faces[face.index()];
        [self.pos(f.corners[0]), self.pos(f.corners[1]), self.pos(f.corners[2])]
    }

    pub fn side_length(&self, face: FaceId) -> f64 {
        let f = &self.faces[face.index()];
        self.pos(f.corners[0]).dist(self.pos(f.corners[1]))
    }

    /// Nodes along the straight side `u`-`v`, from `u` to `v`, following every
    /// registered midpoint.
    pub fn side_chain(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let mut out = vec![u];
        self.push_chain(u, v, &mut out);
        out
    }

    fn push_chain(&self, u: NodeId, v: NodeId, out: &mut Vec<NodeId>) {
        match self.midpoints.get(&Edge::new(u, v)) {
            Some(&m) => {
                self.push_chain(u, m, out);
                self.push_chain(m, v, out);
            }
            None => out.push(v),
        }
    }

    /// Boundary walk of a face starting at its first corner, counterclockwise,
    /// without repeating the start node.
    pub fn boundary_chain(&self, face: FaceId) -> Vec<NodeId> {
        let f = &self.faces[face.index()];
        let mut ring = Vec::new();
        for (u, v) in f.sides() {
            let chain = self.side_chain(u, v);
            ring.extend_from_slice(&chain[..chain.len() - 1]);
        }
        ring
    }

    /// Leaf faces adjacent to each graph edge.
    pub fn edge_faces(&self) -> BTreeMap<Edge, Vec<FaceId>> {
        let mut map: BTreeMap<Edge, Vec<FaceId>> = BTreeMap::new();
        for f in self.leaf_faces() {
            let ring = self.boundary_chain(f.id);
            for i in 0..ring.len() {
                let e = Edge::new(ring[i], ring[(i + 1) % ring.len()]);
                map.entry(e).or_default().push(f.id);
            }
        }
        map
    }

    /// Boundary edges of the region (edges with a single adjacent leaf).
    pub fn boundary_edges(&self) -> BTreeSet<Edge> {
        self.edge_faces().into_iter().filter(|(_, fs)| fs.len() == 1).map(|(e, _)| e).collect()
    }

    /// Adjacency lists over the current edge set, indexed by node id.
    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a.index()].push(e.b);
            adj[e.b.index()].push(e.a);
        }
        adj
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.edges.iter().filter(|e| e.contains(n)).count()
    }

    /// Number of nodes subdividing `face` would create.
    pub fn new_nodes_for(&self, face: FaceId) -> usize {
        self.faces[face.index()]
            .sides()
            .iter()
            .filter(|(u, v)| !self.midpoints.contains_key(&Edge::new(*u, *v)))
            .count()
    }

    /// Quarters a leaf face, reusing midpoints already created by neighbors.
    pub fn subdivide_face(&mut self, face: FaceId) -> Result<SubdivisionDelta, GeometryError> {
        self.subdivide_with_state(face, NodeState::Active)
    }

    /// As [`Network::subdivide_face`], with the state given to newly created nodes.
    pub fn subdivide_with_state(
        &mut self,
        face: FaceId,
        new_state: NodeState,
    ) -> Result<SubdivisionDelta, GeometryError> {
        let f = self.faces.get(face.index()).ok_or(GeometryError::FaceNotFound(face))?.clone();
        if !f.is_leaf() {
            return Err(GeometryError::NotALeaf(face));
        }
        if let Some(&node) = f.corners.iter().find(|c| self.state(**c) != NodeState::Active) {
            return Err(GeometryError::InactiveCorner { face, node });
        }
        let layer = f.layer + 1;
        let mut delta = SubdivisionDelta { face: Some(face), ..Default::default() };
        let [a, b, c] = f.corners;
        let m_ab = self.midpoint_or_insert(a, b, layer, new_state, &mut delta);
        let m_bc = self.midpoint_or_insert(b, c, layer, new_state, &mut delta);
        let m_ca = self.midpoint_or_insert(c, a, layer, new_state, &mut delta);
        for (u, v) in [(m_ab, m_bc), (m_bc, m_ca), (m_ca, m_ab)] {
            let e = Edge::new(u, v);
            self.edges.insert(e);
            delta.added_edges.push(e);
        }
        let child_corners = [[a, m_ab, m_ca], [b, m_bc, m_ab], [c, m_ca, m_bc], [m_ab, m_bc, m_ca]];
        for (i, corners) in child_corners.into_iter().enumerate() {
            let id = FaceId(self.faces.len() as u32);
            let (kind, orientation) = if i < 3 {
                (FaceKind::CornerChild, f.orientation)
            } else {
                (FaceKind::CenterChild, f.orientation.flip())
            };
            self.faces.push(Face { id, corners, layer, orientation, kind, parent: Some(face), children: Vec::new() });
            delta.children.push(id);
        }
        self.faces[face.index()].children = delta.children.clone();
        Ok(delta)
    }

    fn midpoint_or_insert(
        &mut self,
        u: NodeId,
        v: NodeId,
        layer: u32,
        state: NodeState,
        delta: &mut SubdivisionDelta,
    ) -> NodeId {
        let key = Edge::new(u, v);
        if let Some(&m) = self.midpoints.get(&key) {
            delta.reused_nodes.push(m);
            return m;
        }
        let m = self.push_node(self.pos(u).midpoint(self.pos(v)), layer, state);
        self.midpoints.insert(key, m);
        self.edges.remove(&key);
        delta.removed_edges.push(key);
        for e in [Edge::new(u, m), Edge::new(m, v)] {
            self.edges.insert(e);
            delta.added_edges.push(e);
        }
        delta.new_nodes.push(m);
        m
    }

    /// Grows the network by population-weighted subdivision until the next
    /// sampled subdivision would exceed `target_size` nodes.
    pub fn generate(
        &mut self,
        population: &Population,
        target_size: usize,
        seed: u64,
    ) -> Result<Vec<SubdivisionDelta>, GeometryError> {
        let mut grower = Generator::new(self, population, target_size, seed)?;
        let mut deltas = Vec::new();
        while let Some(d) = grower.step(self)? {
            deltas.push(d);
        }
        Ok(deltas)
    }

    /// Structural check of every construction invariant. Never mutates.
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Serializes into the versioned JSON document.
    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            version: NETWORK_DOC_VERSION,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord { id: n.id, x: n.pos.x, y: n.pos.y, layer: n.layer, state: n.state })
                .collect(),
            edges: self.edges.iter().map(|e| [e.a, e.b]).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self, GeometryError> {
        let bad = |m: String| GeometryError::InvalidDocument(m);
        if doc.version != NETWORK_DOC_VERSION {
            return Err(bad(format!("unsupported version {}", doc.version)));
        }
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (i, r) in doc.nodes.iter().enumerate() {
            if r.id.index() != i {
                return Err(bad(format!("node ids must be dense and ordered (found {} at {i})", r.id)));
            }
            nodes.push(Node { id: r.id, pos: Point::new(r.x, r.y), layer: r.layer, state: r.state });
        }
        let n = nodes.len();
        let mut edges = BTreeSet::new();
        for [u, v] in &doc.edges {
            if u.index() >= n || v.index() >= n || u == v {
                return Err(bad(format!("edge {u}-{v} references an unknown node")));
            }
            edges.insert(Edge::new(*u, *v));
        }
        let mut midpoints = BTreeMap::new();
        for (i, f) in doc.faces.iter().enumerate() {
            if f.id.index() != i {
                return Err(bad(format!("face ids must be dense and ordered (found {} at {i})", f.id)));
            }
            if f.corners.iter().any(|c| c.index() >= n) {
                return Err(bad(format!("face {} references an unknown node", f.id)));
            }
            if !(f.children.is_empty() || f.children.len() == 4)
                || f.children.iter().any(|c| c.index() >= doc.faces.len())
            {
                return Err(bad(format!("face {} has malformed children", f.id)));
            }
            if f.children.len() == 4 {
                let [a, b, c] = f.corners;
                let corner_child = |k: usize| doc.faces[f.children[k].index()].corners;
                midpoints.insert(Edge::new(a, b), corner_child(0)[1]);
                midpoints.insert(Edge::new(b, c), corner_child(1)[1]);
                midpoints.insert(Edge::new(c, a), corner_child(2)[1]);
            }
        }
        Ok(Self { nodes, faces: doc.faces.clone(), edges, midpoints })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("network document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| GeometryError::InvalidDocument(e.to_string()))?;
        Self::from_document(&doc)
    }

    #[cfg(test)]
    pub(crate) fn nodes_mut(&mut self) -> &mut Vec<Node> {
        &mut self.nodes
    }
}

pub const NETWORK_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub layer: u32,
    pub state: NodeState,
}

/// On-disk network representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub version: u32,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<[NodeId; 2]>,
    pub faces: Vec<Face>,
}

/// Stepwise population-weighted growth. Leaves are sampled by inverse CDF over
/// their masses (ordered by face id) with a ChaCha8 generator seeded from `seed`.
pub struct Generator<'p> {
    population: &'p Population,
    target_size: usize,
    rng: ChaCha8Rng,
    masses: BTreeMap<FaceId, f64>,
    done: bool,
}

impl<'p> Generator<'p> {
    pub fn new(
        network: &Network,
        population: &'p Population,
        target_size: usize,
        seed: u64,
    ) -> Result<Self, GeometryError> {
        if target_size < network.node_count() {
            return Err(GeometryError::TargetTooSmall { target: target_size, current: network.node_count() });
        }
        Ok(Self {
            population,
            target_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            masses: BTreeMap::new(),
            done: false,
        })
    }

    /// Samples and subdivides one leaf; `None` once the target would be exceeded.
    pub fn step(&mut self, network: &mut Network) -> Result<Option<SubdivisionDelta>, GeometryError> {
        if self.done {
            return Ok(None);
        }
        let face = self.sample(network);
        let Some(face) = face else {
            self.done = true;
            return Ok(None);
        };
        if network.node_count() + network.new_nodes_for(face) > self.target_size {
            self.done = true;
            return Ok(None);
        }
        let delta = network.subdivide_face(face)?;
        self.masses.remove(&face);
        Ok(Some(delta))
    }

    fn sample(&mut self, network: &Network) -> Option<FaceId> {
        let leaves: Vec<FaceId> = network.leaf_faces().map(|f| f.id).collect();
        if leaves.is_empty() {
            return None;
        }
        let mut cumulative = Vec::with_capacity(leaves.len());
        let mut total = 0.0;
        for &f in &leaves {
            let mass = *self
                .masses
                .entry(f)
                .or_insert_with(|| self.population.triangle_mass(network.corner_points(f)));
            total += mass;
            cumulative.push(total);
        }
        if total > 0.0 {
            let u = self.rng.random::<f64>() * total;
            // first leaf whose cumulative mass exceeds u; zero-mass leaves are never chosen
            let idx = cumulative.partition_point(|&c| c <= u).min(leaves.len() - 1);
            Some(leaves[idx])
        } else {
            Some(leaves[self.rng.random_range(0..leaves.len())])
        }
    }
}

/// Convenience form of [`Network::generate`] that consumes and returns the network.
pub fn generate(
    mut network: Network,
    population: &Population,
    target_size: usize,
    seed: u64,
) -> Result<Network, GeometryError> {
    network.generate(population, target_size, seed)?;
    Ok(network)
}

/// Up/down label from the direction of the outward side normals: a triangle
/// whose normals sit in `[0, 60)` degrees modulo 120 points up. Adjacent
/// lattice triangles always receive opposite labels.
pub fn orientation_of(ccw: [Point; 3]) -> Orientation {
    let d = ccw[1] - ccw[0];
    let normal_deg = (-d.x).atan2(d.y).to_degrees();
    let a = (normal_deg + 1e-6).rem_euclid(120.0);
    if a < 60.0 {
        Orientation::Up
    } else {
        Orientation::Down
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn strictly_inside_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    let len = a.dist(b);
    if len == 0.0 || p.dist(a) <= tol || p.dist(b) <= tol {
        return false;
    }
    let dist_to_line = orient(a, b, p).abs() / len;
    let t = (p - a).dot(b - a) / (len * len);
    dist_to_line <= tol && t > 0.0 && t < 1.0
}

fn triangles_overlap(t: [Point; 3], u: [Point; 3], tol: f64) -> bool {
    let same = t.iter().all(|p| u.iter().any(|q| p.dist(*q) <= tol));
    if same {
        return true;
    }
    for i in 0..3 {
        for j in 0..3 {
            if segments_cross_properly(t[i], t[(i + 1) % 3], u[j], u[(j + 1) % 3], tol) {
                return true;
            }
        }
    }
    let centroid = |x: [Point; 3]| Point::new((x[0].x + x[1].x + x[2].x) / 3.0, (x[0].y + x[1].y + x[2].y) / 3.0);
    strictly_inside_triangle(centroid(t), u, tol) || strictly_inside_triangle(centroid(u), t, tol)
}

fn strictly_inside_triangle(p: Point, tri: [Point; 3], tol: f64) -> bool {
    let s = orient(tri[0], tri[1], tri[2]).signum();
    (0..3).all(|k| {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        s * orient(a, b, p) / a.dist(b) > tol
    })
}

fn segments_cross_properly(a1: Point, a2: Point, b1: Point, b2: Point, tol: f64) -> bool {
    let la = a1.dist(a2);
    let lb = b1.dist(b2);
    let d1 = orient(b1, b2, a1) / lb;
    let d2 = orient(b1, b2, a2) / lb;
    let d3 = orient(a1, a2, b1) / la;
    let d4 = orient(a1, a2, b2) / la;
    ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol)) && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
}

/// True when two graph edges intersect anywhere other than a single shared endpoint.
fn edges_conflict(a1: Point, a2: Point, b1: Point, b2: Point, tol: f64) -> bool {
    let shared = [(a1, a2, b1, b2), (a1, a2, b2, b1), (a2, a1, b1, b2), (a2, a1, b2, b1)]
        .into_iter()
        .find(|(s, _, t, _)| s.dist(*t) <= tol);
    if let Some((s, p, _, q)) = shared {
        // collinear and pointing the same way means the edges overlap
        let u = p - s;
        let v = q - s;
        return (u.cross(v)).abs() <= tol * u.norm().max(v.norm()) && u.dot(v) > 0.0;
    }
    if segments_cross_properly(a1, a2, b1, b2, tol) {
        return true;
    }
    strictly_inside_segment(a1, b1, b2, tol)
        || strictly_inside_segment(a2, b1, b2, tol)
        || strictly_inside_segment(b1, a1, a2, tol)
        || strictly_inside_segment(b2, a1, a2, tol)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    EmptyNetwork,
    EulerMismatch { nodes: usize, edges: usize, leaf_faces: usize, components: usize },
    DegreeTooHigh { node: NodeId, degree: usize },
    EdgeCrossing { first: Edge, second: Edge },
    NotEquilateral { face: FaceId },
    DegenerateFace { face: FaceId },
    DuplicatePosition { first: NodeId, second: NodeId },
    LayerMismatch { detail: String },
    RegistryMismatch { detail: String },
    BrokenChain { face: FaceId, missing: Edge },
    OrphanEdge { edge: Edge },
    HierarchyMismatch { face: FaceId, detail: String },
}

/// Result of [`Network::validate`]. `issues` is empty exactly when every check passed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub nodes: usize,
    pub edges: usize,
    pub leaf_faces: usize,
    pub max_degree: usize,
    pub euler_ok: bool,
    pub degree_ok: bool,
    pub planar_ok: bool,
    pub equilateral_ok: bool,
    pub unique_positions_ok: bool,
    pub layers_ok: bool,
    pub registry_ok: bool,
    pub chains_ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

fn validate(net: &Network) -> ValidationReport {
    let mut issues = Vec::new();
    let mut report = ValidationReport {
        nodes: net.node_count(),
        edges: net.edge_count(),
        leaf_faces: net.leaf_count(),
        max_degree: 0,
        euler_ok: true,
        degree_ok: true,
        planar_ok: true,
        equilateral_ok: true,
        unique_positions_ok: true,
        layers_ok: true,
        registry_ok: true,
        chains_ok: true,
        issues: Vec::new(),
    };
    if net.nodes.is_empty() || net.faces.is_empty() {
        report.euler_ok = false;
        report.issues.push(ValidationIssue::EmptyNetwork);
        return report;
    }
    let scale = net.faces.iter().map(|f| net.side_length(f.id)).fold(0.0, f64::max);
    let tol = EQUILATERAL_TOL * scale;

    // Euler over the connected leaf graph
    let adj = net.adjacency();
    let components = count_components(&adj);
    let (v, e, f) = (net.node_count() as i64, net.edge_count() as i64, report.leaf_faces as i64);
    if components != 1 || v - e + f + 1 != 2 {
        report.euler_ok = false;
        issues.push(ValidationIssue::EulerMismatch {
            nodes: v as usize,
            edges: e as usize,
            leaf_faces: f as usize,
            components,
        });
    }

    for (i, nbrs) in adj.iter().enumerate() {
        report.max_degree = report.max_degree.max(nbrs.len());
        if nbrs.len() > 6 {
            report.degree_ok = false;
            issues.push(ValidationIssue::DegreeTooHigh { node: NodeId(i as u32), degree: nbrs.len() });
        }
    }

    // sweep over x-sorted edges; only x-overlapping pairs are tested
    let mut segs: Vec<(f64, f64, Edge)> = net
        .edges
        .iter()
        .map(|e| {
            let (p, q) = (net.pos(e.a), net.pos(e.b));
            (p.x.min(q.x), p.x.max(q.x), *e)
        })
        .collect();
    segs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    for i in 0..segs.len() {
        let (_, xhi, e1) = segs[i];
        let (p1, p2) = (net.pos(e1.a), net.pos(e1.b));
        let (ylo1, yhi1) = (p1.y.min(p2.y), p1.y.max(p2.y));
        for &(xlo2, _, e2) in &segs[i + 1..] {
            if xlo2 > xhi + tol {
                break;
            }
            let (q1, q2) = (net.pos(e2.a), net.pos(e2.b));
            if q1.y.max(q2.y) < ylo1 - tol || q1.y.min(q2.y) > yhi1 + tol {
                continue;
            }
            if edges_conflict(p1, p2, q1, q2, tol) {
                report.planar_ok = false;
                issues.push(ValidationIssue::EdgeCrossing { first: e1, second: e2 });
            }
        }
    }

    for face in &net.faces {
        let pts = net.corner_points(face.id);
        let sides = [pts[0].dist(pts[1]), pts[1].dist(pts[2]), pts[2].dist(pts[0])];
        let max = sides.iter().cloned().fold(0.0, f64::max);
        let min = sides.iter().cloned().fold(f64::INFINITY, f64::min);
        if orient(pts[0], pts[1], pts[2]) <= 0.0 {
            report.equilateral_ok = false;
            issues.push(ValidationIssue::DegenerateFace { face: face.id });
        } else if max - min > EQUILATERAL_TOL * max {
            report.equilateral_ok = false;
            issues.push(ValidationIssue::NotEquilateral { face: face.id });
        }
    }

    let mut order: Vec<NodeId> = net.nodes.iter().map(|n| n.id).collect();
    order.sort_by(|a, b| net.pos(*a).x.total_cmp(&net.pos(*b).x).then(a.cmp(b)));
    for i in 0..order.len() {
        let p = net.pos(order[i]);
        for &other in &order[i + 1..] {
            let q = net.pos(other);
            if q.x - p.x > tol {
                break;
            }
            if p.dist(q) <= tol {
                report.unique_positions_ok = false;
                issues.push(ValidationIssue::DuplicatePosition { first: order[i], second: other });
            }
        }
    }

    let max_layer = net.max_layer();
    for node in &net.nodes {
        if node.layer > max_layer {
            report.layers_ok = false;
            issues.push(ValidationIssue::LayerMismatch {
                detail: format!("node {} has layer {} above depth {}", node.id, node.layer, max_layer),
            });
        }
    }
    for face in &net.faces {
        for &c in &face.corners {
            if net.nodes[c.index()].layer > face.layer {
                report.layers_ok = false;
                issues.push(ValidationIssue::LayerMismatch {
                    detail: format!("corner {c} of face {} is deeper than the face", face.id),
                });
            }
        }
        match face.parent {
            None => {
                if face.kind != FaceKind::Initial || face.layer != 0 {
                    report.layers_ok = false;
                    issues.push(ValidationIssue::HierarchyMismatch {
                        face: face.id,
                        detail: "parentless face must be an initial layer-0 face".into(),
                    });
                }
            }
            Some(p) => {
                let parent = &net.faces[p.index()];
                if face.layer != parent.layer + 1 {
                    report.layers_ok = false;
                    issues.push(ValidationIssue::LayerMismatch {
                        detail: format!("face {} layer {} under parent layer {}", face.id, face.layer, parent.layer),
                    });
                }
                let expected = match face.kind {
                    FaceKind::CenterChild => parent.orientation.flip(),
                    _ => parent.orientation,
                };
                if face.orientation != expected || !parent.children.contains(&face.id) {
                    issues.push(ValidationIssue::HierarchyMismatch {
                        face: face.id,
                        detail: "orientation or parent link inconsistent".into(),
                    });
                }
            }
        }
        if !face.children.is_empty() {
            let centers = face
                .children
                .iter()
                .filter(|c| net.faces[c.index()].kind == FaceKind::CenterChild)
                .count();
            if face.children.len() != 4 || centers != 1 {
                issues.push(ValidationIssue::HierarchyMismatch {
                    face: face.id,
                    detail: "a divided face needs 4 children with exactly one center".into(),
                });
            }
            let child_side = net.side_length(face.children[0]);
            if (child_side * 2.0 - net.side_length(face.id)).abs() > tol {
                report.equilateral_ok = false;
                issues.push(ValidationIssue::NotEquilateral { face: face.children[0] });
            }
        }
    }

    for (key, &m) in &net.midpoints {
        let Some(node) = net.node(m) else {
            report.registry_ok = false;
            issues.push(ValidationIssue::RegistryMismatch { detail: format!("{key} maps to missing node {m}") });
            continue;
        };
        if node.pos.dist(net.pos(key.a).midpoint(net.pos(key.b))) > tol || net.has_edge(key.a, key.b) {
            report.registry_ok = false;
            issues.push(ValidationIssue::RegistryMismatch {
                detail: format!("midpoint {m} of {key} misplaced or side not split"),
            });
        }
    }

    let mut seen = BTreeSet::new();
    for face in net.leaf_faces() {
        let ring = net.boundary_chain(face.id);
        for i in 0..ring.len() {
            let e = Edge::new(ring[i], ring[(i + 1) % ring.len()]);
            if !net.edges.contains(&e) {
                report.chains_ok = false;
                issues.push(ValidationIssue::BrokenChain { face: face.id, missing: e });
            }
            seen.insert(e);
        }
    }
    for e in &net.edges {
        if !seen.contains(e) {
            report.chains_ok = false;
            issues.push(ValidationIssue::OrphanEdge { edge: *e });
        }
    }

    report.issues = issues;
    report
}

fn count_components(adj: &[Vec<NodeId>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for v in &adj[u] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(v.index());
                }
            }
        }
    }
    count
}

/// Ready-made initial regions built from unit-lattice equilateral triangles.
pub mod regions {
    use super::Point;

    const H: f64 = 0.866_025_403_784_438_6; // sqrt(3)/2

    /// One upward triangle with its base on `origin`.
    pub fn triangle(origin: Point, side: f64) -> Vec<[Point; 3]> {
        vec![[origin, origin + Point::new(side, 0.0), origin + Point::new(0.5 * side, H * side)]]
    }

    /// A row of `count` alternating up/down triangles starting with an upward one at the origin.
    pub fn strip(count: usize, side: f64) -> Vec<[Point; 3]> {
        (0..count)
            .map(|i| {
                let x = 0.5 * side * i as f64;
                if i % 2 == 0 {
                    [Point::new(x, 0.0), Point::new(x + side, 0.0), Point::new(x + 0.5 * side, H * side)]
                } else {
                    [Point::new(x, H * side), Point::new(x + 0.5 * side, 0.0), Point::new(x + side, H * side)]
                }
            })
            .collect()
    }

    /// Regular hexagon of six triangles around `center`.
    pub fn hexagon(center: Point, side: f64) -> Vec<[Point; 3]> {
        let corner = |k: usize| {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            center + Point::new(side * a.cos(), side * a.sin())
        };
        (0..6).map(|k| [center, corner(k), corner(k + 1)]).collect()
    }
}
