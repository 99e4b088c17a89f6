//! Multi-scale quartered (MSQ) triangle networks and cyclic message-ferry routing.
//!
//! The crate is organized as a pipeline:
//!
//! - [`geometry`] builds networks by population-weighted recursive quartering of
//!   equilateral triangles and validates their structural invariants.
//! - [`cycles`] assigns a ferry cycle to every leaf triangle and indexes which
//!   cycles serve each directed edge.
//! - [`routing`] computes source to terminal routes restricted to the spanner
//!   ellipse, with detours when parts of the network are damaged.
//! - [`queueing`] turns demands and routes into per-cycle arrival rates and
//!   weights, evaluates the delivery cost and optimizes ferry turnaround rates.
//! - [`sim`] runs discrete-event simulations of store-carry-forward delivery,
//!   including failure recovery and runtime growth.
//! - [`scenario`] reads scenario files and composes the stages end to end.

pub mod cycles;
pub mod geometry;
pub mod population;
pub mod queueing;
pub mod routing;
pub mod scenario;
pub mod seed;
pub mod sim;

pub use cycles::{assign_cycles, Cycle, CycleClass, CycleId, CyclePlan, Handedness, Hop, Scheme, Slot};
pub use geometry::{
    DirectedEdge, Edge, Face, FaceId, FaceKind, GeometryError, Network, Node, NodeId, NodeState,
    Orientation, Point, SubdivisionDelta, ValidationReport,
};
pub use population::Population;
pub use queueing::{DemandMatrix, FlowTable, QueueStats, RateSolution, WeightTable};
pub use routing::{DamageSet, Route, Router, RoutingError};
