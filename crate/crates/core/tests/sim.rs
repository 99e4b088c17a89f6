use std::collections::BTreeMap;

use msq_core::cycles::CycleSignature;
use msq_core::geometry::regions;
use msq_core::sim::{self, FerryId, LogKind, Mode, ScriptEvent, ScriptKind, SimConfig, SimError, Simulation};
use msq_core::{assign_cycles, CycleClass, CyclePlan, DemandMatrix, FaceId, Network, NodeId, NodeState, Point, Scheme};

fn quartered() -> Network {
    let mut net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
    net.subdivide_face(FaceId(0)).unwrap();
    net
}

fn uniform_rates(plan: &CyclePlan, mu: f64) -> BTreeMap<msq_core::CycleId, f64> {
    plan.cycles().iter().map(|c| (c.id, mu)).collect()
}

fn corner_demands(rate: f64) -> DemandMatrix {
    let mut d = DemandMatrix::new();
    for (s, t) in [(0, 1), (1, 2), (2, 0), (1, 0)] {
        d.add(NodeId(s), NodeId(t), rate).unwrap();
    }
    d
}

fn ferry_config(plan: &CyclePlan, horizon: f64) -> SimConfig {
    let mut cfg = SimConfig::new(Mode::Ferry, 11, horizon);
    cfg.rates = uniform_rates(plan, 2.0);
    cfg.demands = corner_demands(0.2);
    cfg.drain = horizon * 0.2;
    cfg
}

#[test]
fn single_server_queue_matches_mm1_mean() {
    let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = SimConfig::new(Mode::Queue, 5, 40_000.0);
    cfg.rates = uniform_rates(&plan, 1.0);
    cfg.demands.add(NodeId(0), NodeId(1), 0.5).unwrap();
    let m = sim::run(&net, &plan, cfg).unwrap();
    assert!(m.delivered > 15_000);
    let mean = m.mean_delay.unwrap();
    assert!((mean - 2.0).abs() < 0.16, "mean delay {mean}");
    assert_eq!(m.generated, m.delivered + m.in_flight);
}

#[test]
fn zero_demand_gives_empty_metrics() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = SimConfig::new(Mode::Queue, 1, 100.0);
    cfg.rates = uniform_rates(&plan, 1.0);
    let m = sim::run(&net, &plan, cfg).unwrap();
    assert_eq!(m.generated, 0);
    assert!(m.mean_delay.is_none());
    assert!(m.servers.is_empty());
}

#[test]
fn unstable_rates_are_rejected_with_the_cycle() {
    let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = SimConfig::new(Mode::Queue, 1, 100.0);
    cfg.rates = uniform_rates(&plan, 0.4);
    cfg.demands.add(NodeId(0), NodeId(1), 0.5).unwrap();
    let serving = plan.serving_cycles(msq_core::DirectedEdge::new(NodeId(0), NodeId(1))).unwrap()[0].0;
    match Simulation::new(&net, &plan, cfg) {
        Err(SimError::UnstableConfig { cycle, .. }) => assert_eq!(cycle, serving),
        other => panic!("expected UnstableConfig, got {:?}", other.err()),
    }
}

#[test]
fn scripted_events_need_ferry_mode() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = SimConfig::new(Mode::Queue, 1, 100.0);
    cfg.rates = uniform_rates(&plan, 1.0);
    cfg.events.push(ScriptEvent { kind: ScriptKind::NodeFailure, target: 3, time: 1.0 });
    assert_eq!(Simulation::new(&net, &plan, cfg).err(), Some(SimError::EventsRequireFerryMode));
}

#[test]
fn unknown_script_targets_are_rejected() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = ferry_config(&plan, 100.0);
    cfg.events.push(ScriptEvent { kind: ScriptKind::NodeFailure, target: 99, time: 1.0 });
    assert!(matches!(Simulation::new(&net, &plan, cfg), Err(SimError::UnknownEntity { kind: "node", id: 99 })));
}

#[test]
fn ferry_delivery_respects_causality() {
    let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
    let plan = assign_cycles(&net, Scheme::AllClockwise).unwrap();
    let mut cfg = SimConfig::new(Mode::Ferry, 3, 50.0);
    cfg.rates = uniform_rates(&plan, 1.0);
    cfg.demands.add(NodeId(0), NodeId(2), 0.05).unwrap();
    let m = sim::run(&net, &plan, cfg).unwrap();
    assert!(m.delivered > 0);
    for r in m.messages.iter().filter(|r| r.delivered_at.is_some()) {
        assert!(r.delivered_at.unwrap() > r.created_at);
        assert!(r.hops >= 1);
    }
}

#[test]
fn ferry_mode_delivers_everything_without_failures() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let m = sim::run(&net, &plan, ferry_config(&plan, 400.0)).unwrap();
    assert!(m.generated > 100);
    assert_eq!(m.undelivered_before_drain, 0);
    assert_eq!(m.coverage_violations, 0);
}

#[test]
fn same_seed_gives_identical_outputs() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = ferry_config(&plan, 200.0);
    cfg.events = vec![
        ScriptEvent { kind: ScriptKind::NodeFailure, target: 3, time: 20.0 },
        ScriptEvent { kind: ScriptKind::NodeRepair, target: 3, time: 80.0 },
    ];
    let a = sim::run(&net, &plan, cfg.clone()).unwrap();
    let b = sim::run(&net, &plan, cfg).unwrap();
    assert_eq!(a.events_csv(), b.events_csv());
    assert_eq!(a.messages_csv(), b.messages_csv());
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn midpoint_failure_unifies_and_skips_the_node() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut s = Simulation::new(&net, &plan, ferry_config(&plan, 400.0)).unwrap();
    s.inject_node_failure(NodeId(3), 10.0).unwrap();
    s.run_until(60.0);
    assert!(s.known_failed().contains(&NodeId(3)));
    let cycles = s.active_plan().cycles();
    assert_eq!(cycles.len(), 2, "one unified cycle per class");
    for c in cycles {
        assert_eq!(c.face, Some(FaceId(0)));
        assert!(!c.visits(NodeId(3)));
        assert_eq!(c.stops().len(), 3);
    }
    assert_eq!(s.network().state(NodeId(3)), NodeState::Failed);
    for n in [4, 5] {
        assert_eq!(s.network().state(NodeId(n)), NodeState::Inactive);
    }
    assert!(s.event_log().iter().any(|e| e.kind == LogKind::Unify));
}

#[test]
fn node_repair_restores_the_original_cycles() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let before: std::collections::BTreeSet<CycleSignature> = plan.signatures();
    let mut cfg = ferry_config(&plan, 400.0);
    cfg.events = vec![
        ScriptEvent { kind: ScriptKind::NodeFailure, target: 3, time: 10.0 },
        ScriptEvent { kind: ScriptKind::NodeRepair, target: 3, time: 100.0 },
    ];
    let mut s = Simulation::new(&net, &plan, cfg).unwrap();
    s.run_until(400.0);
    assert_eq!(s.cycle_signatures(), before);
    let m = s.finish();
    assert_eq!(m.undelivered_before_drain, 0);
    assert_eq!(m.coverage_violations, 0);
    assert!(m.recovery.iter().all(|e| e.turnarounds <= 10.0 * e.affected_layers as f64), "{:?}", m.recovery);
}

#[test]
fn ferry_failure_unifies_then_repair_redivides() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let before = plan.signatures();
    let mut s = Simulation::new(&net, &plan, ferry_config(&plan, 400.0)).unwrap();
    let victim = FerryId(0);
    s.inject_ferry_failure(victim, 10.0).unwrap();
    s.run_until(60.0);
    let faces: Vec<_> = s.active_plan().cycles().iter().map(|c| c.face).collect();
    assert!(faces.contains(&Some(FaceId(0))), "{faces:?}");
    // interior midpoints drop out once the children are merged
    assert!(s.event_log().iter().any(|e| e.kind == LogKind::FerryFailureDetected));
    s.inject_ferry_repair(victim, 100.0).unwrap();
    s.run_until(400.0);
    assert_eq!(s.cycle_signatures(), before);
    let m = s.finish();
    assert_eq!(m.undelivered_before_drain, 0);
}

#[test]
fn explicit_unify_needs_a_trigger_and_redivide_needs_a_unified_face() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut s = Simulation::new(&net, &plan, ferry_config(&plan, 100.0)).unwrap();
    assert_eq!(s.unify_cycles(FaceId(0)), Err(SimError::NoTrigger(FaceId(0))));
    assert_eq!(s.unify_cycles(FaceId(1)), Err(SimError::NotDivided(FaceId(1))));
    assert_eq!(s.redivide_cycles(FaceId(0)), Err(SimError::NotUnified(FaceId(0))));
    assert!(matches!(s.inject_node_failure(NodeId(77), 1.0), Err(SimError::UnknownEntity { .. })));
}

#[test]
fn partial_redivide_keeps_failed_child_merged() {
    let net = quartered();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut s = Simulation::new(&net, &plan, ferry_config(&plan, 200.0)).unwrap();
    s.inject_node_failure(NodeId(3), 5.0).unwrap();
    s.run_until(60.0);
    let delta = s.redivide_cycles(FaceId(0)).unwrap();
    // only the corner child away from node 3 can come back
    assert!(delta.retired.is_empty());
    assert_eq!(delta.created.len(), 2);
    let plan = s.active_plan();
    assert!(plan.cycles().iter().any(|c| c.face == Some(FaceId(0))));
    assert!(plan.cycles().iter().all(|c| !c.visits(NodeId(3))));
}

#[test]
fn runtime_subdivision_creates_child_cycles() {
    let net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
    let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
    let mut cfg = ferry_config(&plan, 300.0);
    cfg.demands = corner_demands(0.3);
    let mut s = Simulation::new(&net, &plan, cfg).unwrap();
    s.subdivide_at_runtime(FaceId(0), 5.0).unwrap();
    s.run_until(30.0);
    let forward = s.active_plan().cycles().iter().filter(|c| c.class == CycleClass::Forward).count();
    assert_eq!(forward, 4);
    assert_eq!(s.active_plan().cycles().len(), 8);
    assert!((0..6).all(|n| s.network().state(NodeId(n)) == NodeState::Active));
    assert!(matches!(s.subdivide_at_runtime(FaceId(0), 40.0), Err(SimError::NotALeaf(_))));
    s.run_until(300.0);
    let m = s.finish();
    assert_eq!(m.undelivered_before_drain, 0);
    assert_eq!(m.coverage_violations, 0);
}
