mod common;

use std::collections::BTreeMap;

use common::{dijkstra, grid_minimum};
use msq_core::geometry::{regions, Generator};
use msq_core::queueing::{self, optimize_cycle, CycleCost};
use msq_core::routing::{spanner_ratio, DamageSet, Router};
use msq_core::sim::{self, Mode, SimConfig};
use msq_core::{assign_cycles, CycleId, DemandMatrix, Network, NodeId, Point, Population, Scheme};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grown(seed: u64, target: usize) -> Network {
    let mut net = Network::init_triangulation(&regions::hexagon(Point::new(0.0, 0.0), 1.0)).unwrap();
    net.generate(&Population::Uniform, target, seed).unwrap();
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_networks_keep_every_invariant(seed in any::<u64>(), target in 10usize..160) {
        let mut net = Network::init_triangulation(&regions::triangle(Point::new(0.0, 0.0), 1.0)).unwrap();
        let mut g = Generator::new(&net, &Population::Uniform, target, seed).unwrap();
        while g.step(&mut net).unwrap().is_some() {
            let report = net.validate();
            prop_assert!(report.is_ok(), "{:?}", report.issues);
        }
        prop_assert!(net.node_count() <= target);
        prop_assert!(net.nodes().iter().all(|n| net.degree(n.id) <= 6));
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(grown(seed, 60).to_json(), grown(seed, 60).to_json());
    }

    #[test]
    fn newton_matches_grid_oracle(terms in prop::collection::vec((0.01f64..10.0, 0.0f64..10.0), 1..4)) {
        let opt = optimize_cycle(CycleId(0), &CycleCost::new(terms.clone())).unwrap();
        let oracle = grid_minimum(&terms);
        prop_assert!((opt.mu - oracle).abs() <= 1e-6 * oracle.max(1.0), "{} vs {}", opt.mu, oracle);
        let lb = terms.iter().map(|t| t.1).fold(0.0, f64::max);
        prop_assert!(opt.mu > lb);
        prop_assert!(opt.initial <= opt.mu + 1e-9);
    }

    #[test]
    fn optimum_grows_with_weight(terms in prop::collection::vec((0.01f64..10.0, 0.0f64..10.0), 1..4), extra in 0.01f64..5.0) {
        let base = optimize_cycle(CycleId(0), &CycleCost::new(terms.clone())).unwrap().mu;
        let mut heavier = terms.clone();
        heavier[0].0 += extra;
        let more = optimize_cycle(CycleId(0), &CycleCost::new(heavier)).unwrap().mu;
        prop_assert!(more > base);
    }

    #[test]
    fn single_slot_closed_form(w in 0.0001f64..100.0, l in 0.0f64..100.0) {
        let opt = optimize_cycle(CycleId(0), &CycleCost::new(vec![(w, l)])).unwrap();
        let exact = w.sqrt() + l;
        prop_assert!((opt.mu - exact).abs() <= 4.0 * f64::EPSILON * exact, "{} vs {}", opt.mu, exact);
    }

    #[test]
    fn edge_flows_conserve_demand(seed in any::<u64>()) {
        let net = grown(seed, 60);
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let router = Router::from_plan(&net, &plan, &DamageSet::none());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut demands = DemandMatrix::new();
        for _ in 0..6 {
            let s = NodeId(rng.random_range(0..net.node_count() as u32));
            let t = NodeId(rng.random_range(0..net.node_count() as u32));
            if s != t {
                demands.add(s, t, rng.random_range(0.1..2.0)).unwrap();
            }
        }
        let analysis = queueing::analyze(&router, &plan, &demands).unwrap();
        let mut balance: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (e, f) in &analysis.edge_flow {
            *balance.entry(e.from).or_default() += f;
            *balance.entry(e.to).or_default() -= f;
        }
        for (s, t, r) in demands.iter() {
            *balance.entry(s).or_default() -= r;
            *balance.entry(t).or_default() += r;
        }
        for (n, b) in balance {
            prop_assert!(b.abs() < 1e-9, "node {} out of balance by {}", n, b);
        }
        let attributed: f64 = analysis.flows.total();
        let carried: f64 = analysis.edge_flow.values().sum();
        prop_assert!((attributed - carried).abs() < 1e-9);
    }

    #[test]
    fn routes_are_shortest_and_within_spanner_bound(seed in any::<u64>()) {
        let net = grown(seed, 80);
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let router = Router::from_plan(&net, &plan, &DamageSet::none());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let s = NodeId(rng.random_range(0..net.node_count() as u32));
        let dist = dijkstra(&net, s);
        for _ in 0..10 {
            let t = NodeId(rng.random_range(0..net.node_count() as u32));
            if s == t {
                continue;
            }
            let route = router.route(s, t, &mut rng).unwrap();
            prop_assert!((route.length - dist[t.index()]).abs() < 1e-9 * dist[t.index()].max(1.0));
            prop_assert!(spanner_ratio(&net, s, t).unwrap() <= 2.0 + 1e-9);
            prop_assert_eq!(route.cycle_trace.len(), route.directed_edges.len());
            prop_assert_eq!(route.nodes().first().copied(), Some(s));
            prop_assert_eq!(route.nodes().last().copied(), Some(t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulations_are_reproducible_and_conserve_messages(seed in any::<u64>()) {
        let net = grown(seed, 40);
        let plan = assign_cycles(&net, Scheme::Mixed).unwrap();
        let mut cfg = SimConfig::new(Mode::Ferry, seed, 60.0);
        cfg.rates = plan.cycles().iter().map(|c| (c.id, 3.0)).collect();
        cfg.demands.add(NodeId(0), NodeId(3), 0.3).unwrap();
        cfg.demands.add(NodeId(5), NodeId(1), 0.3).unwrap();
        let a = sim::run(&net, &plan, cfg.clone()).unwrap();
        let b = sim::run(&net, &plan, cfg).unwrap();
        prop_assert_eq!(a.generated, a.delivered + a.in_flight);
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.messages_csv(), b.messages_csv());
    }
}
