use std::path::{Path, PathBuf};

use msq_core::queueing::{self, QueueError};
use msq_core::routing::RoutingError;
use msq_core::scenario::{GenerateSpec, PopulationSpec, RegionSpec, Scenario, ScenarioError};
use msq_core::sim::{self, Metrics};
use msq_core::{
    assign_cycles, seed, CycleId, CyclePlan, DamageSet, DemandMatrix, FaceId, Network, NodeId, Router, Slot,
};
use serde::Serialize;

use crate::output::{read, RunManifest, Sink};
use crate::{CliError, Format, GenerateArgs, OptimizeArgs, PlanArgs, RegionArg, RouteArgs, SimulateArgs};

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn config(what: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", what.display()))
}

fn load_network(path: &Path) -> Result<Network, CliError> {
    let net = Network::from_json(&read(path)?).map_err(|e| config(path, e))?;
    let report = net.validate();
    if !report.is_ok() {
        return Err(config(path, format!("network fails validation: {:?}", report.issues)));
    }
    Ok(net)
}

fn load_plan(path: Option<&PathBuf>, net: &Network, scheme: msq_core::Scheme) -> Result<CyclePlan, CliError> {
    match path {
        Some(p) => CyclePlan::from_json(&read(p)?).map_err(|e| config(p, e)),
        None => assign_cycles(net, scheme).map_err(|e| CliError::Config(e.to_string())),
    }
}

fn label<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

#[derive(Serialize)]
struct NodeRow {
    id: u32,
    x: f64,
    y: f64,
    layer: u32,
    state: String,
}

#[derive(Serialize)]
struct EdgeRow {
    a: u32,
    b: u32,
    length: f64,
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let sink = Sink::new(&a.common)?;
    let region = match a.region {
        RegionArg::Triangle => RegionSpec::Triangle { side: a.side, origin: [0.0, 0.0] },
        RegionArg::Hexagon => RegionSpec::Hexagon { side: a.side, center: [0.0, 0.0] },
        RegionArg::Strip => RegionSpec::Strip { count: a.count, side: a.side },
    };
    let spec = GenerateSpec {
        region,
        population: a.population.clone().map(PopulationSpec::RasterFile).unwrap_or_default(),
        subdivide: a.subdivide.iter().map(|&f| FaceId(f)).collect(),
        target_size: a.target,
        seed: None,
    };
    let net = match spec.build(a.seed, Path::new("")) {
        Ok(net) => net,
        Err(ScenarioError::Invalid(report)) => {
            sink.json("validation", &report, false)?;
            return Err(CliError::Config(format!("generated network fails validation: {:?}", report.issues)));
        }
        Err(e) => return Err(e.into()),
    };
    match sink.format {
        Format::Json => sink.json("network", &net.to_document(), true)?,
        Format::Csv => {
            let nodes = net.nodes().iter().map(|n| NodeRow {
                id: n.id.0,
                x: n.pos.x,
                y: n.pos.y,
                layer: n.layer,
                state: label(&n.state),
            });
            sink.csv("nodes", nodes, true)?;
            let edges = net.edges().iter().map(|&e| EdgeRow { a: e.a.0, b: e.b.0, length: net.edge_length(e) });
            sink.csv("edges", edges, false)?;
        }
    }
    sink.json("validation", &net.validate(), false)?;
    if let Some(dir) = sink.dir() {
        sink.manifest(&RunManifest::new("generate", a, a.population.iter().cloned().collect(), Some(a.seed), dir)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CycleRow {
    id: u32,
    face: Option<u32>,
    class: String,
    handedness: String,
    stops: String,
}

fn write_plan(sink: &Sink, plan: &CyclePlan, primary: bool) -> Result<(), CliError> {
    match sink.format {
        Format::Json => sink.json("plan", &plan.to_document(), primary),
        Format::Csv => {
            let rows = plan.cycles().iter().map(|c| CycleRow {
                id: c.id.0,
                face: c.face.map(|f| f.0),
                class: label(&c.class),
                handedness: label(&c.handedness),
                stops: c.stops().iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(" "),
            });
            sink.csv("cycles", rows, primary)
        }
    }
}

pub fn plan(a: &PlanArgs) -> Result<(), CliError> {
    let sink = Sink::new(&a.common)?;
    let net = load_network(&a.network)?;
    let plan = assign_cycles(&net, a.scheme.into()).map_err(|e| CliError::Config(e.to_string()))?;
    write_plan(&sink, &plan, true)?;
    if let Some(dir) = sink.dir() {
        sink.manifest(&RunManifest::new("plan", a, vec![a.network.clone()], None, dir)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RouteReport {
    source: NodeId,
    terminal: NodeId,
    length: f64,
    euclidean: f64,
    ratio: f64,
    hops: usize,
    nodes: Vec<NodeId>,
    directed_edges: Vec<[NodeId; 2]>,
    cycle_trace: Vec<(CycleId, Slot)>,
}

#[derive(Serialize)]
struct HopRow {
    step: usize,
    from: u32,
    to: u32,
    cycle: Option<u32>,
    slot: Option<Slot>,
}

pub fn route(a: &RouteArgs) -> Result<(), CliError> {
    let sink = Sink::new(&a.common)?;
    let net = load_network(&a.network)?;
    let plan = load_plan(a.plan.as_ref(), &net, a.scheme.into())?;
    let damage: DamageSet = match &a.damage {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| config(p, e))?,
        None => DamageSet::none(),
    };
    let (s, t) = (NodeId(a.source), NodeId(a.terminal));
    let router = Router::from_plan(&net, &plan, &damage);
    let mut rng = seed::rng(a.seed, "route");
    let route = router.route(s, t, &mut rng).map_err(|e| match e {
        RoutingError::Unreachable { .. } | RoutingError::TooManyRoutes(_) => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    })?;
    let euclidean = net.pos(s).dist(net.pos(t));
    match sink.format {
        Format::Json => {
            let report = RouteReport {
                source: s,
                terminal: t,
                length: route.length,
                euclidean,
                ratio: route.length / euclidean,
                hops: route.hops(),
                nodes: route.nodes(),
                directed_edges: route.directed_edges.iter().map(|e| [e.from, e.to]).collect(),
                cycle_trace: route.cycle_trace.clone(),
            };
            sink.json("route", &report, true)?;
        }
        Format::Csv => {
            let rows = route.directed_edges.iter().enumerate().map(|(i, e)| HopRow {
                step: i,
                from: e.from.0,
                to: e.to.0,
                cycle: route.cycle_trace.get(i).map(|c| c.0 .0),
                slot: route.cycle_trace.get(i).map(|c| c.1),
            });
            sink.csv("route", rows, true)?;
        }
    }
    if let Some(dir) = sink.dir() {
        let inputs = [Some(&a.network), a.plan.as_ref(), a.damage.as_ref()].into_iter().flatten().cloned().collect();
        sink.manifest(&RunManifest::new("route", a, inputs, Some(a.seed), dir)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RateRow {
    cycle: u32,
    mu: f64,
    initial: f64,
    margin: Option<f64>,
    iterations: Option<u32>,
}

fn write_solution(sink: &Sink, sol: &msq_core::RateSolution, primary: bool) -> Result<(), CliError> {
    match sink.format {
        Format::Json => sink.json("solution", sol, primary),
        Format::Csv => {
            let rows = sol.mu.iter().map(|(c, &mu)| RateRow {
                cycle: c.0,
                mu,
                initial: sol.initial.get(c).copied().unwrap_or(mu),
                margin: sol.margins.get(c).copied(),
                iterations: sol.iterations.get(c).copied(),
            });
            sink.csv("rates", rows, primary)
        }
    }
}

pub fn optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let sink = Sink::new(&a.common)?;
    let net = load_network(&a.network)?;
    let plan = load_plan(a.plan.as_ref(), &net, a.scheme.into())?;
    let demands: DemandMatrix = serde_json::from_str(&read(&a.demands)?).map_err(|e| config(&a.demands, e))?;
    let router = Router::from_plan(&net, &plan, &DamageSet::none());
    let classify = |e: QueueError| match e {
        QueueError::InvalidInput(_) | QueueError::Routing { .. } | QueueError::NoPositiveWeights => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    };
    let analysis = queueing::analyze(&router, &plan, &demands).map_err(classify)?;
    let sol = queueing::optimize_rates(&analysis.flows, &analysis.weights, plan.cycles().iter().map(|c| c.id))
        .map_err(classify)?;
    write_solution(&sink, &sol, true)?;
    if let Some(dir) = sink.dir() {
        let inputs = [Some(&a.network), a.plan.as_ref(), Some(&a.demands)].into_iter().flatten().cloned().collect();
        sink.manifest(&RunManifest::new("optimize", a, inputs, None, dir)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReplicationSummary {
    index: u32,
    seed: u64,
    generated: u64,
    delivered: u64,
    undelivered_before_drain: u64,
    mean_delay: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    replications: Vec<ReplicationSummary>,
    /// Mean over replications of the per-replication mean delay.
    mean_delay: Option<f64>,
    /// Standard error of `mean_delay`; needs two or more replications.
    std_error: Option<f64>,
}

fn summarize(runs: &[(Scenario, Metrics)]) -> Summary {
    let replications: Vec<_> = runs
        .iter()
        .enumerate()
        .map(|(i, (s, m))| ReplicationSummary {
            index: i as u32,
            seed: s.seed,
            generated: m.generated,
            delivered: m.delivered,
            undelivered_before_drain: m.undelivered_before_drain,
            mean_delay: m.mean_delay,
        })
        .collect();
    let delays: Vec<f64> = replications.iter().filter_map(|r| r.mean_delay).collect();
    let n = delays.len() as f64;
    let mean = (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / n);
    let std_error = mean.filter(|_| delays.len() > 1).map(|m| {
        let var = delays.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Summary { replications, mean_delay: mean, std_error }
}

#[derive(Serialize)]
struct PairRow {
    source: u32,
    terminal: u32,
    delivered: u64,
    mean_delay: f64,
}

fn write_metrics(sink: &Sink, m: &Metrics, primary: bool) -> Result<(), CliError> {
    match sink.format {
        Format::Json => sink.json("metrics", m, primary),
        Format::Csv => {
            sink.text("messages.csv", &m.messages_csv(), primary)?;
            sink.text("events.csv", &m.events_csv(), false)?;
            let pairs = m.pairs.iter().map(|p| PairRow {
                source: p.source.0,
                terminal: p.terminal.0,
                delivered: p.delivered,
                mean_delay: p.mean_delay,
            });
            sink.csv("pairs", pairs, false)
        }
    }
}

fn replicate(
    scenario: &Scenario,
    net: &Network,
    plan: &CyclePlan,
    sol: &msq_core::RateSolution,
    count: u32,
    jobs: usize,
) -> Result<Vec<(Scenario, Metrics)>, CliError> {
    let jobs = jobs.clamp(1, count.max(1) as usize);
    let run = |i: u32| {
        let rep = scenario.replication(i);
        let metrics = sim::run(net, plan, rep.sim_config(sol)).map_err(|e| CliError::from(ScenarioError::from(e)))?;
        Ok::<_, CliError>((rep, metrics))
    };
    let mut slots: Vec<Option<Result<(Scenario, Metrics), CliError>>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let run = &run;
                scope.spawn(move || {
                    (0..count).filter(|i| *i as usize % jobs == w).map(|i| (i, run(i))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("replication worker panicked") {
                slots[i as usize] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every replication ran")).collect()
}

pub fn simulate(a: &SimulateArgs, pipeline: bool) -> Result<(), CliError> {
    if a.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let sink = Sink::new(&a.common)?;
    let (mut scenario, base) = Scenario::load(&a.scenario)?;
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    if let Some(s) = a.scheme {
        scenario.scheme = s.into();
    }
    if let Some(m) = a.mode {
        scenario.mode = m.into();
    }
    let net = scenario.network(&base)?;
    let plan = assign_cycles(&net, scenario.scheme).map_err(ScenarioError::from)?;
    let sol = scenario.rates(&net, &plan)?;
    let runs = replicate(&scenario, &net, &plan, &sol, a.replications, a.jobs)?;

    if pipeline {
        sink.json("network", &net.to_document(), false)?;
        write_plan(&sink, &plan, false)?;
        write_solution(&sink, &sol, false)?;
    }
    let manifest = match sink.dir() {
        Some(dir) => {
            let name = if pipeline { "pipeline" } else { "simulate" };
            Some(RunManifest::new(name, a, vec![a.scenario.clone()], Some(scenario.seed), dir)?)
        }
        None => None,
    };
    if let [(_, m)] = runs.as_slice() {
        write_metrics(&sink, m, true)?;
    } else {
        sink.json("summary", &summarize(&runs), true)?;
        for (i, (_, m)) in runs.iter().enumerate() {
            let child = sink.child(&format!("rep-{i:03}"))?;
            write_metrics(&child, m, false)?;
            if let Some(man) = &manifest {
                child.manifest(man)?;
            }
        }
    }
    if let Some(man) = &manifest {
        sink.manifest(man)?;
    }
    Ok(())
}
