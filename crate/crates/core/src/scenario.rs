//! Scenario files and the end-to-end pipeline: build or load a network,
//! assign cycles, fix or optimize rates, simulate.
//!
//! Relative paths inside a scenario resolve against the scenario's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{assign_cycles, CycleId, CyclePlan, PlanError, Scheme};
use crate::geometry::{regions, FaceId, GeometryError, Network, Point, ValidationReport};
use crate::population::{Population, Raster};
use crate::queueing::{self, DemandMatrix, QueueError, RateSolution};
use crate::routing::{DamageSet, Router};
use crate::seed;
use crate::sim::{self, Detection, Metrics, Mode, RatePolicy, ScriptEvent, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error("generate: {0}")]
    Generate(#[from] GeometryError),
    #[error("generate: network fails validation with {} issues", .0.issues.len())]
    Invalid(ValidationReport),
    #[error("plan: {0}")]
    Plan(#[from] PlanError),
    #[error("optimize: {0}")]
    Optimize(#[from] QueueError),
    #[error("simulate: {0}")]
    Simulate(#[from] SimError),
}

impl ScenarioError {
    /// Whether the input itself is at fault, as opposed to a failure while
    /// running a well-formed scenario.
    pub fn is_config_error(&self) -> bool {
        match self {
            ScenarioError::Read { .. }
            | ScenarioError::Parse { .. }
            | ScenarioError::Generate(_)
            | ScenarioError::Invalid(_)
            | ScenarioError::Plan(_) => true,
            ScenarioError::Optimize(e) => matches!(e, QueueError::InvalidInput(_) | QueueError::Routing { .. }),
            ScenarioError::Simulate(e) => !matches!(e, SimError::Queue(QueueError::NonConvergence(_))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Triangle {
        side: f64,
        #[serde(default)]
        origin: [f64; 2],
    },
    /// Row of alternating up and down triangles.
    Strip { count: usize, side: f64 },
    Hexagon {
        side: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Triangles { triangles: Vec<[[f64; 2]; 3]> },
}

impl RegionSpec {
    pub fn triangles(&self) -> Vec<[Point; 3]> {
        let p = |xy: [f64; 2]| Point::new(xy[0], xy[1]);
        match self {
            RegionSpec::Triangle { side, origin } => regions::triangle(p(*origin), *side),
            RegionSpec::Strip { count, side } => regions::strip(*count, *side),
            RegionSpec::Hexagon { side, center } => regions::hexagon(p(*center), *side),
            RegionSpec::Triangles { triangles } => triangles.iter().map(|t| [p(t[0]), p(t[1]), p(t[2])]).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSpec {
    #[default]
    Uniform,
    /// ESRI ASCII grid.
    RasterFile(PathBuf),
}

impl PopulationSpec {
    pub fn load(&self, base: &Path) -> Result<Population, ScenarioError> {
        match self {
            PopulationSpec::Uniform => Ok(Population::Uniform),
            PopulationSpec::RasterFile(path) => {
                let path = base.join(path);
                let text = read(&path)?;
                let raster: Raster = text
                    .parse()
                    .map_err(|e: crate::population::PopulationError| parse_error(&path, e))?;
                Ok(Population::Raster(raster))
            }
        }
    }
}

/// How to build a network: initial region, optional explicit quarterings,
/// then optional population-weighted growth to a target node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub region: RegionSpec,
    #[serde(default)]
    pub population: PopulationSpec,
    #[serde(default)]
    pub subdivide: Vec<FaceId>,
    #[serde(default)]
    pub target_size: Option<usize>,
    /// Defaults to a seed derived from the scenario seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenerateSpec {
    pub fn build(&self, master_seed: u64, base: &Path) -> Result<Network, ScenarioError> {
        let mut net = Network::init_triangulation(&self.region.triangles())?;
        for &f in &self.subdivide {
            net.subdivide_face(f)?;
        }
        if let Some(target) = self.target_size {
            let population = self.population.load(base)?;
            let seed = self.seed.unwrap_or_else(|| seed::derive(master_seed, "generate"));
            net.generate(&population, target, seed)?;
        }
        let report = net.validate();
        if !report.is_ok() {
            return Err(ScenarioError::Invalid(report));
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    /// Path to a network JSON document.
    File(PathBuf),
    Generate(GenerateSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatesKeyword {
    Optimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRate {
    pub uniform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawRates")]
pub enum RatesSpec {
    Keyword(RatesKeyword),
    Uniform(UniformRate),
    /// Rate per cycle id; absent cycles get zero.
    Fixed(BTreeMap<CycleId, f64>),
}

// untagged enums cannot parse integer map keys, so the map arrives as strings
#[derive(Deserialize)]
#[serde(untagged)]
enum RawRates {
    Keyword(RatesKeyword),
    Uniform(UniformRate),
    Fixed(BTreeMap<String, f64>),
}

impl TryFrom<RawRates> for RatesSpec {
    type Error = String;

    fn try_from(raw: RawRates) -> Result<Self, String> {
        Ok(match raw {
            RawRates::Keyword(k) => RatesSpec::Keyword(k),
            RawRates::Uniform(u) => RatesSpec::Uniform(u),
            RawRates::Fixed(map) => RatesSpec::Fixed(
                map.into_iter()
                    .map(|(k, v)| k.trim().parse().map(|id| (CycleId(id), v)).map_err(|_| format!("bad cycle id {k:?}")))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }
}

impl Default for RatesSpec {
    fn default() -> Self {
        RatesSpec::Keyword(RatesKeyword::Optimize)
    }
}

fn default_scheme() -> Scheme {
    Scheme::Mixed
}

fn default_ferries() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkSource,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub demands: DemandMatrix,
    #[serde(default)]
    pub rates: RatesSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    #[serde(default)]
    pub drain: f64,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default)]
    pub detection: Detection,
    #[serde(default = "default_ferries")]
    pub ferries_per_cycle: u32,
    #[serde(default)]
    pub rate_policy: RatePolicy,
    #[serde(default)]
    pub idle_rate: Option<f64>,
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub network: Network,
    pub plan: CyclePlan,
    pub solution: RateSolution,
    pub metrics: Metrics,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse { what: "scenario".into(), message: e.to_string() })
    }

    /// Reads a scenario file; also returns the directory paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ScenarioError> {
        let text = read(path)?;
        let scenario = Self::from_json(&text).map_err(|e| match e {
            ScenarioError::Parse { message, .. } => ScenarioError::Parse { what: path.display().to_string(), message },
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((scenario, base))
    }

    pub fn network(&self, base: &Path) -> Result<Network, ScenarioError> {
        match &self.network {
            NetworkSource::File(path) => {
                let path = base.join(path);
                let text = read(&path)?;
                Network::from_json(&text).map_err(|e| parse_error(&path, e))
            }
            NetworkSource::Generate(spec) => spec.build(self.seed, base),
        }
    }

    /// Rates for `plan`: optimized over the demands, or the fixed ones after
    /// checking stability.
    pub fn rates(&self, net: &Network, plan: &CyclePlan) -> Result<RateSolution, ScenarioError> {
        let router = Router::from_plan(net, plan, &DamageSet::none());
        let analysis = queueing::analyze(&router, plan, &self.demands)?;
        let ids = plan.cycles().iter().map(|c| c.id);
        let fixed = |mu: BTreeMap<CycleId, f64>| {
            RateSolution::fixed(mu, &analysis.flows, &analysis.weights).map_err(|e| match e {
                QueueError::Unstable { server: Some((cycle, slot)), lambda, mu } => {
                    ScenarioError::Simulate(SimError::UnstableConfig { cycle, slot, lambda, mu })
                }
                other => other.into(),
            })
        };
        match &self.rates {
            RatesSpec::Keyword(RatesKeyword::Optimize) if self.demands.is_empty() => {
                fixed(ids.map(|c| (c, 0.0)).collect())
            }
            RatesSpec::Keyword(RatesKeyword::Optimize) => {
                Ok(queueing::optimize_rates(&analysis.flows, &analysis.weights, ids)?)
            }
            RatesSpec::Uniform(u) => fixed(ids.map(|c| (c, u.uniform)).collect()),
            RatesSpec::Fixed(map) => fixed(map.clone()),
        }
    }

    pub fn sim_config(&self, rates: &RateSolution) -> SimConfig {
        SimConfig {
            mode: self.mode,
            seed: self.seed,
            horizon: self.horizon,
            drain: self.drain,
            demands: self.demands.clone(),
            rates: rates.mu.clone(),
            events: self.events.clone(),
            detection: self.detection,
            ferries_per_cycle: self.ferries_per_cycle,
            rate_policy: self.rate_policy,
            idle_rate: self.idle_rate,
        }
    }

    /// Copy with the seed of replication `index`; replication 0 keeps the
    /// scenario seed.
    pub fn replication(&self, index: u32) -> Self {
        let mut out = self.clone();
        if index > 0 {
            out.seed = seed::derive(self.seed, &format!("replication-{index}"));
        }
        out
    }

    pub fn run(&self, base: &Path) -> Result<PipelineOutput, ScenarioError> {
        let network = self.network(base)?;
        let plan = assign_cycles(&network, self.scheme)?;
        let solution = self.rates(&network, &plan)?;
        let metrics = sim::run(&network, &plan, self.sim_config(&solution))?;
        Ok(PipelineOutput { network, plan, solution, metrics })
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| ScenarioError::Read { path: path.to_path_buf(), message: e.to_string() })
}

fn parse_error(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Parse { what: path.display().to_string(), message: e.to_string() }
}

/// Directory holding the bundled scenarios.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
