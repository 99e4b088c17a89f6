//! `msq`: generate MSQ networks, plan ferry cycles, route, optimize rates and simulate.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or malformed files, invalid parameters, failed validation.
    #[error("{0}")]
    Config(String),
    /// Well-formed input that failed while running.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "msq", version, about = "MSQ triangle networks with cyclic message ferries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a network by population-weighted quartering.
    Generate(GenerateArgs),
    /// Assign ferry cycles to a network.
    Plan(PlanArgs),
    /// Route one message between two nodes.
    Route(RouteArgs),
    /// Optimize ferry turnaround rates for a demand matrix.
    Optimize(OptimizeArgs),
    /// Simulate a scenario file.
    Simulate(SimulateArgs),
    /// Run every stage of a scenario and keep all intermediate outputs.
    Pipeline(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Mixed,
    AllClockwise,
}

impl From<SchemeArg> for msq_core::Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Mixed => msq_core::Scheme::Mixed,
            SchemeArg::AllClockwise => msq_core::Scheme::AllClockwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Queue,
    Ferry,
}

impl From<ModeArg> for msq_core::sim::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Queue => msq_core::sim::Mode::Queue,
            ModeArg::Ferry => msq_core::sim::Mode::Ferry,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionArg {
    Triangle,
    Hexagon,
    Strip,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output directory; the main document goes to stdout when omitted.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = RegionArg::Triangle)]
    pub region: RegionArg,
    /// Side length of the initial triangles.
    #[arg(long, default_value_t = 1.0)]
    pub side: f64,
    /// Number of triangles in a strip region.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// ESRI ASCII population grid; uniform density when omitted.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Stop before the node count would exceed this.
    #[arg(long)]
    pub target: Option<usize>,
    /// Faces to quarter explicitly before growth, in order.
    #[arg(long, value_delimiter = ',')]
    pub subdivide: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Mixed)]
    pub scheme: SchemeArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RouteArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Cycle plan; assigned from `--scheme` when omitted.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Mixed)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub source: u32,
    #[arg(long)]
    pub terminal: u32,
    /// Damage document with `removed_edges` and `failed_nodes`.
    #[arg(long)]
    pub damage: Option<PathBuf>,
    /// Seed for the choice among equally short routes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Mixed)]
    pub scheme: SchemeArg,
    /// JSON map from "s,t" to message rate.
    #[arg(long)]
    pub demands: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 1)]
    pub replications: u32,
    /// Worker threads for replications; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub jobs: usize,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Plan(a) => commands::plan(a),
        Command::Route(a) => commands::route(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a, false),
        Command::Pipeline(a) => commands::simulate(a, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
