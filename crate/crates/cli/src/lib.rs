//! `travnav` command-line front end.
//!
//! Exit codes: 0 on success, 1 for bad input (arguments, config, files that
//! fail validation), 2 for runtime failures (planning, oracle, i/o).

mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use travnav_core::geometry::{Bounds, PoseSE2};
use travnav_core::map::{compress_pillars, GridExtent, MapSnapshot, RiskGrid, VoxelMap};
use travnav_core::oracle::build_prompt;
use travnav_core::planner::rrt_star;
use travnav_core::risk::{benchmark, RiskEvaluator, RiskModel};
use travnav_core::segmentation::{number_masks, read_rgb, slic, write_rgb, SlicParams};
use travnav_core::sim::{run_episode, run_episode_with, run_suite, World};
use travnav_llm::LlmClient;

pub use config::{Backend, CliConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files.
    Usage(String),
    Core(travnav_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(travnav_core::Error::Json(_) | travnav_core::Error::Parse | travnav_core::Error::Length { .. }) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<travnav_core::Error> for CliError {
    fn from(e: travnav_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "travnav", version, about = "Risk-aware traversability navigation in simulation")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML config file (JSON if the name ends in .json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write result.json and trace.jsonl.
    Run(RunArgs),
    /// Run episodes over several worlds with the mock oracle.
    Suite(SuiteArgs),
    /// Plan on a saved map snapshot.
    Plan(PlanArgs),
    /// Segment an image into numbered regions and write the oracle prompt.
    Segment(SegmentArgs),
    /// Accuracy and speed of the quantile table.
    BenchRisk(BenchArgs),
    /// Run a mock episode and save its final map.
    ExportMap(ExportArgs),
    /// Validate a map snapshot and write its risk grid.
    ImportMap(ImportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Canonical world name or path to a world JSON file.
    #[arg(long)]
    pub world: String,
    /// Overrides the config's backend.
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Comma-separated world names or paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub worlds: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Map snapshot JSON.
    #[arg(long)]
    pub map: PathBuf,
    /// `x,y,psi`
    #[arg(long, value_parser = parse_floats::<3>, allow_hyphen_values = true)]
    pub start: [f64; 3],
    /// `x,y`
    #[arg(long, value_parser = parse_floats::<2>, allow_hyphen_values = true)]
    pub goal: [f64; 2],
    /// `min_x,min_y,max_x,max_y`; defaults to the observed area around start and goal.
    #[arg(long, value_parser = parse_floats::<4>, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 4]>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub compactness: Option<f64>,
    #[arg(long)]
    pub iters: Option<u32>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub evals: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub world: String,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub map: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if !o.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

/// Parse `args`, run, print any error to stderr and map it to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => {
            require_file(p)?;
            CliConfig::load(p)?
        }
        None => CliConfig::default(),
    };
    match &cli.command {
        Command::Run(a) => cmd_run(cli, &cfg, a),
        Command::Suite(a) => cmd_suite(cli, &cfg, a),
        Command::Plan(a) => cmd_plan(cli, &cfg, a),
        Command::Segment(a) => cmd_segment(cli, &cfg, a),
        Command::BenchRisk(a) => cmd_bench(cli, a),
        Command::ExportMap(a) => cmd_export(cli, &cfg, a),
        Command::ImportMap(a) => cmd_import(cli, &cfg, a),
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", p.display())))
    }
}

fn load_world(name: &str) -> CliResult<World> {
    if World::canonical_names().all(|n| n != name) {
        require_file(Path::new(name))?;
    }
    Ok(World::resolve(name)?)
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn print_out(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(v: &T) -> CliResult<()> {
    print_out(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn cmd_run(cli: &Cli, cfg: &CliConfig, a: &RunArgs) -> CliResult<()> {
    let world = Arc::new(load_world(&a.world)?);
    std::fs::create_dir_all(&cli.out)?;
    let mut ep = match a.backend.unwrap_or(cfg.backend) {
        Backend::Mock => run_episode(&world, &cfg.sim, cli.seed)?,
        Backend::Llm => {
            let mut client = LlmClient::new(cfg.llm.clone())?;
            run_episode_with(&world, &cfg.sim, cli.seed, &mut client)?
        }
    };
    ep.write_trace(&cli.out.join("trace.jsonl"))?;
    ep.result.trace = Some("trace.jsonl".into());
    write_json(&cli.out.join("result.json"), &ep.result)?;
    print_json(&ep.result)
}

fn cmd_suite(cli: &Cli, cfg: &CliConfig, a: &SuiteArgs) -> CliResult<()> {
    if a.backend.unwrap_or(cfg.backend) == Backend::Llm {
        return Err(CliError::Usage("suite runs only with the mock backend".into()));
    }
    if a.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let worlds = a.worlds.iter().map(|w| load_world(w).map(Arc::new)).collect::<CliResult<Vec<_>>>()?;
    let traces = cli.out.join("traces");
    std::fs::create_dir_all(&traces)?;
    let summary = run_suite(&worlds, &cfg.sim, a.episodes, cli.seed, Some(&traces))?;
    summary.write(&cli.out)?;
    print_out(&summary.table())
}

/// Extent of the observed voxels, grown to include `extra` points and padded by `pad` metres.
fn observed_extent(map: &VoxelMap, extra: &[[f64; 2]], pad: f64) -> (GridExtent, Bounds) {
    let r = map.resolution();
    let o = map.origin();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (k, _) in map.iter() {
        let c = map.center_of(*k);
        x0 = x0.min(c[0] - r / 2.0);
        y0 = y0.min(c[1] - r / 2.0);
        x1 = x1.max(c[0] + r / 2.0);
        y1 = y1.max(c[1] + r / 2.0);
    }
    for p in extra {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (o[0], o[1], o[0] + r, o[1] + r);
    }
    let b = Bounds::new(x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    (GridExtent::covering(map, b.min_x, b.min_y, b.max_x, b.max_y), b)
}

fn risk_model(cfg: &CliConfig) -> CliResult<RiskModel> {
    Ok(RiskModel::new(RiskEvaluator::default(), cfg.sim.map.risk_level)?)
}

fn grid_csv(grid: &RiskGrid) -> String {
    let mut s = String::from("cx,cy,x,y,cvar,count,observed\n");
    for cy in 0..grid.ny {
        for cx in 0..grid.nx {
            let c = grid.get(cx, cy);
            let [x, y] = grid.cell_center(cx, cy);
            s.push_str(&format!("{cx},{cy},{x},{y},{},{},{}\n", c.cvar, c.count, c.observed));
        }
    }
    s
}

fn read_map(path: &Path) -> CliResult<VoxelMap> {
    require_file(path)?;
    Ok(MapSnapshot::read(path)?.into_map()?)
}

fn cmd_plan(cli: &Cli, cfg: &CliConfig, a: &PlanArgs) -> CliResult<()> {
    let map = read_map(&a.map)?;
    let start = PoseSE2::new(a.start[0], a.start[1], a.start[2]);
    let goal_xy = a.goal;
    let (extent, bounds) = match a.bounds {
        Some([x0, y0, x1, y1]) => {
            if !(x0 < x1 && y0 < y1) {
                return Err(CliError::Usage("bounds must satisfy min < max".into()));
            }
            (GridExtent::covering(&map, x0, y0, x1, y1), Bounds::new(x0, y0, x1, y1))
        }
        None => observed_extent(&map, &[[start.x, start.y], goal_xy], 1.0),
    };
    let heading = (goal_xy[1] - start.y).atan2(goal_xy[0] - start.x);
    let goal = PoseSE2::new(goal_xy[0], goal_xy[1], heading);
    let [z0, z1] = cfg.sim.map.z_band;
    let grid = compress_pillars(&map, &risk_model(cfg)?, z0, z1, extent)?;
    let mut params = cfg.sim.planner.clone();
    params.robot = cfg.sim.dims();
    params.seed = cli.seed;
    let outcome = rrt_star(&start, &goal, &bounds, &grid, &params)?;
    std::fs::create_dir_all(&cli.out)?;
    let out = json!({
        "reached_goal": outcome.reached_goal,
        "cost": outcome.path.cost,
        "length": outcome.path.length(),
        "poses": outcome.path.poses,
        "stats": outcome.stats,
        "bounds": [bounds.min_x, bounds.min_y, bounds.max_x, bounds.max_y],
    });
    write_json(&cli.out.join("plan.json"), &out)?;
    let mut csv = String::from("x,y,psi\n");
    for p in &outcome.path.poses {
        csv.push_str(&format!("{},{},{}\n", p.x, p.y, p.psi));
    }
    std::fs::write(cli.out.join("path.csv"), csv)?;
    print_json(&out)
}

fn cmd_segment(cli: &Cli, cfg: &CliConfig, a: &SegmentArgs) -> CliResult<()> {
    require_file(&a.image)?;
    let img = read_rgb(&a.image)?;
    let d = cfg.sim.slic;
    let params = SlicParams {
        k: a.k.unwrap_or(d.k),
        compactness: a.compactness.unwrap_or(d.compactness),
        iters: a.iters.unwrap_or(d.iters),
    };
    let labels = slic(&img, &params)?;
    let (annotated, registry) = number_masks(&labels, &img);
    let prompt = build_prompt(&cfg.sim.robot, registry.len() as u32);
    std::fs::create_dir_all(&cli.out)?;
    write_rgb(&cli.out.join("annotated.png"), &annotated)?;
    std::fs::write(cli.out.join("regions.json"), registry.to_json()? + "\n")?;
    std::fs::write(cli.out.join("prompt.txt"), &prompt)?;
    print_json(&json!({ "regions": registry.len(), "width": registry.width, "height": registry.height }))
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> CliResult<()> {
    let b = benchmark(a.evals, cli.seed)?;
    std::fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("bench_risk.json"), &b)?;
    print_json(&b)
}

fn cmd_export(cli: &Cli, cfg: &CliConfig, a: &ExportArgs) -> CliResult<()> {
    let world = Arc::new(load_world(&a.world)?);
    let ep = run_episode(&world, &cfg.sim, cli.seed)?;
    let [w, h] = world.spec.size;
    let extent = GridExtent::covering(&ep.map, 0.0, 0.0, w, h);
    let [z0, z1] = cfg.sim.map.z_band;
    let grid = compress_pillars(&ep.map, &risk_model(cfg)?, z0, z1, extent)?;
    std::fs::create_dir_all(&cli.out)?;
    MapSnapshot::from_map(&ep.map).write(cli.out.join("map.json"))?;
    std::fs::write(cli.out.join("grid.csv"), grid_csv(&grid))?;
    print_json(&map_summary(&ep.map, &grid))
}

fn cmd_import(cli: &Cli, cfg: &CliConfig, a: &ImportArgs) -> CliResult<()> {
    let map = read_map(&a.map)?;
    let (extent, _) = observed_extent(&map, &[], 0.0);
    let [z0, z1] = cfg.sim.map.z_band;
    let grid = compress_pillars(&map, &risk_model(cfg)?, z0, z1, extent)?;
    std::fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("grid.json"), &grid)?;
    std::fs::write(cli.out.join("grid.csv"), grid_csv(&grid))?;
    print_json(&map_summary(&map, &grid))
}

fn map_summary(map: &VoxelMap, grid: &RiskGrid) -> serde_json::Value {
    let observed: Vec<_> = grid.cells().iter().filter(|c| c.observed).collect();
    let min_cvar = observed.iter().map(|c| c.cvar).fold(f64::INFINITY, f64::min);
    json!({
        "voxels": map.len(),
        "revision": map.revision(),
        "resolution": map.resolution(),
        "nx": grid.nx,
        "ny": grid.ny,
        "observed_cells": observed.len(),
        "prior_cvar": grid.prior_cvar,
        "min_cvar": if observed.is_empty() { None } else { Some(min_cvar) },
    })
}
