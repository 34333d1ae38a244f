use std::io::Write;
use std::path::Path as FsPath;
use std::sync::Arc;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_view, SimConfig, World};
use crate::controller::{dynamics_step, ControlInput, Mppi};
use crate::geometry::{Bounds, PoseSE2};
use crate::map::{compress_pillars, GridExtent, RiskGrid, VoxelKey, VoxelMap};
use crate::oracle::{build_prompt, project_regions, MockOracle, Oracle, OracleQuery};
use crate::planner::{footprint_stats, is_valid, rrt_star_explore, Path};
use crate::risk::{RiskEvaluator, RiskModel};
use crate::segmentation::{number_masks, slic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Timeout,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No usable path yet.
    Wait,
    Track,
    /// Turning in place at the end of a partial path.
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    QueryDispatched { query: u32, regions: u32, latency: f64 },
    QueryDropped { query: u32, reason: String },
    Fused { query: u32, dispatched_at: f64, voxels: usize, revision: u64 },
    Planned { plan: u32, reached_goal: bool, cost: f64, poses: usize, nodes: usize },
    PlanFailed { plan: u32, reason: String },
    /// A full scan at the end of a partial path found nothing new.
    DeadEnd { x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub pose: PoseSE2,
    pub input: ControlInput,
    pub mode: Mode,
    pub footprint_count: f64,
    pub footprint_cvar: f64,
    /// Controller diagnostics; absent on ticks without an MPPI step.
    pub best_cost: Option<f64>,
    pub weight_entropy: Option<f64>,
    pub map_revision: u64,
    /// Ground-truth traversability averaged over the footprint.
    pub traversability: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub world: String,
    pub seed: u64,
    pub success: bool,
    pub outcome: Outcome,
    pub elapsed: f64,
    pub distance_travelled: f64,
    pub straight_line: f64,
    pub final_goal_distance: f64,
    pub min_traversability: f64,
    pub queries: u32,
    pub fused: u32,
    pub dropped: u32,
    pub plans: u32,
    /// Trace file name, when one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub result: EpisodeResult,
    pub ticks: Vec<TickRecord>,
    /// Map at the end of the episode.
    pub map: VoxelMap,
}

impl Episode {
    /// One JSON object per tick.
    pub fn write_trace(&self, path: &FsPath) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.ticks {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean commanded speed over ticks whose footprint sample count is below
/// `below` and above `above` respectively. `track_only` drops ticks where the
/// robot was waiting for a path or scanning.
pub fn speed_by_count(ticks: &[TickRecord], below: f64, above: f64, track_only: bool) -> (Option<f64>, Option<f64>) {
    let mean = |f: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = ticks
            .iter()
            .filter(|t| (!track_only || t.mode == Mode::Track) && f(t.footprint_count))
            .map(|t| t.input.v.abs())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    (mean(&|n| n < below), mean(&|n| n > above))
}

struct Pending {
    id: u32,
    dispatched_at: f64,
    arrive_at: f64,
    obs: Vec<(VoxelKey, f64)>,
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag);
    r
}

/// Run one episode in `world` against the ground-truth mock oracle.
pub fn run_episode(world: &Arc<World>, config: &SimConfig, seed: u64) -> Result<Episode> {
    let field: Arc<dyn crate::oracle::TerrainField> = world.clone();
    let mut oracle = MockOracle::new(field, seed ^ 0x6f72_6163_6c65, config.latency.clone()).with_prior_mean(config.oracle_prior_mean);
    run_episode_with(world, config, seed, &mut oracle)
}

/// Run one episode with any oracle. Time is simulated: a reply becomes
/// visible to the map `latency` seconds after its query was dispatched, and
/// the loop keeps planning and controlling meanwhile.
pub fn run_episode_with(world: &World, config: &SimConfig, seed: u64, oracle: &mut dyn Oracle) -> Result<Episode> {
    config.validate()?;
    let mut planner_params = config.planner.clone();
    let mut mppi_params = config.mppi.clone();
    planner_params.robot = config.dims();
    mppi_params.robot = config.dims();
    world.check_start(planner_params.validity_threshold)?;

    let mut map = VoxelMap::new(config.map.resolution, [0.0, 0.0, -config.map.resolution / 2.0], config.map.prior.clone())?;
    let risk = RiskModel::new(RiskEvaluator::default(), config.map.risk_level)?;
    let [w, h] = world.spec.size;
    let extent = GridExtent::covering(&map, 0.0, 0.0, w, h);
    let [z0, z1] = config.map.z_band;
    let mut grid = compress_pillars(&map, &risk, z0, z1, extent)?;
    let bounds = Bounds::new(0.0, 0.0, w, h);
    let goal = world.goal_pose();

    let mut mppi = Mppi::new(mppi_params)?;
    let mut mppi_rng = stream(seed, 1);
    let mut render_rng = stream(seed, 2);

    let dt = 1.0 / config.timing.control_rate;
    let timing = &config.timing;
    let limits = &config.limits;

    let mut state = world.spec.start;
    let mut t = 0.0;
    let mut ticks: Vec<TickRecord> = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut last_dispatch: Option<f64> = None;
    let (mut queries, mut fused, mut dropped, mut plans) = (0u32, 0u32, 0u32, 0u32);
    let mut path: Option<(Path, bool)> = None;
    let mut last_plan_t = f64::NEG_INFINITY;
    let mut planned_revision = u64::MAX;
    let mut force_replan = false;
    let mut travelled = 0.0;
    let dims = config.dims();
    let mut min_trav = world.footprint_traversability(&state, &dims);
    let mut best_goal_dist = state.dist_xy(&goal);
    let mut anchor = state;
    let mut last_progress_t = 0.0;
    let mut scanned = 0.0;
    let mut dead_ends: Vec<[f64; 2]> = Vec::new();

    let outcome = loop {
        let mut events = Vec::new();

        // 1. fuse replies that have arrived by now
        if pending.as_ref().is_some_and(|p| p.arrive_at <= t + 1e-9) {
            let p = pending.take().expect("checked");
            let report = map.insert_observations(&p.obs);
            grid = compress_pillars(&map, &risk, z0, z1, extent)?;
            fused += 1;
            debug!("t={t:.1} fused query {} ({} voxels)", p.id, report.fused);
            events.push(Event::Fused { query: p.id, dispatched_at: p.dispatched_at, voxels: p.obs.len(), revision: map.revision() });
        }

        let goal_dist = state.dist_xy(&goal);
        if goal_dist <= limits.goal_tolerance {
            ticks.push(tick(t, state, ControlInput::default(), Mode::Wait, &grid, &mppi, None, world, events));
            break Outcome::GoalReached;
        }

        // 2. dispatch a query when the explored frontier is close or the timer runs out
        let frontier = match &path {
            Some((p, false)) => remaining_length(&state, &p.poses),
            Some((_, true)) => f64::INFINITY,
            None => 0.0,
        };
        let may_query = pending.is_none() && last_dispatch.is_none_or(|l| t - l >= timing.min_query_interval - 1e-9);
        let want_query = last_dispatch.is_none_or(|l| t - l >= timing.query_period - 1e-9) || frontier <= timing.frontier_margin;
        if may_query && want_query {
            queries += 1;
            let id = queries;
            last_dispatch = Some(t);
            match dispatch(world, config, &state, &map, oracle, &mut render_rng) {
                Ok((obs, regions, latency)) => {
                    events.push(Event::QueryDispatched { query: id, regions, latency });
                    pending = Some(Pending { id, dispatched_at: t, arrive_at: t + latency, obs });
                }
                Err(e) => {
                    dropped += 1;
                    warn!("query {id} dropped: {e}");
                    events.push(Event::QueryDropped { query: id, reason: e.to_string() });
                }
            }
        }

        // 3. replan
        let map_changed = grid.revision != planned_revision;
        let path_broken = map_changed
            && path.as_ref().is_some_and(|(p, _)| {
                let i = nearest_index(&state, &p.poses);
                p.poses[i..].iter().any(|q| !is_valid(q, &grid, &planner_params))
            });
        if force_replan || (map_changed && (path.is_none() || path_broken || t - last_plan_t >= timing.replan_period - 1e-9)) {
            force_replan = false;
            plans += 1;
            planner_params.seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(plans as u64);
            last_plan_t = t;
            planned_revision = grid.revision;
            match rrt_star_explore(&state, &goal, &bounds, &grid, &planner_params, &dead_ends, config.dead_end_radius) {
                Ok(out) => {
                    events.push(Event::Planned {
                        plan: plans,
                        reached_goal: out.reached_goal,
                        cost: out.path.cost,
                        poses: out.path.poses.len(),
                        nodes: out.stats.nodes,
                    });
                    path = Some((out.path, out.reached_goal));
                }
                Err(e) => {
                    debug!("t={t:.1} plan {plans} failed: {e}");
                    events.push(Event::PlanFailed { plan: plans, reason: e.to_string() });
                }
            }
        }

        // 4. control
        let (mode, input, diag) = match &path {
            None => (Mode::Wait, ControlInput::default(), None),
            Some((p, reached)) => {
                let end = p.poses.last().expect("paths are non-empty");
                if !reached && state.dist_xy(end) <= config.scan_distance {
                    (Mode::Scan, ControlInput { v: 0.0, omega: config.scan_rate }, None)
                } else {
                    let (u, d) = mppi.step(&state, &p.poses, &grid, &bounds, &mut mppi_rng)?;
                    (Mode::Track, u, Some(d))
                }
            }
        };
        if mode == Mode::Scan {
            scanned += config.scan_rate.abs() * dt;
            if scanned >= std::f64::consts::TAU {
                let end = path.as_ref().and_then(|(p, _)| p.poses.last().copied()).expect("scanning needs a path");
                dead_ends.push([end.x, end.y]);
                events.push(Event::DeadEnd { x: end.x, y: end.y });
                scanned = 0.0;
                force_replan = true;
            }
        } else {
            scanned = 0.0;
        }
        ticks.push(tick(t, state, input, mode, &grid, &mppi, diag.as_ref(), world, events));

        // 5. advance
        let next = dynamics_step(&state, &input, dt);
        travelled += state.dist_xy(&next);
        state = next;
        t += dt;
        min_trav = min_trav.min(world.footprint_traversability(&state, &dims));

        // 6. termination; exploring away from the goal still counts as progress
        let d = state.dist_xy(&goal);
        if d < best_goal_dist - limits.stall_progress || state.dist_xy(&anchor) >= limits.stall_radius {
            best_goal_dist = best_goal_dist.min(d);
            anchor = state;
            last_progress_t = t;
        }
        if t >= limits.max_time - 1e-9 {
            break Outcome::Timeout;
        }
        if t - last_progress_t >= limits.stall_time {
            break Outcome::Stalled;
        }
    };

    let result = EpisodeResult {
        world: world.spec.name.clone(),
        seed,
        success: outcome == Outcome::GoalReached,
        outcome,
        elapsed: t,
        distance_travelled: travelled,
        straight_line: world.spec.start.dist_xy(&goal),
        final_goal_distance: state.dist_xy(&goal),
        min_traversability: min_trav,
        queries,
        fused,
        dropped,
        plans,
        trace: None,
    };
    info!(
        "{} seed {}: {:?} after {:.1} s, {:.1} m travelled, {} queries",
        result.world, seed, outcome, t, travelled, queries
    );
    Ok(Episode { result, ticks, map })
}

#[allow(clippy::too_many_arguments)]
fn tick(
    t: f64,
    pose: PoseSE2,
    input: ControlInput,
    mode: Mode,
    grid: &RiskGrid,
    mppi: &Mppi,
    diag: Option<&crate::controller::MppiDiagnostics>,
    world: &World,
    events: Vec<Event>,
) -> TickRecord {
    let (cvar, count) = match diag {
        Some(d) => (d.footprint_cvar, d.footprint_count),
        None => footprint_stats(grid, &pose, &mppi.params.robot),
    };
    TickRecord {
        t,
        pose,
        input,
        mode,
        footprint_count: count,
        footprint_cvar: cvar,
        best_cost: diag.map(|d| d.best_cost).filter(|c| c.is_finite()),
        weight_entropy: diag.map(|d| d.weight_entropy),
        map_revision: grid.revision,
        traversability: world.footprint_traversability(&pose, &mppi.params.robot),
        events,
    }
}

fn nearest_index(state: &PoseSE2, poses: &[PoseSE2]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in poses.iter().enumerate() {
        let d = state.dist_xy(p);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn remaining_length(state: &PoseSE2, poses: &[PoseSE2]) -> f64 {
    let i = nearest_index(state, poses);
    state.dist_xy(&poses[i]) + poses[i..].windows(2).map(|w| w[0].dist_xy(&w[1])).sum::<f64>()
}

/// Render, segment, number, ask, and project. Malformed replies are retried once.
fn dispatch(
    world: &World,
    config: &SimConfig,
    pose: &PoseSE2,
    map: &VoxelMap,
    oracle: &mut dyn Oracle,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(VoxelKey, f64)>, u32, f64)> {
    let img = render_view(world, pose, &config.camera, config.render_noise, rng);
    let labels = slic(&img, &config.slic)?;
    let (annotated, _registry) = number_masks(&labels, &img);
    let voxels = project_regions(&labels, &config.camera, pose, map)?;
    let footprints = voxels
        .iter()
        .map(|ks| ks.iter().map(|k| {
            let c = map.center_of(*k);
            [c[0], c[1]]
        }).collect())
        .collect();
    let query = OracleQuery { image: annotated, n_regions: labels.count, prompt: build_prompt(&config.robot, labels.count), footprints };
    let reply = match oracle.query(&query) {
        Err(Error::Parse | Error::Length { .. }) => oracle.query(&query)?,
        other => other?,
    };
    if reply.values.len() != labels.count as usize {
        return Err(Error::Length { expected: labels.count as usize, got: reply.values.len() });
    }
    let mut obs = Vec::new();
    for (ks, v) in voxels.iter().zip(&reply.values) {
        obs.extend(ks.iter().map(|k| (*k, *v)));
    }
    Ok((obs, labels.count, reply.latency))
}
