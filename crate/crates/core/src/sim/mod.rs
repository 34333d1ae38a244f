//! Deterministic 2D simulator: synthetic worlds, a camera stub, and the
//! episode loop that ties segmentation, the oracle, mapping, planning and
//! control together.

mod episode;
mod render;
mod suite;
mod world;

use serde::{Deserialize, Serialize};

use crate::controller::MppiParams;
use crate::map::MapPrior;
use crate::oracle::{Camera, LatencyModel, RobotDescription};
use crate::planner::{PlannerParams, RobotDims};
use crate::segmentation::SlicParams;
use crate::{Error, Result};

pub use episode::{run_episode, run_episode_with, speed_by_count, Episode, EpisodeResult, Event, Mode, Outcome, TickRecord};
pub use render::render_view;
pub use suite::{run_suite, SuiteRow, SuiteSummary};
pub use world::{Circle, Shape, TerrainClass, World, WorldSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub resolution: f64,
    pub prior: MapPrior,
    /// Vertical band of voxel centres compressed into the risk grid.
    pub z_band: [f64; 2],
    pub risk_level: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            // a tight b0 lets a cell become trustworthy after a handful of samples
            prior: MapPrior { b0: 0.01, ..MapPrior::default() },
            z_band: [-0.5, 0.5],
            risk_level: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timing {
    pub control_rate: f64,
    pub min_query_interval: f64,
    /// Query anyway after this long, frontier or not.
    pub query_period: f64,
    /// Query when the path's unexplored end is closer than this.
    pub frontier_margin: f64,
    pub replan_period: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self { control_rate: 10.0, min_query_interval: 2.0, query_period: 4.0, frontier_margin: 3.0, replan_period: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_time: f64,
    /// Give up after this long without either getting `stall_progress`
    /// closer to the goal or moving `stall_radius` from the last progress point.
    pub stall_time: f64,
    pub stall_progress: f64,
    pub stall_radius: f64,
    pub goal_tolerance: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_time: 240.0, stall_time: 40.0, stall_progress: 0.25, stall_radius: 1.0, goal_tolerance: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub map: MapConfig,
    pub planner: PlannerParams,
    pub mppi: MppiParams,
    pub camera: Camera,
    pub slic: SlicParams,
    pub robot: RobotDescription,
    pub latency: LatencyModel,
    pub oracle_prior_mean: f64,
    /// Per-channel uniform pixel noise amplitude of the rendered view.
    pub render_noise: u8,
    pub timing: Timing,
    pub limits: Limits,
    /// Turn rate used to look around when the path ends at the explored frontier.
    pub scan_rate: f64,
    /// Distance to the path end at which tracking switches to scanning.
    pub scan_distance: f64,
    /// Partial paths avoid ending this close to where a full scan found nothing.
    pub dead_end_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            planner: PlannerParams { max_iters: 1500, ..PlannerParams::default() },
            mppi: MppiParams { v_ref: 0.4, w1: 3.0, ..MppiParams::default() },
            camera: Camera::default(),
            slic: SlicParams::default(),
            robot: RobotDescription::default(),
            latency: LatencyModel::default(),
            oracle_prior_mean: 0.5,
            render_noise: 6,
            timing: Timing::default(),
            limits: Limits::default(),
            scan_rate: 0.6,
            scan_distance: 0.4,
            dead_end_radius: 1.5,
        }
    }
}

impl SimConfig {
    /// Robot size shared by planner and controller.
    pub fn dims(&self) -> RobotDims {
        RobotDims { length: self.robot.length, width: self.robot.width }
    }

    pub fn validate(&self) -> Result<()> {
        self.map.prior.validate()?;
        if !(self.map.resolution > 0.0) || !(self.map.z_band[0] < self.map.z_band[1]) {
            return Err(Error::validation("map resolution must be positive and z band non-empty"));
        }
        if !(self.map.risk_level > 0.0 && self.map.risk_level < 1.0) {
            return Err(Error::validation("risk level must lie in (0, 1)"));
        }
        self.planner.validate()?;
        self.mppi.validate()?;
        self.camera.validate()?;
        self.robot.validate()?;
        self.latency.validate()?;
        let t = &self.timing;
        for (name, v) in [
            ("control_rate", t.control_rate),
            ("query_period", t.query_period),
            ("replan_period", t.replan_period),
            ("max_time", self.limits.max_time),
            ("stall_time", self.limits.stall_time),
            ("goal_tolerance", self.limits.goal_tolerance),
            ("stall_radius", self.limits.stall_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !(t.min_query_interval >= 0.0 && t.frontier_margin >= 0.0) {
            return Err(Error::validation("query interval and frontier margin must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.oracle_prior_mean) {
            return Err(Error::validation("oracle prior mean must lie in [0, 1]"));
        }
        Ok(())
    }
}
