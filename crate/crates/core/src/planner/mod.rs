//! Footprint-based traversability costs and an RRT* planner over a [`RiskGrid`].

mod rrt;

use serde::{Deserialize, Serialize};

use crate::geometry::PoseSE2;
use crate::map::RiskGrid;
use crate::{Error, Result};

pub use rrt::{rrt_star, rrt_star_explore, PlanOutcome, PlanStats};

/// Full robot size in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotDims {
    pub length: f64,
    pub width: f64,
}

impl Default for RobotDims {
    fn default() -> Self {
        Self { length: 0.5, width: 0.35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub w1: f64,
    pub w2: f64,
    pub kappa_b: f64,
    pub max_iters: usize,
    /// Steer step δ, metres.
    pub step: f64,
    pub rewire_radius: f64,
    pub goal_tolerance: f64,
    pub validity_threshold: f64,
    pub seed: u64,
    pub goal_bias: f64,
    /// Metres per radian in the nearest-neighbour metric.
    pub heading_weight: f64,
    pub robot: RobotDims,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            w1: 2.0,
            w2: 1.0,
            kappa_b: 3.0,
            max_iters: 5000,
            step: 0.5,
            rewire_radius: 1.5,
            goal_tolerance: 0.3,
            validity_threshold: 0.25,
            seed: 0,
            goal_bias: 0.05,
            heading_weight: 0.5,
            robot: RobotDims::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("w1", self.w1),
            ("w2", self.w2),
            ("kappa_b", self.kappa_b),
            ("step", self.step),
            ("rewire_radius", self.rewire_radius),
            ("goal_tolerance", self.goal_tolerance),
            ("robot.length", self.robot.length),
            ("robot.width", self.robot.width),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("planner {name} must be positive")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::validation("planner max_iters must be positive"));
        }
        if self.goal_tolerance >= self.rewire_radius {
            return Err(Error::validation("goal tolerance must be smaller than the rewire radius"));
        }
        if !self.validity_threshold.is_finite() {
            return Err(Error::validation("validity threshold must be finite"));
        }
        if !(0.0..1.0).contains(&self.goal_bias) || !(self.heading_weight >= 0.0) {
            return Err(Error::validation("goal bias must lie in [0, 1) and heading weight be non-negative"));
        }
        Ok(())
    }
}

/// Grid cells whose centres lie in the oriented rectangle of half the robot's
/// size centred at the pose; the containing cell if none do.
pub fn footprint_cells(pose: &PoseSE2, dims: &RobotDims, resolution: f64, origin: [f64; 2]) -> Vec<(i64, i64)> {
    const EPS: f64 = 1e-9;
    let (hx, hy) = (dims.length / 4.0, dims.width / 4.0);
    let (s, c) = pose.psi.sin_cos();
    let ex = c.abs() * hx + s.abs() * hy;
    let ey = s.abs() * hx + c.abs() * hy;
    let i0 = ((pose.x - ex - origin[0]) / resolution - 0.5).floor() as i64;
    let i1 = ((pose.x + ex - origin[0]) / resolution - 0.5).ceil() as i64;
    let j0 = ((pose.y - ey - origin[1]) / resolution - 0.5).floor() as i64;
    let j1 = ((pose.y + ey - origin[1]) / resolution - 0.5).ceil() as i64;
    let mut cells = Vec::new();
    for j in j0..=j1 {
        let dy = origin[1] + (j as f64 + 0.5) * resolution - pose.y;
        for i in i0..=i1 {
            let dx = origin[0] + (i as f64 + 0.5) * resolution - pose.x;
            let lx = c * dx + s * dy;
            let ly = -s * dx + c * dy;
            if lx.abs() <= hx + EPS && ly.abs() <= hy + EPS {
                cells.push((i, j));
            }
        }
    }
    if cells.is_empty() {
        cells.push((
            ((pose.x - origin[0]) / resolution).floor() as i64,
            ((pose.y - origin[1]) / resolution).floor() as i64,
        ));
    }
    cells
}

/// Mean CVaR and mean observation count over the footprint.
pub fn footprint_stats(grid: &RiskGrid, pose: &PoseSE2, dims: &RobotDims) -> (f64, f64) {
    let cells = footprint_cells(pose, dims, grid.resolution, grid.origin);
    let (mut cv, mut n) = (0.0, 0.0);
    for &(i, j) in &cells {
        let c = grid.lookup(i, j);
        cv += c.cvar;
        n += c.count as f64;
    }
    let k = cells.len() as f64;
    (cv / k, n / k)
}

pub fn footprint_cvar(grid: &RiskGrid, pose: &PoseSE2, dims: &RobotDims) -> f64 {
    footprint_stats(grid, pose, dims).0
}

pub fn footprint_count(grid: &RiskGrid, pose: &PoseSE2, dims: &RobotDims) -> f64 {
    footprint_stats(grid, pose, dims).1
}

pub fn is_valid(pose: &PoseSE2, grid: &RiskGrid, params: &PlannerParams) -> bool {
    footprint_cvar(grid, pose, &params.robot) >= params.validity_threshold
}

/// Per-pose cost `exp(−w1·cvar) + w2·exp(κb − n)`.
pub fn pose_cost(grid: &RiskGrid, pose: &PoseSE2, params: &PlannerParams) -> f64 {
    let (cvar, n) = footprint_stats(grid, pose, &params.robot);
    (-params.w1 * cvar).exp() + params.w2 * (params.kappa_b - n).exp()
}

/// Heading of the straight edge a → b; b's own heading if they coincide.
pub(crate) fn edge_heading(a: &PoseSE2, b: &PoseSE2) -> f64 {
    if a.dist_xy(b) < 1e-12 {
        b.psi
    } else {
        (b.y - a.y).atan2(b.x - a.x)
    }
}

/// Number of sub-steps for an edge: at most resolution/2 apart, and a
/// multiple of the number of δ-pieces so densified path points are checked poses.
pub(crate) fn edge_steps(len: f64, resolution: f64, step: f64) -> (usize, usize) {
    let pieces = ((len / step).ceil() as usize).max(1);
    let fine = ((len / (0.5 * resolution)).ceil() as usize).max(1);
    (pieces, fine.div_ceil(pieces) * pieces)
}

/// Sub-poses `0..=m` along the edge, all with the edge heading.
pub(crate) fn edge_poses(a: &PoseSE2, b: &PoseSE2, resolution: f64, step: f64) -> impl Iterator<Item = PoseSE2> {
    let psi = edge_heading(a, b);
    let (_, m) = edge_steps(a.dist_xy(b), resolution, step);
    let (ax, ay, dx, dy) = (a.x, a.y, b.x - a.x, b.y - a.y);
    (0..=m).map(move |i| {
        let t = i as f64 / m as f64;
        PoseSE2 { x: ax + t * dx, y: ay + t * dy, psi }
    })
}

/// Mean sub-pose cost times edge length.
pub fn edge_cost(grid: &RiskGrid, n: &PoseSE2, n2: &PoseSE2, params: &PlannerParams) -> f64 {
    let len = n.dist_xy(n2);
    if len == 0.0 {
        return 0.0;
    }
    let (mut sum, mut k) = (0.0, 0usize);
    for p in edge_poses(n, n2, grid.resolution, params.step) {
        sum += pose_cost(grid, &p, params);
        k += 1;
    }
    sum / k as f64 * len
}

/// Cost of the edge if every sub-pose is in bounds and valid.
pub(crate) fn checked_edge_cost(
    grid: &RiskGrid,
    n: &PoseSE2,
    n2: &PoseSE2,
    params: &PlannerParams,
    bounds: &crate::geometry::Bounds,
) -> Option<f64> {
    let len = n.dist_xy(n2);
    let (mut sum, mut k) = (0.0, 0usize);
    for p in edge_poses(n, n2, grid.resolution, params.step) {
        if !bounds.contains(p.x, p.y) {
            return None;
        }
        let (cvar, cnt) = footprint_stats(grid, &p, &params.robot);
        if cvar < params.validity_threshold {
            return None;
        }
        sum += (-params.w1 * cvar).exp() + params.w2 * (params.kappa_b - cnt).exp();
        k += 1;
    }
    Some(if len == 0.0 { 0.0 } else { sum / k as f64 * len })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub poses: Vec<PoseSE2>,
    pub cost: f64,
}

impl Path {
    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].dist_xy(&w[1])).sum()
    }
}
