use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{checked_edge_cost, edge_heading, edge_steps, is_valid, Path, PlannerParams};
use crate::geometry::{normalize_angle, Bounds, PoseSE2};
use crate::map::RiskGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub nodes: usize,
    pub rewires: usize,
    /// Rewires that failed to lower the node's cost-to-come; always zero.
    pub rewire_violations: usize,
    pub goal_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub path: Path,
    /// False when no node reached the goal and `path` ends at the node nearest to it.
    pub reached_goal: bool,
    /// Best goal-path cost after each iteration (infinite until the goal is reached).
    pub best_cost_series: Vec<f64>,
    pub stats: PlanStats,
}

struct Node {
    pose: PoseSE2,
    parent: Option<usize>,
    cost: f64,
    children: Vec<usize>,
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn metric(&self, i: usize, q: &PoseSE2, heading_weight: f64) -> f64 {
        let p = &self.nodes[i].pose;
        p.dist_xy(q) + heading_weight * normalize_angle(p.psi - q.psi).abs()
    }

    fn nearest(&self, q: &PoseSE2, heading_weight: f64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.nodes.len() {
            let d = self.metric(i, q, heading_weight);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn near(&self, q: &PoseSE2, r: f64) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].pose.dist_xy(q) <= r).collect()
    }

    /// Moves `i` under `parent`, shifting the cost of its whole subtree.
    fn reparent(&mut self, i: usize, parent: usize, cost: f64, psi: f64) {
        if let Some(old) = self.nodes[i].parent {
            self.nodes[old].children.retain(|&c| c != i);
        }
        self.nodes[parent].children.push(i);
        let delta = cost - self.nodes[i].cost;
        self.nodes[i].parent = Some(parent);
        self.nodes[i].pose.psi = psi;
        let mut stack = vec![i];
        while let Some(k) = stack.pop() {
            self.nodes[k].cost += delta;
            stack.extend(self.nodes[k].children.iter().copied());
        }
    }

    fn branch(&self, mut i: usize) -> Vec<PoseSE2> {
        let mut rev = vec![self.nodes[i].pose];
        while let Some(p) = self.nodes[i].parent {
            rev.push(self.nodes[p].pose);
            i = p;
        }
        rev.reverse();
        rev
    }
}

/// Splits each edge into δ-pieces; the points coincide with checked sub-poses.
fn densify(nodes: &[PoseSE2], resolution: f64, step: f64) -> Vec<PoseSE2> {
    let mut out = vec![nodes[0]];
    for w in nodes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let len = a.dist_xy(b);
        if len == 0.0 {
            continue;
        }
        let (pieces, _) = edge_steps(len, resolution, step);
        let psi = edge_heading(a, b);
        for i in 1..=pieces {
            let t = i as f64 / pieces as f64;
            out.push(PoseSE2 { x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y), psi });
        }
    }
    out
}

/// Anytime RRT* with CVaR-based validity in place of collision checking.
pub fn rrt_star(
    start: &PoseSE2,
    goal: &PoseSE2,
    bounds: &Bounds,
    grid: &RiskGrid,
    params: &PlannerParams,
) -> Result<PlanOutcome> {
    rrt_star_explore(start, goal, bounds, grid, params, &[], 0.0)
}

/// [`rrt_star`] whose fallback path (goal not reached) avoids ending within
/// `radius` of any point in `dead_ends`, unless every node does.
pub fn rrt_star_explore(
    start: &PoseSE2,
    goal: &PoseSE2,
    bounds: &Bounds,
    grid: &RiskGrid,
    params: &PlannerParams,
    dead_ends: &[[f64; 2]],
    radius: f64,
) -> Result<PlanOutcome> {
    params.validate()?;
    if !bounds.contains(start.x, start.y) || !bounds.contains(goal.x, goal.y) {
        return Err(Error::Planning("start and goal must lie inside the planning bounds".into()));
    }
    if !is_valid(start, grid, params) {
        return Err(Error::Planning(format!("start pose ({:.2}, {:.2}) is not traversable", start.x, start.y)));
    }
    if start.dist_xy(goal) <= params.goal_tolerance {
        return Ok(PlanOutcome {
            path: Path { poses: vec![*start], cost: 0.0 },
            reached_goal: true,
            best_cost_series: Vec::new(),
            stats: PlanStats { nodes: 1, goal_nodes: 1, ..PlanStats::default() },
        });
    }

    // cheapest possible cost per metre on this grid, for pruning
    let (max_cvar, max_count) = grid
        .cells()
        .iter()
        .fold((grid.prior_cvar, 0u64), |(c, n), cell| (c.max(cell.cvar), n.max(cell.count)));
    let min_rate = (-params.w1 * max_cvar).exp() + params.w2 * (params.kappa_b - max_count as f64).exp();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut tree = Tree { nodes: vec![Node { pose: *start, parent: None, cost: 0.0, children: Vec::new() }] };
    let mut goal_nodes: Vec<usize> = Vec::new();
    let mut stats = PlanStats::default();
    let mut series = Vec::with_capacity(params.max_iters);
    let best_goal = |tree: &Tree, goal_nodes: &[usize]| {
        goal_nodes.iter().copied().fold(None::<(f64, usize)>, |acc, g| {
            let c = tree.nodes[g].cost;
            match acc {
                Some((bc, _)) if bc <= c => acc,
                _ => Some((c, g)),
            }
        })
    };

    for _ in 0..params.max_iters {
        stats.iterations += 1;
        let sample = if rng.random::<f64>() < params.goal_bias {
            *goal
        } else {
            PoseSE2::new(
                rng.random_range(bounds.min_x..bounds.max_x),
                rng.random_range(bounds.min_y..bounds.max_y),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        };
        let near_i = tree.nearest(&sample, params.heading_weight);
        let from = tree.nodes[near_i].pose;
        let d = from.dist_xy(&sample);
        // headings are free at nodes, so a pure rotation adds nothing to the tree
        if d < 1e-9 {
            series.push(best_goal(&tree, &goal_nodes).map_or(f64::INFINITY, |b| b.0));
            continue;
        }
        let t = (params.step / d).min(1.0);
        let target = PoseSE2 { x: from.x + t * (sample.x - from.x), y: from.y + t * (sample.y - from.y), psi: 0.0 };

        let mut candidates = tree.near(&target, params.rewire_radius);
        if !candidates.contains(&near_i) {
            candidates.push(near_i);
            candidates.sort_unstable();
        }
        // most promising parents first so the bound prunes early
        let mut order: Vec<(f64, usize)> = candidates
            .iter()
            .map(|&c| (tree.nodes[c].cost + tree.nodes[c].pose.dist_xy(&target) * min_rate, c))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best: Option<(f64, usize, f64)> = None;
        for &(_, c) in &order {
            let p = tree.nodes[c].pose;
            let len = p.dist_xy(&target);
            if len < 1e-9 || best.is_some_and(|b| tree.nodes[c].cost + len * min_rate >= b.0) {
                continue;
            }
            let psi = edge_heading(&p, &target);
            let end = PoseSE2 { psi, ..target };
            if let Some(e) = checked_edge_cost(grid, &p, &end, params, bounds) {
                let total = tree.nodes[c].cost + e;
                if best.is_none_or(|b| total < b.0) {
                    best = Some((total, c, psi));
                }
            }
        }
        let Some((cost, parent, psi)) = best else {
            series.push(best_goal(&tree, &goal_nodes).map_or(f64::INFINITY, |b| b.0));
            continue;
        };
        let new_i = tree.nodes.len();
        let new_pose = PoseSE2 { psi, ..target };
        tree.nodes.push(Node { pose: new_pose, parent: Some(parent), cost, children: Vec::new() });
        tree.nodes[parent].children.push(new_i);

        for &q in &candidates {
            if q == parent {
                continue;
            }
            let qp = tree.nodes[q].pose;
            let len = qp.dist_xy(&new_pose);
            if len < 1e-9 || tree.nodes[new_i].cost + len * min_rate >= tree.nodes[q].cost - 1e-12 {
                continue;
            }
            if is_ancestor(&tree, q, new_i) {
                continue;
            }
            let qpsi = edge_heading(&new_pose, &qp);
            let end = PoseSE2 { psi: qpsi, ..qp };
            let Some(e) = checked_edge_cost(grid, &new_pose, &end, params, bounds) else { continue };
            let through = tree.nodes[new_i].cost + e;
            let old = tree.nodes[q].cost;
            if through < old - 1e-12 {
                tree.reparent(q, new_i, through, qpsi);
                stats.rewires += 1;
                if tree.nodes[q].cost >= old {
                    stats.rewire_violations += 1;
                }
                debug_assert!(tree.nodes[q].cost < old);
            }
        }

        if new_pose.dist_xy(goal) <= params.goal_tolerance {
            goal_nodes.push(new_i);
        }
        series.push(best_goal(&tree, &goal_nodes).map_or(f64::INFINITY, |b| b.0));
    }

    stats.nodes = tree.nodes.len();
    stats.goal_nodes = goal_nodes.len();
    let (end, reached) = match best_goal(&tree, &goal_nodes) {
        Some((_, g)) => (g, true),
        None => {
            let blocked = |p: &PoseSE2| dead_ends.iter().any(|d| (p.x - d[0]).hypot(p.y - d[1]) < radius);
            let mut best = (f64::INFINITY, 0);
            let mut fallback = (f64::INFINITY, 0);
            for (i, n) in tree.nodes.iter().enumerate() {
                let d = n.pose.dist_xy(goal);
                if d < fallback.0 {
                    fallback = (d, i);
                }
                if d < best.0 && !blocked(&n.pose) {
                    best = (d, i);
                }
            }
            (if best.0.is_finite() { best.1 } else { fallback.1 }, false)
        }
    };
    let poses = densify(&tree.branch(end), grid.resolution, params.step);
    Ok(PlanOutcome {
        path: Path { poses, cost: tree.nodes[end].cost },
        reached_goal: reached,
        best_cost_series: series,
        stats,
    })
}

/// True if `a` lies on the root path of `b`.
fn is_ancestor(tree: &Tree, a: usize, mut b: usize) -> bool {
    while let Some(p) = tree.nodes[b].parent {
        if p == a {
            return true;
        }
        b = p;
    }
    false
}
