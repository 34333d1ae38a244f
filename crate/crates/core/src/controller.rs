//! MPPI path tracking with a CVaR reward and count-conditioned speed targets.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Bounds, PoseSE2};
use crate::map::RiskGrid;
use crate::planner::{footprint_stats, RobotDims};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiParams {
    pub horizon: usize,
    pub samples: usize,
    pub dt: f64,
    pub lambda: f64,
    /// Diagonal stage weights on (x, y, ψ).
    pub q: [f64; 3],
    pub q_terminal: [f64; 3],
    /// Diagonal weights on (v, ω).
    pub r: [f64; 2],
    pub w1: f64,
    pub w2: f64,
    pub n0: f64,
    pub noise_std: [f64; 2],
    /// Reference input u_r; also sets the spacing of reference states.
    pub v_ref: f64,
    pub omega_ref: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub robot: RobotDims,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            horizon: 30,
            samples: 512,
            dt: 0.1,
            lambda: 0.5,
            q: [2.0, 2.0, 0.2],
            q_terminal: [10.0, 10.0, 0.5],
            r: [1.0, 0.1],
            w1: 1.0,
            w2: 0.2,
            n0: 1.0,
            noise_std: [0.3, 0.5],
            v_ref: 0.5,
            omega_ref: 0.0,
            v_min: 0.0,
            v_max: 1.0,
            omega_max: 1.5,
            robot: RobotDims::default(),
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.samples == 0 {
            return Err(Error::validation("horizon and samples must be positive"));
        }
        let positive = [
            ("dt", self.dt),
            ("lambda", self.lambda),
            ("w2", self.w2),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("mppi {name} must be positive")));
            }
        }
        let weights = self.q.iter().chain(&self.q_terminal).chain(&self.r).chain(&self.noise_std);
        if weights.copied().any(|w| !(w.is_finite() && w >= 0.0)) || !(self.w1 >= 0.0) {
            return Err(Error::validation("mppi weights must be non-negative"));
        }
        if !(self.v_min <= self.v_max && self.v_min >= -self.v_max) || !(self.v_ref.abs() <= self.v_max) {
            return Err(Error::validation("speed limits are inconsistent"));
        }
        if !self.n0.is_finite() {
            return Err(Error::validation("n0 must be finite"));
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            v: u.v.clamp(self.v_min, self.v_max),
            omega: u.omega.clamp(-self.omega_max, self.omega_max),
        }
    }
}

/// Unicycle step.
pub fn dynamics_step(state: &PoseSE2, u: &ControlInput, dt: f64) -> PoseSE2 {
    let (s, c) = state.psi.sin_cos();
    PoseSE2 {
        x: state.x + u.v * c * dt,
        y: state.y + u.v * s * dt,
        psi: normalize_angle(state.psi + u.omega * dt),
    }
}

/// `1 − exp((n0 − n)·W2)`, floored at zero for counts below the baseline.
pub fn speed_factor(n: f64, n0: f64, w2: f64) -> f64 {
    (1.0 - ((n0 - n) * w2).exp()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `horizon + 1` states starting at the current one.
    pub states: Vec<PoseSE2>,
    pub inputs: Vec<ControlInput>,
    pub cost: f64,
}

impl Trajectory {
    pub fn rollout(start: &PoseSE2, inputs: Vec<ControlInput>, dt: f64) -> Self {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(*start);
        for u in &inputs {
            let next = dynamics_step(states.last().expect("non-empty"), u, dt);
            states.push(next);
        }
        Self { states, inputs, cost: f64::NAN }
    }
}

fn weighted_sq(e: [f64; 3], w: &[f64; 3]) -> f64 {
    w[0] * e[0] * e[0] + w[1] * e[1] * e[1] + w[2] * e[2] * e[2]
}

fn state_error(x: &PoseSE2, r: &PoseSE2) -> [f64; 3] {
    [x.x - r.x, x.y - r.y, normalize_angle(x.psi - r.psi)]
}

/// Stage tracking plus action terms, terminal tracking, minus the CVaR reward.
pub fn trajectory_cost(traj: &Trajectory, refs: &[PoseSE2], grid: &RiskGrid, params: &MppiParams) -> Result<f64> {
    let n = traj.inputs.len();
    if traj.states.len() != n + 1 || refs.len() != n + 1 {
        return Err(Error::validation("trajectory and reference lengths disagree"));
    }
    Ok(cost_unchecked(&traj.states, &traj.inputs, refs, grid, params))
}

fn cost_unchecked(
    states: &[PoseSE2],
    inputs: &[ControlInput],
    refs: &[PoseSE2],
    grid: &RiskGrid,
    p: &MppiParams,
) -> f64 {
    let n = inputs.len();
    let mut cost = 0.0;
    for i in 0..=n {
        let (cvar, count) = footprint_stats(grid, &states[i], &p.robot);
        if i < n {
            cost += weighted_sq(state_error(&states[i], &refs[i]), &p.q);
            let f = speed_factor(count, p.n0, p.w2);
            let dv = inputs[i].v - p.v_ref * f;
            let dw = inputs[i].omega - p.omega_ref * f;
            cost += (p.r[0] * dv * dv + p.r[1] * dw * dw).sqrt();
        } else {
            cost += weighted_sq(state_error(&states[i], &refs[i]), &p.q_terminal);
        }
        cost -= p.w1 * cvar;
    }
    cost
}

/// Reference states ahead of the robot: the closest point on the path, then
/// every `v_ref·dt` metres of arc length, held at the path end.
pub fn reference_states(state: &PoseSE2, path: &[PoseSE2], params: &MppiParams) -> Vec<PoseSE2> {
    reference_states_scaled(state, path, params, 1.0)
}

/// As [`reference_states`] with the spacing multiplied by `speed_scale`, so
/// the references move at the conditioned speed target.
pub fn reference_states_scaled(state: &PoseSE2, path: &[PoseSE2], params: &MppiParams, speed_scale: f64) -> Vec<PoseSE2> {
    let n = params.horizon;
    if path.len() == 1 {
        return vec![PoseSE2 { psi: state.psi, ..path[0] }; n + 1];
    }
    let mut cum = vec![0.0; path.len()];
    for i in 1..path.len() {
        cum[i] = cum[i - 1] + path[i - 1].dist_xy(&path[i]);
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..path.len() - 1 {
        let (a, b) = (&path[i], &path[i + 1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let l2 = dx * dx + dy * dy;
        let t = if l2 > 0.0 { (((state.x - a.x) * dx + (state.y - a.y) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let d = (a.x + t * dx - state.x).hypot(a.y + t * dy - state.y);
        if d < best.0 {
            best = (d, cum[i] + t * l2.sqrt());
        }
    }
    let total = *cum.last().expect("non-empty");
    let spacing = params.v_ref.abs() * speed_scale.clamp(0.0, 1.0) * params.dt;
    let mut seg = 0;
    (0..=n)
        .map(|i| {
            let s = (best.1 + i as f64 * spacing).min(total);
            while seg + 2 < path.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let (a, b) = (&path[seg], &path[seg + 1]);
            let l = cum[seg + 1] - cum[seg];
            let t = if l > 0.0 { ((s - cum[seg]) / l).clamp(0.0, 1.0) } else { 1.0 };
            let psi = if l > 0.0 { (b.y - a.y).atan2(b.x - a.x) } else { b.psi };
            PoseSE2 { x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y), psi }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppiDiagnostics {
    pub input: ControlInput,
    pub best_cost: f64,
    /// Shannon entropy of the sample weights, nats.
    pub weight_entropy: f64,
    pub weight_sum: f64,
    pub valid_samples: usize,
    pub footprint_count: f64,
    pub footprint_cvar: f64,
    pub stalled: bool,
}

/// Warm-started MPPI solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mppi {
    pub params: MppiParams,
    nominal: Vec<ControlInput>,
    last_weights: Vec<f64>,
    last_samples: Vec<Trajectory>,
}

impl Mppi {
    pub fn new(params: MppiParams) -> Result<Self> {
        params.validate()?;
        let nominal = vec![ControlInput::default(); params.horizon];
        Ok(Self { params, nominal, last_weights: Vec::new(), last_samples: Vec::new() })
    }

    pub fn nominal(&self) -> &[ControlInput] {
        &self.nominal
    }

    /// Weights and rollouts of the most recent step (for analysis).
    pub fn last_rollouts(&self) -> (&[f64], &[Trajectory]) {
        (&self.last_weights, &self.last_samples)
    }

    pub fn reset(&mut self) {
        self.nominal.fill(ControlInput::default());
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &PoseSE2,
        path: &[PoseSE2],
        grid: &RiskGrid,
        bounds: &Bounds,
        rng: &mut R,
    ) -> Result<(ControlInput, MppiDiagnostics)> {
        if path.is_empty() {
            return Err(Error::validation("reference path is empty"));
        }
        let p = &self.params;
        let (fc, fn_) = footprint_stats(grid, state, &p.robot);
        let refs = reference_states_scaled(state, path, p, speed_factor(fn_, p.n0, p.w2));

        // sample 0 is the unperturbed warm start
        let mut seqs: Vec<Vec<ControlInput>> = Vec::with_capacity(p.samples);
        for k in 0..p.samples {
            let seq = self
                .nominal
                .iter()
                .map(|u| {
                    if k == 0 {
                        p.clamp(*u)
                    } else {
                        let ev: f64 = rng.sample(StandardNormal);
                        let ew: f64 = rng.sample(StandardNormal);
                        p.clamp(ControlInput { v: u.v + p.noise_std[0] * ev, omega: u.omega + p.noise_std[1] * ew })
                    }
                })
                .collect();
            seqs.push(seq);
        }

        let trajs: Vec<Trajectory> = seqs
            .into_par_iter()
            .map(|inputs| {
                let mut t = Trajectory::rollout(state, inputs, p.dt);
                t.cost = if t.states.iter().all(|s| bounds.contains(s.x, s.y)) {
                    cost_unchecked(&t.states, &t.inputs, &refs, grid, p)
                } else {
                    f64::INFINITY
                };
                t
            })
            .collect();

        let valid = trajs.iter().filter(|t| t.cost.is_finite()).count();
        if valid == 0 {
            self.reset();
            self.last_weights.clear();
            self.last_samples = trajs;
            let diag = MppiDiagnostics {
                input: ControlInput::default(),
                best_cost: f64::INFINITY,
                weight_entropy: 0.0,
                weight_sum: 0.0,
                valid_samples: 0,
                footprint_count: fn_,
                footprint_cvar: fc,
                stalled: true,
            };
            return Ok((ControlInput::default(), diag));
        }

        let weights = softmin_weights(&trajs.iter().map(|t| t.cost).collect::<Vec<_>>(), p.lambda);
        let mut mean = vec![ControlInput::default(); p.horizon];
        for (w, t) in weights.iter().zip(&trajs) {
            if *w == 0.0 {
                continue;
            }
            for (m, u) in mean.iter_mut().zip(&t.inputs) {
                m.v += w * u.v;
                m.omega += w * u.omega;
            }
        }
        let out = p.clamp(mean[0]);
        let entropy = -weights.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>();
        let best_cost = trajs.iter().map(|t| t.cost).fold(f64::INFINITY, f64::min);

        // shift for the next call
        mean.rotate_left(1);
        if let Some(last) = mean.len().checked_sub(2).map(|i| mean[i]) {
            *mean.last_mut().expect("non-empty") = last;
        }
        self.nominal = mean.into_iter().map(|u| p.clamp(u)).collect();
        let diag = MppiDiagnostics {
            input: out,
            best_cost,
            weight_entropy: entropy,
            weight_sum: weights.iter().sum(),
            valid_samples: valid,
            footprint_count: fn_,
            footprint_cvar: fc,
            stalled: false,
        };
        self.last_weights = weights;
        self.last_samples = trajs;
        Ok((out, diag))
    }
}

/// `w_k ∝ exp(−(c_k − min c)/λ)`, normalised; infinite costs get zero weight.
pub fn softmin_weights(costs: &[f64], lambda: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return vec![0.0; costs.len()];
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / lambda).exp() } else { 0.0 })
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// One control step from a fresh (cold) solver.
pub fn mppi_step<R: Rng + ?Sized>(
    state: &PoseSE2,
    path: &[PoseSE2],
    grid: &RiskGrid,
    params: &MppiParams,
    rng: &mut R,
) -> Result<(ControlInput, MppiDiagnostics)> {
    let bounds = grid.world_bounds();
    Mppi::new(params.clone())?.step(state, path, grid, &bounds, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dynamics_examples() {
        let s = dynamics_step(&PoseSE2::new(0.0, 0.0, 0.0), &ControlInput { v: 1.0, omega: 0.0 }, 1.0);
        assert_eq!((s.x, s.y, s.psi), (1.0, 0.0, 0.0));
        let s = dynamics_step(&PoseSE2::new(0.0, 0.0, 0.0), &ControlInput { v: 0.0, omega: std::f64::consts::PI }, 1.0);
        assert_eq!((s.x, s.y), (0.0, 0.0));
        assert!((s.psi.abs() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn arc_closure() {
        // quarter turn at unit radius from (0,0) heading +x ends near (1, 1)
        let dt = 1e-3;
        let steps = (std::f64::consts::FRAC_PI_2 / dt).round() as usize;
        let mut s = PoseSE2::new(0.0, 0.0, 0.0);
        for _ in 0..steps {
            s = dynamics_step(&s, &ControlInput { v: 1.0, omega: 1.0 }, dt);
        }
        let t = steps as f64 * dt;
        let (ex, ey) = (t.sin(), 1.0 - t.cos());
        assert!((s.x - ex).hypot(s.y - ey) < 1e-3);
    }

    #[test]
    fn speed_factor_shape() {
        assert_eq!(speed_factor(1.0, 1.0, 0.2), 0.0);
        assert_eq!(speed_factor(0.0, 1.0, 0.2), 0.0);
        let mut last = 0.0;
        for n in 2..150 {
            let f = speed_factor(n as f64, 1.0, 0.2);
            assert!(f > last && f < 1.0);
            last = f;
        }
    }

    #[test]
    fn weights_are_normalised() {
        let w = softmin_weights(&[3.0, 1e300, -2.0, f64::INFINITY, 7.5], 0.01);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_eq!(w[3], 0.0);
        assert_eq!(w[2], 1.0);
    }
}
