use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::env::Environment;
use super::trajectory::{DynamicsTag, PlannedTrajectory};
use crate::dynamics::{rk4_field, StateBox, Vector, VectorField};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppiParams {
    /// Step of the rollouts and of the emitted plan.
    pub dt: f64,
    pub horizon: usize,
    pub rollouts: usize,
    pub temperature: f64,
    pub noise_std: Vec<f64>,
    /// Diagonals of the stage and terminal weights.
    pub q: Vec<f64>,
    pub q_f: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Weight on penetration depth into obstacles and box faces.
    pub penalty: f64,
    /// Quadratic cost for leaving the inner box whose half-widths are this
    /// fraction of the state box's; keeps plans off the faces.
    pub soft_fraction: f64,
    pub soft_weight: f64,
    pub seed: u64,
}

impl MppiParams {
    /// Quadrotor defaults around the trim input `u_trim`.
    pub fn quadrotor(u_trim: &Vector, rollouts: usize, horizon_s: f64, seed: u64) -> Self {
        let dt = 0.02;
        let std = 0.2 * u_trim.norm();
        MppiParams {
            dt,
            horizon: (horizon_s / dt).round() as usize,
            rollouts,
            temperature: 1.0,
            noise_std: vec![std; u_trim.len()],
            q: vec![1.0, 1.0, 0.1, 0.1, 0.1, 0.1],
            q_f: vec![20.0, 20.0, 1.0, 5.0, 5.0, 1.0],
            u_min: vec![0.0, -6.0],
            u_max: vec![2.0 * u_trim[0], 6.0],
            penalty: 1e6,
            soft_fraction: 0.8,
            soft_weight: 1e3,
            seed,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.rollouts == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter("MPPI needs at least one rollout and one horizon step".into()));
        }
        if !(self.dt > 0.0) || !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter("MPPI needs dt > 0 and temperature > 0".into()));
        }
        check_dim("MPPI q", n, self.q.len())?;
        check_dim("MPPI q_f", n, self.q_f.len())?;
        check_dim("MPPI noise std", m, self.noise_std.len())?;
        check_dim("MPPI u_min", m, self.u_min.len())?;
        check_dim("MPPI u_max", m, self.u_max.len())?;
        if self.u_min.iter().zip(&self.u_max).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("MPPI input bounds are empty".into()));
        }
        Ok(())
    }
}

/// Scene the rollouts are scored against; obstacles and box are expected to
/// be inflated and shrunk by the tube already.
#[derive(Debug, Clone)]
pub struct MppiCost<'a> {
    pub env: &'a Environment,
    pub state_box: &'a StateBox,
    pub goal: Vector,
    /// State coordinates holding the planar position.
    pub position: [usize; 2],
}

impl MppiCost<'_> {
    /// Penetration into obstacles plus box violation.
    pub fn violation(&self, x: &Vector) -> f64 {
        let p = [x[self.position[0]], x[self.position[1]]];
        let bx = self.state_box;
        let boxv: f64 = (0..x.len())
            .map(|i| (bx.lower[i] - x[i]).max(0.0) + (x[i] - bx.upper[i]).max(0.0))
            .sum();
        self.env.penetration(p) + boxv
    }

    /// Quadratic cost of leaving the inner box.
    pub fn shaping(&self, x: &Vector, fraction: f64, weight: f64) -> f64 {
        if weight == 0.0 {
            return 0.0;
        }
        let bx = self.state_box;
        (0..x.len())
            .map(|i| {
                let c = 0.5 * (bx.lower[i] + bx.upper[i]);
                let half = 0.5 * (bx.upper[i] - bx.lower[i]);
                let e = ((x[i] - c).abs() - fraction * half).max(0.0) / half;
                e * e
            })
            .sum::<f64>()
            * weight
    }

    fn quadratic(&self, w: &[f64], x: &Vector) -> f64 {
        x.iter().zip(self.goal.iter()).zip(w).map(|((a, g), w)| w * (a - g) * (a - g)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MppiStep {
    pub u: Vector,
    /// Lowest sampled rollout cost.
    pub best_cost: f64,
    pub all_colliding: bool,
}

/// Receding-horizon MPPI; keeps the mean control sequence between calls.
#[derive(Debug, Clone)]
pub struct Mppi {
    pub params: MppiParams,
    pub sequence: Vec<Vector>,
    pub iteration: u64,
    fill: Vector,
}

impl Mppi {
    pub fn new(params: MppiParams, u_init: &Vector) -> Result<Self> {
        if params.rollouts == 0 {
            return Err(Error::InvalidParameter("MPPI needs at least one rollout".into()));
        }
        Ok(Mppi {
            sequence: vec![u_init.clone(); params.horizon],
            params,
            iteration: 0,
            fill: u_init.clone(),
        })
    }

    /// Stream of rollout `r` at the current replan.
    fn rng(&self, r: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream((self.iteration << 24) | r as u64);
        rng
    }

    /// One MPPI update from `(t, x)`; returns the first control and shifts.
    pub fn step(&mut self, field: &dyn VectorField, cost: &MppiCost, t: f64, x: &Vector) -> Result<MppiStep> {
        let p = &self.params;
        let (n, m) = (field.state_dim(), field.input_dim());
        p.validate(n, m)?;
        check_dim("MPPI state", n, x.len())?;
        check_dim("MPPI goal", n, cost.goal.len())?;
        let h = p.horizon;
        let mut costs = Vec::with_capacity(p.rollouts);
        let mut controls: Vec<Vec<Vector>> = Vec::with_capacity(p.rollouts);
        let mut colliding = 0usize;
        for r in 0..p.rollouts {
            let mut rng = self.rng(r);
            let mut seq = Vec::with_capacity(h);
            let mut y = x.clone();
            let mut s = 0.0;
            let mut hit = false;
            for k in 0..h {
                // rollout 0 replays the current mean unperturbed
                let u = Vector::from_fn(m, |j, _| {
                    let e: f64 = if r == 0 { 0.0 } else { StandardNormal.sample(&mut rng) };
                    (self.sequence[k][j] + p.noise_std[j] * e).clamp(p.u_min[j], p.u_max[j])
                });
                y = match rk4_field(field, t + k as f64 * p.dt, &y, &u, p.dt) {
                    Ok(v) => v,
                    Err(_) => {
                        s = f64::INFINITY;
                        seq.push(u);
                        break;
                    }
                };
                let v = cost.violation(&y);
                hit |= v > 0.0;
                let w = if k + 1 == h { &p.q_f } else { &p.q };
                s += cost.quadratic(w, &y) + cost.shaping(&y, p.soft_fraction, p.soft_weight) + p.penalty * v;
                seq.push(u);
            }
            while seq.len() < h {
                seq.push(seq.last().unwrap().clone());
            }
            if hit || !s.is_finite() {
                colliding += 1;
            }
            costs.push(s);
            controls.push(seq);
        }
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::Planner("every rollout diverged".into()));
        }
        let weights: Vec<f64> = costs.iter().map(|c| (-(c - best) / p.temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut next = vec![Vector::zeros(m); h];
        for (w, seq) in weights.iter().zip(&controls) {
            if *w == 0.0 {
                continue;
            }
            for (acc, u) in next.iter_mut().zip(seq) {
                *acc += u * (w / total);
            }
        }
        let u0 = next[0].clone();
        next.remove(0);
        next.push(self.fill.clone());
        self.sequence = next;
        self.iteration += 1;
        Ok(MppiStep {
            u: u0,
            best_cost: best,
            all_colliding: colliding == p.rollouts,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MppiPlan {
    pub trajectory: PlannedTrajectory,
    pub reached_goal: bool,
    /// Replans at which every rollout collided (best effort taken).
    pub colliding_steps: usize,
}

/// Runs MPPI in closed loop on its own model from `x0` until the position is
/// within `goal_tol` of the goal at low speed, or `max_time` elapses. The
/// executed controls and states form the plan, so its defect is zero.
pub fn mppi_plan(
    field: &dyn VectorField,
    cost: &MppiCost,
    x0: &Vector,
    u_init: &Vector,
    params: &MppiParams,
    max_time: f64,
    goal_tol: f64,
    tag: DynamicsTag,
) -> Result<MppiPlan> {
    let mut mppi = Mppi::new(params.clone(), u_init)?;
    let steps = (max_time / params.dt).round() as usize;
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut colliding_steps = 0;
    let mut reached_goal = false;
    let [ip, iz] = cost.position;
    for k in 0..steps {
        let x = states.last().unwrap().clone();
        let t = k as f64 * params.dt;
        let pos_err = (x[ip] - cost.goal[ip]).hypot(x[iz] - cost.goal[iz]);
        let speed = (&x - &cost.goal).rows(2, x.len() - 2).norm();
        if pos_err <= goal_tol && speed <= 10.0 * goal_tol {
            reached_goal = true;
            break;
        }
        let step = mppi.step(field, cost, t, &x)?;
        colliding_steps += step.all_colliding as usize;
        let next = rk4_field(field, t, &x, &step.u, params.dt)?;
        inputs.push(step.u);
        states.push(next);
    }
    // the final knot holds the last input
    inputs.push(inputs.last().cloned().unwrap_or_else(|| u_init.clone()));
    Ok(MppiPlan {
        trajectory: PlannedTrajectory::new(params.dt, tag, states, inputs)?,
        reached_goal,
        colliding_steps,
    })
}
