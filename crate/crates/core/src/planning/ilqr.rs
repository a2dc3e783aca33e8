use serde::{Deserialize, Serialize};

use super::trajectory::{DynamicsTag, PlannedTrajectory};
use crate::dynamics::{rk4_field, Matrix, ModelField, StateBox, Vector, VectorField};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlqrParams {
    pub dt: f64,
    pub steps: usize,
    /// Diagonal weights.
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub q_f: Vec<f64>,
    /// Quadratic penalty on box violation.
    pub box_weight: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl IlqrParams {
    pub fn new(dt: f64, horizon: f64, q: Vec<f64>, r: Vec<f64>, q_f: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter("trajectory optimization needs T > 0 and dt > 0".into()));
        }
        Ok(IlqrParams {
            dt,
            steps: (horizon / dt).round().max(1.0) as usize,
            q,
            r,
            q_f,
            box_weight: 1e4,
            max_iter: 100,
            tol: 1e-6,
        })
    }
}

#[derive(Debug, Clone)]
pub struct IlqrResult {
    pub trajectory: PlannedTrajectory,
    pub cost: f64,
    /// Cost after each accepted iteration, starting with the initial guess.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Input holding `x` still under the field at time `t`:
/// `-B^+ f(x) - c(xi(t), x)`.
pub fn trim_input(field: &ModelField, t: f64, x: &Vector) -> Result<Vector> {
    let sys = field.system;
    let mut u = -(sys.input_pinv(x)? * sys.drift(x));
    if let Some(c) = field.correction {
        u -= c.correction(&field.signal.at(t), x);
    }
    Ok(u)
}

struct Problem<'a> {
    field: &'a dyn VectorField,
    p: &'a IlqrParams,
    goal: &'a Vector,
    u_ref: &'a [Vector],
    state_box: Option<&'a StateBox>,
}

impl Problem<'_> {
    fn box_terms(&self, x: &Vector) -> (f64, Vector, Vector) {
        let n = x.len();
        let mut c = 0.0;
        let mut g = Vector::zeros(n);
        let mut h = Vector::zeros(n);
        if let Some(bx) = self.state_box {
            let w = self.p.box_weight;
            for i in 0..n {
                let v = if x[i] > bx.upper[i] {
                    x[i] - bx.upper[i]
                } else if x[i] < bx.lower[i] {
                    x[i] - bx.lower[i]
                } else {
                    continue;
                };
                c += w * v * v;
                g[i] = 2.0 * w * v;
                h[i] = 2.0 * w;
            }
        }
        (c, g, h)
    }

    fn stage(&self, k: usize, x: &Vector, u: &Vector) -> f64 {
        let dx = x - self.goal;
        let du = u - &self.u_ref[k];
        let sx: f64 = dx.iter().zip(&self.p.q).map(|(d, w)| w * d * d).sum();
        let su: f64 = du.iter().zip(&self.p.r).map(|(d, w)| w * d * d).sum();
        sx + su + self.box_terms(x).0
    }

    fn terminal(&self, x: &Vector) -> f64 {
        let dx = x - self.goal;
        dx.iter().zip(&self.p.q_f).map(|(d, w)| w * d * d).sum::<f64>() + self.box_terms(x).0
    }

    fn rollout(&self, x0: &Vector, us: &[Vector]) -> Result<(Vec<Vector>, f64)> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(x0.clone());
        let mut cost = 0.0;
        for (k, u) in us.iter().enumerate() {
            let x = &xs[k];
            cost += self.stage(k, x, u);
            let next = rk4_field(self.field, k as f64 * self.p.dt, x, u, self.p.dt)?;
            xs.push(next);
        }
        cost += self.terminal(xs.last().unwrap());
        Ok((xs, cost))
    }

    /// Central-difference Jacobians of the RK4 map.
    fn linearize(&self, k: usize, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
        let (n, m) = (x.len(), u.len());
        let t = k as f64 * self.p.dt;
        let dt = self.p.dt;
        let mut a = Matrix::zeros(n, n);
        let mut b = Matrix::zeros(n, m);
        for i in 0..n {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let d = (rk4_field(self.field, t, &xp, u, dt)? - rk4_field(self.field, t, &xm, u, dt)?) / (2.0 * h);
            a.set_column(i, &d);
        }
        for j in 0..m {
            let h = 1e-6 * (1.0 + u[j].abs());
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let d = (rk4_field(self.field, t, x, &up, dt)? - rk4_field(self.field, t, x, &um, dt)?) / (2.0 * h);
            b.set_column(j, &d);
        }
        Ok((a, b))
    }
}

/// Iterative LQR on `sum (x-g)^T Q (x-g) + (u-u_ref)^T R (u-u_ref)` plus a
/// terminal `(x_N-g)^T Q_f (x_N-g)`, starting from `u_ref`. Stops once an
/// iteration lowers the cost by less than `tol`.
pub fn trajopt_lqr(
    field: &dyn VectorField,
    x0: &Vector,
    goal: &Vector,
    u_ref: &[Vector],
    params: &IlqrParams,
    state_box: Option<&StateBox>,
    tag: DynamicsTag,
) -> Result<IlqrResult> {
    let (n, m) = (field.state_dim(), field.input_dim());
    let nk = params.steps;
    check_dim("trajopt x0", n, x0.len())?;
    check_dim("trajopt goal", n, goal.len())?;
    check_dim("trajopt q", n, params.q.len())?;
    check_dim("trajopt q_f", n, params.q_f.len())?;
    check_dim("trajopt r", m, params.r.len())?;
    check_dim("trajopt reference inputs", nk, u_ref.len())?;
    if params.r.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("trajopt needs R > 0".into()));
    }
    let prob = Problem {
        field,
        p: params,
        goal,
        u_ref,
        state_box,
    };
    let mut us: Vec<Vector> = u_ref.to_vec();
    let (mut xs, mut cost) = prob.rollout(x0, &us)?;
    let mut history = vec![cost];
    let mut reg = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let lin: Vec<(Matrix, Matrix)> = (0..nk).map(|k| prob.linearize(k, &xs[k], &us[k])).collect::<Result<_>>()?;
        // backward pass
        let xn = &xs[nk];
        let (_, bg, bh) = prob.box_terms(xn);
        let mut vx = Vector::from_fn(n, |i, _| 2.0 * params.q_f[i] * (xn[i] - goal[i])) + bg;
        let mut vxx = Matrix::from_diagonal(&Vector::from_fn(n, |i, _| 2.0 * params.q_f[i])) + Matrix::from_diagonal(&bh);
        let mut ks = vec![Vector::zeros(m); nk];
        let mut gains = vec![Matrix::zeros(m, n); nk];
        let mut expected = [0.0, 0.0];
        let mut ok = true;
        for k in (0..nk).rev() {
            let (a, b) = &lin[k];
            let x = &xs[k];
            let u = &us[k];
            let (_, bg, bh) = prob.box_terms(x);
            let lx = Vector::from_fn(n, |i, _| 2.0 * params.q[i] * (x[i] - goal[i])) + bg;
            let lu = Vector::from_fn(m, |j, _| 2.0 * params.r[j] * (u[j] - u_ref[k][j]));
            let lxx = Matrix::from_diagonal(&Vector::from_fn(n, |i, _| 2.0 * params.q[i])) + Matrix::from_diagonal(&bh);
            let luu = Matrix::from_diagonal(&Vector::from_fn(m, |j, _| 2.0 * params.r[j]));
            let qx = lx + a.transpose() * &vx;
            let qu = lu + b.transpose() * &vx;
            let qxx = lxx + a.transpose() * &vxx * a;
            let qux = b.transpose() * &vxx * a;
            let quu = luu + b.transpose() * &vxx * b + Matrix::identity(m, m) * reg;
            let quu = (&quu + quu.transpose()) * 0.5;
            let Some(chol) = quu.clone().cholesky() else {
                ok = false;
                break;
            };
            let kff = -chol.solve(&qu);
            let kfb = -chol.solve(&qux);
            expected[0] += kff.dot(&qu);
            expected[1] += 0.5 * kff.dot(&(&quu * &kff));
            vx = &qx + kfb.transpose() * &quu * &kff + kfb.transpose() * &qu + qux.transpose() * &kff;
            vxx = &qxx + kfb.transpose() * &quu * &kfb + kfb.transpose() * &qux + qux.transpose() * &kfb;
            vxx = (&vxx + vxx.transpose()) * 0.5;
            ks[k] = kff;
            gains[k] = kfb;
        }
        if !ok {
            reg = if reg == 0.0 { 1e-6 } else { reg * 10.0 };
            if reg > 1e8 {
                return Err(Error::Planner("trajopt backward pass lost definiteness".into()));
            }
            continue;
        }
        if -(expected[0] + expected[1]) < params.tol {
            converged = true;
            break;
        }
        // forward pass with backtracking
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let mut cand_x = vec![x0.clone()];
            let mut cand_u = Vec::with_capacity(nk);
            let mut c = 0.0;
            let mut good = true;
            for k in 0..nk {
                let dx = &cand_x[k] - &xs[k];
                let u = &us[k] + &ks[k] * alpha + &gains[k] * dx;
                c += prob.stage(k, &cand_x[k], &u);
                match rk4_field(field, k as f64 * params.dt, &cand_x[k], &u, params.dt) {
                    Ok(next) => cand_x.push(next),
                    Err(_) => {
                        good = false;
                        break;
                    }
                }
                cand_u.push(u);
            }
            if good {
                c += prob.terminal(&cand_x[nk]);
                if c < cost {
                    accepted = Some((cand_x, cand_u, c));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((nx, nu, c)) => {
                let decrease = cost - c;
                xs = nx;
                us = nu;
                cost = c;
                history.push(c);
                reg = (reg / 10.0).max(0.0);
                if reg < 1e-9 {
                    reg = 0.0;
                }
                if decrease < params.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                reg = if reg == 0.0 { 1e-6 } else { reg * 10.0 };
                if reg > 1e8 {
                    return Err(Error::Planner(format!(
                        "trajopt line search failed with expected decrease {:e}",
                        -(expected[0] + expected[1])
                    )));
                }
            }
        }
    }
    let mut inputs = us;
    inputs.push(inputs.last().cloned().unwrap_or_else(|| Vector::zeros(m)));
    Ok(IlqrResult {
        trajectory: PlannedTrajectory::new(params.dt, tag, xs, inputs)?,
        cost,
        history,
        iterations,
        converged,
    })
}
