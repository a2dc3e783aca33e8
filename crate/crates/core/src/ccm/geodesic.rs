use std::f64::consts::PI;

use crate::ccm::metric::ContractionMetric;
use crate::dynamics::{Matrix, Vector};
use crate::error::{check_dim, Error, Result};
use crate::optim::bfgs;

/// Chebyshev-Gauss-Lobatto nodes on `[0, 1]`, their differentiation matrix
/// and Clenshaw-Curtis weights.
#[derive(Debug, Clone)]
pub struct Collocation {
    pub nodes: Vec<f64>,
    pub diff: Matrix,
    pub weights: Vec<f64>,
}

impl Collocation {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter("geodesic needs at least 2 nodes".into()));
        }
        let n = k - 1;
        let nodes: Vec<f64> = (0..k).map(|j| 0.5 * (1.0 - (PI * j as f64 / n as f64).cos())).collect();
        // barycentric weights of CGL points survive the affine map
        let bw: Vec<f64> = (0..k)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut diff = Matrix::zeros(k, k);
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                if i != j {
                    let v = bw[j] / bw[i] / (nodes[i] - nodes[j]);
                    diff[(i, j)] = v;
                    row += v;
                }
            }
            diff[(i, i)] = -row;
        }
        // Clenshaw-Curtis on [-1, 1], halved for [0, 1]
        let mut weights = vec![0.0; k];
        if n == 1 {
            weights = vec![0.5, 0.5];
        } else {
            let theta: Vec<f64> = (0..k).map(|j| PI * j as f64 / n as f64).collect();
            let mut v = vec![1.0; n - 1];
            let interior = 1..n;
            if n % 2 == 0 {
                weights[0] = 1.0 / (n * n - 1) as f64;
                weights[n] = weights[0];
                for kk in 1..n / 2 {
                    for (vi, j) in v.iter_mut().zip(interior.clone()) {
                        *vi -= 2.0 * (2.0 * kk as f64 * theta[j]).cos() / (4 * kk * kk - 1) as f64;
                    }
                }
                for (vi, j) in v.iter_mut().zip(interior.clone()) {
                    *vi -= (n as f64 * theta[j]).cos() / (n * n - 1) as f64;
                }
            } else {
                weights[0] = 1.0 / (n * n) as f64;
                weights[n] = weights[0];
                for kk in 1..=(n - 1) / 2 {
                    for (vi, j) in v.iter_mut().zip(interior.clone()) {
                        *vi -= 2.0 * (2.0 * kk as f64 * theta[j]).cos() / (4 * kk * kk - 1) as f64;
                    }
                }
            }
            for (vi, j) in v.iter().zip(interior) {
                weights[j] = 2.0 * vi / n as f64;
            }
            for w in weights.iter_mut() {
                *w *= 0.5;
            }
        }
        Ok(Collocation { nodes, diff, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Discretised minimal geodesic from `x_d` (s = 0) to `x` (s = 1).
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub nodes: Vec<Vector>,
    /// `gamma_s` at the nodes.
    pub tangents: Vec<Vector>,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_inf_norm: f64,
}

impl Geodesic {
    pub fn start_tangent(&self) -> &Vector {
        &self.tangents[0]
    }

    pub fn end_tangent(&self) -> &Vector {
        &self.tangents[self.tangents.len() - 1]
    }
}

/// Geodesic solver with its own warm-start state; one per control loop.
#[derive(Debug, Clone)]
pub struct GeodesicSolver {
    pub colloc: Collocation,
    pub grad_tol: f64,
    pub max_iter: usize,
    last: Option<Vec<Vector>>,
}

impl GeodesicSolver {
    pub fn new(k: usize) -> Result<Self> {
        Ok(GeodesicSolver {
            colloc: Collocation::new(k)?,
            grad_tol: 1e-8,
            max_iter: 200,
            last: None,
        })
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn solve(&mut self, metric: &ContractionMetric, x_d: &Vector, x: &Vector) -> Result<Geodesic> {
        let n = metric.state_dim();
        check_dim("geodesic start", n, x_d.len())?;
        check_dim("geodesic end", n, x.len())?;
        let k = self.colloc.len();
        let s = &self.colloc.nodes;
        if x == x_d {
            let nodes = vec![x.clone(); k];
            self.last = Some(nodes.clone());
            return Ok(Geodesic {
                nodes,
                tangents: vec![Vector::zeros(n); k],
                energy: 0.0,
                converged: true,
                iterations: 0,
                grad_inf_norm: 0.0,
            });
        }
        // straight line, or the previous curve with its endpoints moved
        let init: Vec<Vector> = match &self.last {
            Some(prev) if prev.len() == k => {
                let d0 = x_d - &prev[0];
                let d1 = x - &prev[k - 1];
                (0..k).map(|j| &prev[j] + &d0 * (1.0 - s[j]) + &d1 * s[j]).collect()
            }
            _ => (0..k).map(|j| x_d * (1.0 - s[j]) + x * s[j]).collect(),
        };
        let free = k.saturating_sub(2);
        let mut z0 = Vector::zeros(free * n);
        for j in 0..free {
            z0.rows_mut(j * n, n).copy_from(&init[j + 1]);
        }
        let assemble = |z: &Vector| -> Vec<Vector> {
            let mut pts = Vec::with_capacity(k);
            pts.push(x_d.clone());
            for j in 0..free {
                pts.push(z.rows(j * n, n).into_owned());
            }
            pts.push(x.clone());
            pts
        };
        let colloc = &self.colloc;
        let (nodes, e, gi, its, ok) = frozen_newton(metric, colloc, init.clone(), self.grad_tol, self.max_iter)?;
        if ok {
            let tangents = tangents(colloc, &nodes);
            self.last = Some(nodes.clone());
            return Ok(Geodesic {
                nodes,
                tangents,
                energy: e,
                converged: true,
                iterations: its,
                grad_inf_norm: gi,
            });
        }
        // stalled (round-off near the optimum, or an indefinite step): polish with BFGS
        for j in 0..free {
            z0.rows_mut(j * n, n).copy_from(&nodes[j + 1]);
        }
        let mut failure = None;
        let fg = |z: &Vector| -> (f64, Vector) {
            match energy_and_gradient(metric, colloc, &assemble(z)) {
                Ok((e, g)) => {
                    let mut gz = Vector::zeros(free * n);
                    for j in 0..free {
                        gz.rows_mut(j * n, n).copy_from(&g[j + 1]);
                    }
                    (e, gz)
                }
                Err(err) => {
                    failure.get_or_insert(err);
                    (f64::INFINITY, Vector::zeros(free * n))
                }
            }
        };
        let min = if free == 0 {
            let mut f = fg;
            let (value, _) = f(&z0);
            crate::optim::Minimum {
                x: z0,
                value,
                grad_inf_norm: 0.0,
                iterations: 0,
                converged: true,
            }
        } else {
            bfgs(fg, z0, self.grad_tol, self.max_iter)
        };
        if !min.value.is_finite() {
            return Err(failure.unwrap_or(Error::NonFinite("geodesic energy")));
        }
        let nodes = assemble(&min.x);
        let tangents = tangents(colloc, &nodes);
        self.last = Some(nodes.clone());
        Ok(Geodesic {
            nodes,
            tangents,
            energy: min.value,
            converged: min.converged,
            iterations: min.iterations,
            grad_inf_norm: min.grad_inf_norm,
        })
    }
}

fn tangents(colloc: &Collocation, nodes: &[Vector]) -> Vec<Vector> {
    let k = nodes.len();
    let n = nodes[0].len();
    (0..k)
        .map(|i| {
            let mut v = Vector::zeros(n);
            for (j, p) in nodes.iter().enumerate() {
                v += p * colloc.diff[(i, j)];
            }
            v
        })
        .collect()
}

/// Quadrature energy `sum_k w_k gamma_s^T M(gamma) gamma_s` and its gradient
/// with respect to every node.
pub fn energy_and_gradient(metric: &ContractionMetric, colloc: &Collocation, nodes: &[Vector]) -> Result<(f64, Vec<Vector>)> {
    let (e, g, _) = energy_terms(metric, colloc, nodes)?;
    Ok((e, g))
}

fn energy_terms(metric: &ContractionMetric, colloc: &Collocation, nodes: &[Vector]) -> Result<(f64, Vec<Vector>, Vec<Matrix>)> {
    let k = nodes.len();
    let n = nodes[0].len();
    let tan = tangents(colloc, nodes);
    let mut e = 0.0;
    let mut grad = vec![Vector::zeros(n); k];
    let mut mv = Vec::with_capacity(k);
    let mut ms = Vec::with_capacity(k);
    for i in 0..k {
        let (m, parts) = metric.metric_with_partials(&nodes[i])?;
        let v = &m * &tan[i];
        e += colloc.weights[i] * tan[i].dot(&v);
        for (c, dm) in parts {
            grad[i][c] += colloc.weights[i] * tan[i].dot(&(dm * &tan[i]));
        }
        mv.push(v);
        ms.push(m);
    }
    for (j, g) in grad.iter_mut().enumerate() {
        for i in 0..k {
            let d = colloc.diff[(i, j)];
            if d != 0.0 {
                *g += &mv[i] * (2.0 * colloc.weights[i] * d);
            }
        }
    }
    Ok((e, grad, ms))
}

/// Newton iteration with the Hessian of the energy taken at frozen node
/// metrics, `H_jl = 2 sum_i w_i D_ij D_il M_i`. Cheap and usually done in a
/// handful of steps; returns `None` if it stalls.
fn frozen_newton(
    metric: &ContractionMetric,
    colloc: &Collocation,
    mut nodes: Vec<Vector>,
    grad_tol: f64,
    max_iter: usize,
) -> Result<(Vec<Vector>, f64, f64, usize, bool)> {
    let k = nodes.len();
    let n = nodes[0].len();
    let free = k - 2;
    let (mut e, mut g, mut ms) = energy_terms(metric, colloc, &nodes)?;
    let gnorm = |g: &[Vector]| g[1..k - 1].iter().map(|v| v.amax()).fold(0.0, f64::max);
    let mut it = 0;
    while it < max_iter {
        let gi = gnorm(&g);
        if gi <= grad_tol {
            return Ok((nodes, e, gi, it, true));
        }
        it += 1;
        let mut h = Matrix::zeros(free * n, free * n);
        for a in 0..free {
            for b in a..free {
                let mut blk = Matrix::zeros(n, n);
                for (i, m) in ms.iter().enumerate() {
                    let c = colloc.weights[i] * colloc.diff[(i, a + 1)] * colloc.diff[(i, b + 1)];
                    if c != 0.0 {
                        blk += m * (2.0 * c);
                    }
                }
                h.view_mut((a * n, b * n), (n, n)).copy_from(&blk);
                if a != b {
                    h.view_mut((b * n, a * n), (n, n)).copy_from(&blk.transpose());
                }
            }
        }
        let mut rhs = Vector::zeros(free * n);
        for a in 0..free {
            rhs.rows_mut(a * n, n).copy_from(&(-&g[a + 1]));
        }
        let Some(chol) = h.cholesky() else {
            break;
        };
        let p = chol.solve(&rhs);
        let slope = -rhs.dot(&p);
        if !(slope < 0.0) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<Vector> = (0..k)
                .map(|j| {
                    if j == 0 || j == k - 1 {
                        nodes[j].clone()
                    } else {
                        &nodes[j] + p.rows((j - 1) * n, n) * step
                    }
                })
                .collect();
            if let Ok((et, gt, mt)) = energy_terms(metric, colloc, &trial) {
                if et <= e + 1e-4 * step * slope {
                    nodes = trial;
                    e = et;
                    g = gt;
                    ms = mt;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gi = gnorm(&g);
    Ok((nodes, e, gi, it, gi <= grad_tol))
}

/// Energy of a given discretised curve.
pub fn riemannian_energy(metric: &ContractionMetric, colloc: &Collocation, nodes: &[Vector]) -> Result<f64> {
    Ok(energy_and_gradient(metric, colloc, nodes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_polynomials() {
        for k in [3, 6, 11, 12] {
            let c = Collocation::new(k).unwrap();
            for p in 0..k {
                let q: f64 = c.nodes.iter().zip(&c.weights).map(|(s, w)| w * s.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-12, "k={k} p={p}");
            }
        }
    }

    #[test]
    fn differentiation_exact_on_polynomials() {
        let c = Collocation::new(11).unwrap();
        let f: Vec<f64> = c.nodes.iter().map(|s| s.powi(7) - 2.0 * s).collect();
        for i in 0..11 {
            let d: f64 = (0..11).map(|j| c.diff[(i, j)] * f[j]).sum();
            let exact = 7.0 * c.nodes[i].powi(6) - 2.0;
            assert!((d - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_gradient_matches_fd() {
        let m = ContractionMetric::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quadrotor_metric.json")).unwrap();
        let c = Collocation::new(6).unwrap();
        let nodes: Vec<Vector> = (0..6)
            .map(|j| Vector::from_fn(6, |i, _| 0.1 * ((i + 2 * j) as f64).sin()))
            .collect();
        let (_, g) = energy_and_gradient(&m, &c, &nodes).unwrap();
        let h = 1e-6;
        for j in 0..6 {
            for i in 0..6 {
                let mut p = nodes.clone();
                let mut q = nodes.clone();
                p[j][i] += h;
                q[j][i] -= h;
                let fd = (riemannian_energy(&m, &c, &p).unwrap() - riemannian_energy(&m, &c, &q).unwrap()) / (2.0 * h);
                assert!((fd - g[j][i]).abs() < 1e-6 * (1.0 + fd.abs()), "node {j} coord {i}");
            }
        }
    }
}
