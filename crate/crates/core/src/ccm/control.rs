use serde::{Deserialize, Serialize};

use crate::ccm::geodesic::{Geodesic, GeodesicSolver};
use crate::ccm::metric::ContractionMetric;
use crate::dynamics::{ControlAffine, Matrix, Vector};
use crate::error::{check_dim, Error, Result};

/// Worst-case margins of the CCM conditions over a set of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmReport {
    pub points: usize,
    /// Smallest / largest eigenvalue of `M(x)` seen.
    pub metric_eig_min: f64,
    pub metric_eig_max: f64,
    pub sandwich_ok: bool,
    /// Largest `|d_{b_j} M + [M db_j/dx]_S|` entry seen.
    pub killing_residual: f64,
    pub killing_ok: bool,
    /// Largest eigenvalue of the contraction matrix restricted to
    /// `null(B^T M)`, relative to `alpha_upper`.
    pub contraction_max: f64,
    pub contraction_ok: bool,
    pub worst_contraction_state: Vec<f64>,
}

impl CcmReport {
    pub fn passed(&self) -> bool {
        self.sandwich_ok && self.killing_ok && self.contraction_ok
    }
}

/// `A + A^T`
fn sym2(a: &Matrix) -> Matrix {
    a + a.transpose()
}

/// Numerically checks the three CCM conditions at every state in `points`.
pub fn ccm_check(metric: &ContractionMetric, sys: &dyn ControlAffine, points: &[Vector], tol: f64) -> Result<CcmReport> {
    let n = metric.state_dim();
    check_dim("metric vs system", sys.state_dim(), n)?;
    let m_in = sys.input_dim();
    let mut rep = CcmReport {
        points: points.len(),
        metric_eig_min: f64::INFINITY,
        metric_eig_max: f64::NEG_INFINITY,
        sandwich_ok: true,
        killing_residual: 0.0,
        killing_ok: true,
        contraction_max: f64::NEG_INFINITY,
        contraction_ok: true,
        worst_contraction_state: vec![],
    };
    for x in points {
        let m = metric.metric(x)?;
        let eig = m.clone().symmetric_eigenvalues();
        rep.metric_eig_min = rep.metric_eig_min.min(eig.min());
        rep.metric_eig_max = rep.metric_eig_max.max(eig.max());

        let dm = metric.metric_partials(x)?;
        let b = sys.input_matrix(x);
        let db = sys.input_matrix_partials(x);
        for j in 0..m_in {
            let bj = b.column(j).into_owned();
            // d b_j / dx as an n x n matrix: column i is dB/dx_i e_j
            let dbj = Matrix::from_fn(n, n, |r, i| db[i][(r, j)]);
            let mut dir = Matrix::zeros(n, n);
            for i in 0..n {
                dir += &dm[i] * bj[i];
            }
            let res = dir + sym2(&(&m * dbj));
            rep.killing_residual = rep.killing_residual.max(res.amax());
        }

        let f = sys.drift(x);
        let a = sys.drift_jacobian(x);
        let mut dfm = Matrix::zeros(n, n);
        for i in 0..n {
            dfm += &dm[i] * f[i];
        }
        let c = dfm + sym2(&(&m * a)) + &m * (2.0 * metric.lambda);
        let btm = b.transpose() * &m;
        let basis = null_space(&btm);
        if basis.ncols() > 0 {
            let proj = basis.transpose() * c * &basis;
            let top = ((&proj + proj.transpose()) * 0.5).symmetric_eigenvalues().max() / metric.alpha_upper;
            if top > rep.contraction_max {
                rep.contraction_max = top;
                rep.worst_contraction_state = x.iter().copied().collect();
            }
        }
    }
    rep.sandwich_ok = rep.metric_eig_min >= metric.alpha_lower * (1.0 - 1e-8) && rep.metric_eig_max <= metric.alpha_upper * (1.0 + 1e-8);
    rep.killing_ok = rep.killing_residual <= 1e-6;
    rep.contraction_ok = rep.contraction_max <= tol;
    Ok(rep)
}

/// Orthonormal basis of the null space of a wide matrix.
fn null_space(a: &Matrix) -> Matrix {
    let (r, n) = a.shape();
    // full V from the SVD of A^T A keeps nalgebra's thin SVD out of the way
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1e-300);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * scale).collect();
    let keep = if keep.len() + r < n {
        // rank-deficient A; fall back to the n - r smallest directions
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        idx.truncate(n - r);
        idx
    } else {
        keep
    };
    Matrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// Terms of the affine constraint `phi0 + phi1^T k <= 0`.
#[derive(Debug, Clone)]
pub struct FeedbackTerms {
    pub phi0: f64,
    pub phi1: Vector,
    pub gain: Vector,
    /// `phi1 ~ 0` while `phi0 > 0`: no admissible direction.
    pub degenerate: bool,
}

/// Minimum-norm `k` with
/// `2 gamma_s(1)^T M(x) F(x, u_d + k) - 2 gamma_s(0)^T M(x_d) xd_dot <= -2 lambda E`,
/// using that `F` is affine in `k`.
pub fn feedback_gain<F>(
    metric: &ContractionMetric,
    dynamics: F,
    x_d: &Vector,
    xd_dot: &Vector,
    x: &Vector,
    u_d: &Vector,
    geo: &Geodesic,
) -> Result<FeedbackTerms>
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    let m = u_d.len();
    let mx = metric.metric(x)?;
    let mxd = metric.metric(x_d)?;
    let g1 = mx * geo.end_tangent();
    let g0 = mxd * geo.start_tangent();
    let f0 = dynamics(x, u_d);
    let phi0 = 2.0 * g1.dot(&f0) - 2.0 * g0.dot(xd_dot) + 2.0 * metric.lambda * geo.energy;
    let mut phi1 = Vector::zeros(m);
    for j in 0..m {
        let mut u = u_d.clone();
        u[j] += 1.0;
        phi1[j] = 2.0 * g1.dot(&(dynamics(x, &u) - &f0));
    }
    let nn = phi1.norm_squared();
    let (gain, degenerate) = if phi0 <= 0.0 {
        (Vector::zeros(m), false)
    } else if nn.sqrt() < 1e-12 {
        (Vector::zeros(m), true)
    } else {
        (&phi1 * (-phi0 / nn), false)
    };
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feedback gain"));
    }
    Ok(FeedbackTerms {
        phi0,
        phi1,
        gain,
        degenerate,
    })
}

/// Contraction controller `u_c = u_d + k`; owns a warm-started geodesic solver.
#[derive(Debug, Clone)]
pub struct CcmController {
    pub metric: ContractionMetric,
    pub solver: GeodesicSolver,
    pub last_geodesic: Option<Geodesic>,
    pub degenerate_steps: usize,
}

impl CcmController {
    pub fn new(metric: ContractionMetric, nodes: usize) -> Result<Self> {
        Ok(CcmController {
            metric,
            solver: GeodesicSolver::new(nodes)?,
            last_geodesic: None,
            degenerate_steps: 0,
        })
    }

    pub fn u_c<F>(&mut self, dynamics: F, x_d: &Vector, xd_dot: &Vector, u_d: &Vector, x: &Vector) -> Result<Vector>
    where
        F: Fn(&Vector, &Vector) -> Vector,
    {
        let geo = self.solver.solve(&self.metric, x_d, x)?;
        let terms = feedback_gain(&self.metric, dynamics, x_d, xd_dot, x, u_d, &geo)?;
        if terms.degenerate {
            self.degenerate_steps += 1;
        }
        self.last_geodesic = Some(geo);
        Ok(u_d + terms.gain)
    }

    pub fn energy(&self) -> f64 {
        self.last_geodesic.as_ref().map_or(0.0, |g| g.energy)
    }
}
