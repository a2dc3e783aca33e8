//! Tube certificates: the constants bounding the closed loop inside a
//! `rho`-tube, the feasibility conditions on `(omega, Gamma)` and the
//! uniform ultimate bound.
//!
//! Suprema over the tube are estimated by sampling a fixed number of Halton
//! points inside the Euclidean `rho`-ball around every plan knot, plus the
//! ball's axis extremes.

use serde::{Deserialize, Serialize};

use crate::ccm::ContractionMetric;
use crate::dynamics::{spectral_norm, ControlAffine, Matrix, PlantSuprema, StateBox, UncertaintyTriple, Vector};
use crate::error::{check_dim, Error, Result};
use crate::l1::{l1_norms, L1Params};
use crate::sampling::halton;

/// Configs closer than this to the `omega = 2 lambda` pole are rejected.
pub const POLE_EXCLUSION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeParams {
    pub rho_a: f64,
    pub eps: f64,
    pub initial_error: f64,
    pub rho_r: f64,
    pub rho: f64,
}

pub fn compute_tube_params(metric: &ContractionMetric, x_d0: &Vector, x0: &Vector, rho_a: f64, eps: f64) -> Result<TubeParams> {
    if !(rho_a > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidParameter("rho_a and eps must be positive".into()));
    }
    check_dim("initial state", x_d0.len(), x0.len())?;
    let initial_error = (x_d0 - x0).norm();
    let rho_r = (metric.alpha_upper / metric.alpha_lower).sqrt() * initial_error + eps;
    Ok(TubeParams {
        rho_a,
        eps,
        initial_error,
        rho_r,
        rho: rho_r + rho_a,
    })
}

/// Errors with the first knot whose `rho`-ball leaves `bx`.
pub fn check_tube_in_box(knots: &[Vector], rho: f64, bx: &StateBox) -> Result<()> {
    for (k, x) in knots.iter().enumerate() {
        check_dim("plan knot", bx.dim(), x.len())?;
        for i in 0..x.len() {
            if x[i] - rho < bx.lower[i] || x[i] + rho > bx.upper[i] {
                return Err(Error::TubeExitsBox { knot: k, coord: i });
            }
        }
    }
    Ok(())
}

/// Deterministic points in the unit ball: Halton points of the cube kept when
/// inside, then the centre and the `2n` axis extremes.
pub fn ball_samples(n: usize, count: usize) -> Vec<Vector> {
    let mut pts = Vec::with_capacity(count + 2 * n + 1);
    pts.push(Vector::zeros(n));
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut e = Vector::zeros(n);
            e[i] = s;
            pts.push(e);
        }
    }
    let mut idx = 1u64;
    let mut kept = 0;
    while kept < count {
        let h = halton(idx, n);
        idx += 1;
        let p = Vector::from_iterator(n, h.iter().map(|u| 2.0 * u - 1.0));
        if p.norm_squared() <= 1.0 {
            pts.push(p);
            kept += 1;
        }
    }
    pts
}

/// Plant and metric suprema over the sampled tube.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TubeSuprema {
    pub plant: PlantSuprema,
    /// `sup sum_i ||dM/dx_i||`
    pub metric_partials: f64,
    /// `sup lambda_max(L^-T F L^-1) / (2 sigma_min>0(B^T L^-1))`
    pub delta_u: f64,
    pub samples: usize,
}

fn smallest_positive_singular(a: &Matrix) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let tol = sv.max() * 1e-12;
    sv.iter().copied().filter(|s| *s > tol).fold(f64::INFINITY, f64::min)
}

fn accumulate_metric(metric: &ContractionMetric, sys: &dyn ControlAffine, x: &Vector, sup: &mut TubeSuprema) -> Result<()> {
    let dm: f64 = metric.metric_partials(x)?.iter().map(spectral_norm).sum();
    let w = metric.dual(x);
    let l = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("dual metric not positive definite in the tube".into()))?
        .l()
        .transpose();
    let l_inv = l
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular metric factor".into()))?;
    let f = sys.drift(x);
    let a = sys.drift_jacobian(x);
    let aw = &a * &w;
    let big_f = -metric.dual_directional(x, &f) + &aw + aw.transpose() + &w * (2.0 * metric.lambda);
    let core = l_inv.transpose() * big_f * &l_inv;
    let top = ((&core + core.transpose()) * 0.5).symmetric_eigenvalues().max();
    let sig = smallest_positive_singular(&(sys.input_matrix(x).transpose() * &l_inv));
    if !sig.is_finite() {
        return Err(Error::RankDeficient(format!("{:?}", x.as_slice())));
    }
    sup.metric_partials = sup.metric_partials.max(dm);
    sup.delta_u = sup.delta_u.max(0.5 * top / sig);
    Ok(())
}

pub fn tube_suprema(metric: &ContractionMetric, sys: &dyn ControlAffine, knots: &[Vector], rho: f64, per_knot: usize) -> Result<TubeSuprema> {
    let n = sys.state_dim();
    let unit = ball_samples(n, per_knot);
    let mut sup = TubeSuprema::default();
    for xd in knots {
        check_dim("plan knot", n, xd.len())?;
        for p in &unit {
            let x = xd + p * rho;
            sup.plant.accumulate(sys, &x)?;
            accumulate_metric(metric, sys, &x, &mut sup)?;
            sup.samples += 1;
        }
    }
    // delta_u is a sup of a possibly negative quantity; the constants use it as a magnitude
    sup.delta_u = sup.delta_u.max(0.0);
    Ok(sup)
}

/// Every intermediate constant of the certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateConstants {
    pub triple: UncertaintyTriple,
    pub omega: f64,
    pub rho: f64,
    pub delta_f: f64,
    pub delta_fx: f64,
    pub delta_b: f64,
    pub delta_bx: f64,
    pub delta_b_cols: f64,
    pub delta_pinv: f64,
    pub delta_pinv_x: f64,
    pub delta_ud: f64,
    pub delta_mx: f64,
    pub delta_psi_x: f64,
    pub delta_delta_u: f64,
    pub delta_xr_dot: f64,
    pub delta_x_dot: f64,
    pub delta_x_tilde: f64,
    pub delta_eta_tilde: f64,
    pub delta_theta: f64,
    pub delta_psi_dot: f64,
    pub delta_gamma_dot: f64,
    pub kappa: [f64; 4],
    pub zeta: [f64; 3],
}

/// Everything the constants need apart from the uncertainty triple.
#[derive(Debug, Clone)]
pub struct CertificateInputs {
    pub lambda: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub suprema: TubeSuprema,
    pub desired_input: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub q_min: f64,
    pub a_m_norm: f64,
}

impl CertificateInputs {
    pub fn new(metric: &ContractionMetric, suprema: TubeSuprema, desired_input: f64, l1: &L1Params) -> Self {
        let pe = l1.p.clone().symmetric_eigenvalues();
        CertificateInputs {
            lambda: metric.lambda,
            alpha_lower: metric.alpha_lower,
            alpha_upper: metric.alpha_upper,
            suprema,
            desired_input,
            p_max: pe.max(),
            p_min: pe.min(),
            q_min: l1.q.clone().symmetric_eigenvalues().min(),
            a_m_norm: spectral_norm(&l1.a_m),
        }
    }
}

/// Evaluates every constant for one triple, bandwidth and tube radius.
pub fn compute_constants(inp: &CertificateInputs, triple: UncertaintyTriple, omega: f64, rho: f64) -> Result<CertificateConstants> {
    if !(omega > 0.0) || !(rho > 0.0) {
        return Err(Error::InvalidParameter("omega and rho must be positive".into()));
    }
    let lam = inp.lambda;
    let pole = (2.0 * lam / omega - 1.0).abs();
    if pole < POLE_EXCLUSION {
        return Err(Error::InvalidParameter(format!(
            "omega = {omega} is within the excluded band around 2 lambda"
        )));
    }
    let (al, au) = (inp.alpha_lower, inp.alpha_upper);
    let s = &inp.suprema.plant;
    let (dh, dhx, dhxi) = (triple.value, triple.grad_x, triple.grad_xi);
    let (norm_i_minus_c, norm_sc) = l1_norms(omega);

    let delta_mx = inp.suprema.metric_partials;
    let delta_du = inp.suprema.delta_u;
    let delta_b = s.input_matrix;
    let delta_psi_x = 2.0 * s.input_matrix_partials + delta_b * delta_mx / al;
    let feedback = inp.desired_input + rho * delta_du;
    let delta_xr_dot = s.drift + delta_b * (norm_i_minus_c * dh + feedback);
    let delta_x_dot = s.drift + delta_b * (2.0 * dh + feedback);
    let delta_x_tilde = (4.0 * inp.p_max * dh * (dhxi + dhx * delta_x_dot) / (inp.p_min * inp.q_min)
        + 4.0 * dh * dh / inp.p_min)
        .sqrt();
    let delta_eta_tilde = (s.pinv_partials * delta_x_dot + (norm_sc + inp.a_m_norm) * s.pinv) * delta_x_tilde;
    let delta_theta = delta_b * au * delta_eta_tilde / lam;
    let delta_gamma_dot = (au / al).sqrt()
        * (s.drift_jacobian + (dh + feedback) * s.input_column_partials + (dhx + al.sqrt() * delta_du / au.sqrt()) * delta_b);
    let delta_psi_dot = au
        * (delta_b * delta_gamma_dot + delta_b * delta_mx * delta_x_dot / (au * al).sqrt() + s.input_matrix_partials * delta_x_dot);

    let bracket = dh / pole + (dhxi + dhx * delta_xr_dot) / (2.0 * lam);
    let k1 = 2.0 * rho * delta_b * (au / al) * bracket;
    let k2 = au * delta_psi_x * (au / al) * bracket;
    let k3 = au * dhx * (4.0 * lam * delta_b + delta_psi_dot) / lam;
    let k4 = delta_theta;
    let kappa = [k1, k2, k3, k4];
    if kappa.iter().any(|k| !k.is_finite()) {
        return Err(Error::NonFinite("certificate constants"));
    }
    Ok(CertificateConstants {
        triple,
        omega,
        rho,
        delta_f: s.drift,
        delta_fx: s.drift_jacobian,
        delta_b,
        delta_bx: s.input_matrix_partials,
        delta_b_cols: s.input_column_partials,
        delta_pinv: s.pinv,
        delta_pinv_x: s.pinv_partials,
        delta_ud: inp.desired_input,
        delta_mx,
        delta_psi_x,
        delta_delta_u: delta_du,
        delta_xr_dot,
        delta_x_dot,
        delta_x_tilde,
        delta_eta_tilde,
        delta_theta,
        delta_psi_dot,
        delta_gamma_dot,
        kappa,
        zeta: [k1 / omega, k2 / omega, k3 / omega],
    })
}

/// Signed margins of the three conditions; all positive when feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub feasible: bool,
    /// `rho_r^2 - E0/alpha - zeta1`, `alpha - zeta2 - zeta3`,
    /// `sqrt(Gamma) - kappa4 / (rho_a (alpha - zeta2 - zeta3))`.
    /// The last is `None` when the second condition already fails.
    pub margins: [Option<f64>; 3],
    pub rho: f64,
    pub rho_a: f64,
    pub energy0: f64,
    pub zeta1: f64,
    pub lambda: f64,
    pub alpha_lower: f64,
    pub gamma: f64,
}

pub fn check_conditions(
    constants: &CertificateConstants,
    alpha_lower: f64,
    lambda: f64,
    tube: &TubeParams,
    energy0: f64,
    gamma: f64,
) -> Result<CertificateVerdict> {
    if !(gamma > 0.0) || !(energy0 >= 0.0) {
        return Err(Error::InvalidParameter("need Gamma > 0 and E0 >= 0".into()));
    }
    let [z1, z2, z3] = constants.zeta;
    let m1 = tube.rho_r * tube.rho_r - energy0 / alpha_lower - z1;
    let m2 = alpha_lower - z2 - z3;
    let m3 = (m2 > 0.0).then(|| gamma.sqrt() - constants.kappa[3] / (tube.rho_a * m2));
    let feasible = m1 >= 0.0 && m2 > 0.0 && m3.is_some_and(|m| m > 0.0);
    Ok(CertificateVerdict {
        feasible,
        margins: [Some(m1), Some(m2), m3],
        rho: tube.rho,
        rho_a: tube.rho_a,
        energy0,
        zeta1: z1,
        lambda,
        alpha_lower,
        gamma,
    })
}

impl CertificateVerdict {
    /// `delta(T) = sqrt(exp(-2 lambda T) E0 / alpha + zeta1) + rho_a`
    pub fn uub(&self, t: f64) -> f64 {
        ((-2.0 * self.lambda * t).exp() * self.energy0 / self.alpha_lower + self.zeta1).sqrt() + self.rho_a
    }

    /// Sampled UUB curve; refuses infeasible certificates.
    pub fn uub_curve(&self, times: &[f64]) -> Result<Vec<(f64, f64)>> {
        if !self.feasible {
            return Err(Error::Infeasible("no ultimate bound without a feasible certificate".into()));
        }
        Ok(times.iter().map(|&t| (t, self.uub(t))).collect())
    }

    /// `sqrt(zeta1) + rho_a`
    pub fn uub_limit(&self) -> f64 {
        self.zeta1.sqrt() + self.rho_a
    }
}

/// Where the uncertainty triple came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleSource {
    Conservative,
    Learned { n: usize },
}

/// Serialized certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub source: TripleSource,
    pub tube: TubeParams,
    pub constants: CertificateConstants,
    pub verdict: CertificateVerdict,
    pub uub: Vec<(f64, f64)>,
}

impl CertificateReport {
    pub fn new(source: TripleSource, tube: TubeParams, constants: CertificateConstants, verdict: CertificateVerdict, horizon: f64) -> Self {
        let uub = (0..=20).map(|i| {
            let t = horizon * i as f64 / 20.0;
            (t, verdict.uub(t))
        });
        CertificateReport {
            source,
            tube,
            constants,
            uub: uub.collect(),
            verdict,
        }
    }
}
