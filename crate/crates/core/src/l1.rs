//! L1 adaptive element: state predictor, projection-based adaptation and a
//! first-order low-pass control law.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Matrix, Vector};
use crate::error::{check_dim, check_finite, Error, Result};

/// Solves `A^T P + P A = -Q` by vectorisation.
pub fn lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    check_dim("lyapunov A", n, a.ncols())?;
    check_dim("lyapunov Q", n, q.nrows())?;
    let id = Matrix::identity(n, n);
    let at = a.transpose();
    // vec(A^T P) = (I kron A^T) vec P, vec(P A) = (A^T kron I) vec P
    let k = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("Lyapunov operator is singular".into()))?;
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Predictor/adaptation/filter settings.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Params {
    pub a_m: Matrix,
    pub q: Matrix,
    pub p: Matrix,
    pub gamma: f64,
    pub omega: f64,
    /// Projection radius (`Delta_h`, or the learned bound).
    pub radius: f64,
    pub eps_proj: f64,
}

impl L1Params {
    pub fn new(a_m: Matrix, q: Matrix, gamma: f64, omega: f64, radius: f64, eps_proj: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(omega > 0.0) || !(radius > 0.0) || !(eps_proj > 0.0) {
            return Err(Error::InvalidParameter("L1 needs gamma, omega, radius, eps_proj > 0".into()));
        }
        let eig = a_m.complex_eigenvalues();
        if eig.iter().any(|e| !(e.re < 0.0)) {
            return Err(Error::InvalidParameter("A_m must be Hurwitz".into()));
        }
        let qs = (&q + q.transpose()) * 0.5;
        if !(qs.clone().symmetric_eigenvalues().min() > 0.0) {
            return Err(Error::InvalidParameter("Q must be positive definite".into()));
        }
        let p = lyapunov(&a_m, &qs)?;
        Ok(L1Params {
            a_m,
            q: qs,
            p,
            gamma,
            omega,
            radius,
            eps_proj,
        })
    }

    /// `A_m = -scale I`, `Q = I`.
    pub fn diagonal(n: usize, a_m_scale: f64, gamma: f64, omega: f64, radius: f64, eps_proj: f64) -> Result<Self> {
        Self::new(
            Matrix::identity(n, n) * -a_m_scale,
            Matrix::identity(n, n),
            gamma,
            omega,
            radius,
            eps_proj,
        )
    }

    pub fn lyapunov_residual(&self) -> f64 {
        (self.a_m.transpose() * &self.p + &self.p * &self.a_m + &self.q).amax()
    }
}

/// Smooth projection onto `||mu|| <= radius sqrt(1 + eps)`.
pub fn projection(mu: &Vector, y: &Vector, radius: f64, eps: f64) -> Vector {
    let nn = mu.norm_squared();
    let r2 = radius * radius;
    let g = (nn - r2) / (eps * r2);
    let push = mu.dot(y);
    if g > 0.0 && push > 0.0 && nn > 0.0 {
        y - mu * (g * push / nn)
    } else {
        y.clone()
    }
}

/// Predictor right-hand side `F(x, u + mu) + A_m (x_hat - x)` where `model`
/// is the nominal or learned vector field evaluated at the plant state.
pub fn predictor_derivative<F>(params: &L1Params, model: F, x: &Vector, u: &Vector, mu: &Vector, x_hat: &Vector) -> Vector
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    model(x, &(u + mu)) + &params.a_m * (x_hat - x)
}

/// `Gamma Proj(mu, -B^T P x_tilde)`
pub fn adaptation_derivative(params: &L1Params, b: &Matrix, x_tilde: &Vector, mu: &Vector) -> Vector {
    let y = -(b.transpose() * (&params.p * x_tilde));
    projection(mu, &y, params.radius, params.eps_proj) * params.gamma
}

/// Exact step of `u_a' = -omega u_a - omega mu` with `mu` held.
pub fn filter_step(u_a: &Vector, mu: &Vector, omega: f64, dt: f64) -> Result<Vector> {
    if !(dt > 0.0) || !(omega > 0.0) {
        return Err(Error::InvalidParameter("filter step needs dt, omega > 0".into()));
    }
    let a = (-omega * dt).exp();
    Ok(u_a * a - mu * (-(-omega * dt).exp_m1()))
}

/// `(||I - C||_L1, ||s C||_L1)` for `C(s) = omega / (s + omega)`.
pub fn l1_norms(omega: f64) -> (f64, f64) {
    (2.0, 2.0 * omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1State {
    pub x_hat: Vector,
    pub mu_hat: Vector,
    pub u_a: Vector,
}

/// Running adaptive element; the plant state and input are held over each
/// control period while the predictor/adaptation pair is sub-stepped.
#[derive(Debug, Clone)]
pub struct L1Adaptive {
    pub params: L1Params,
    pub state: L1State,
    pub substeps: usize,
}

impl L1Adaptive {
    pub fn new(params: L1Params, x0: &Vector, m: usize) -> Self {
        L1Adaptive {
            params,
            state: L1State {
                x_hat: x0.clone(),
                mu_hat: Vector::zeros(m),
                u_a: Vector::zeros(m),
            },
            substeps: 1,
        }
    }

    /// Smallest power-of-ten sub-step count keeping the fast
    /// predictor/adaptation loop well inside the RK4 stability region.
    pub fn choose_substeps(&mut self, b_norm: f64, dt: f64) -> usize {
        let p_max = self.params.p.clone().symmetric_eigenvalues().max();
        let a_max = self.params.a_m.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        let rate = (self.params.gamma * p_max * b_norm * b_norm).sqrt().max(a_max);
        let mut k = 1usize;
        while dt / k as f64 * rate > 0.5 && k < 1_000_000 {
            k *= 10;
        }
        self.substeps = k;
        k
    }

    pub fn x_tilde(&self, x: &Vector) -> Vector {
        &self.state.x_hat - x
    }

    /// Advances predictor, estimate and filter over one control period.
    /// `drift` is the model value `F(x, u)` at the held plant state with
    /// zero estimate, `b` the input matrix there.
    pub fn advance(&mut self, drift: &Vector, b: &Matrix, x: &Vector, dt: f64) -> Result<()> {
        self.advance_interpolated([drift, drift], b, [x, x], dt)
    }

    /// As [`advance`](Self::advance) with the plant state and model value
    /// moving linearly from the first to the second entry over the period.
    /// A plant that jumps at the period boundary would kick the fast
    /// predictor/adaptation loop at large `Gamma`.
    pub fn advance_interpolated(&mut self, drift: [&Vector; 2], b: &Matrix, x: [&Vector; 2], dt: f64) -> Result<()> {
        let h = dt / self.substeps as f64;
        let p = &self.params;
        let rhs = |s: f64, xh: &Vector, mu: &Vector| -> (Vector, Vector) {
            let w = s / dt;
            let xs = x[0] * (1.0 - w) + x[1] * w;
            let xt = xh - xs;
            let dx = drift[0] * (1.0 - w) + drift[1] * w + b * mu + &p.a_m * &xt;
            let dm = adaptation_derivative(p, b, &xt, mu);
            (dx, dm)
        };
        let mut xh = self.state.x_hat.clone();
        let mut mu = self.state.mu_hat.clone();
        for i in 0..self.substeps {
            let s = i as f64 * h;
            let (k1x, k1m) = rhs(s, &xh, &mu);
            let (k2x, k2m) = rhs(s + 0.5 * h, &(&xh + &k1x * (0.5 * h)), &(&mu + &k1m * (0.5 * h)));
            let (k3x, k3m) = rhs(s + 0.5 * h, &(&xh + &k2x * (0.5 * h)), &(&mu + &k2m * (0.5 * h)));
            let (k4x, k4m) = rhs(s + h, &(&xh + &k3x * h), &(&mu + &k3m * h));
            xh += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            mu += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        }
        check_finite("predictor state", xh.as_slice())?;
        check_finite("uncertainty estimate", mu.as_slice())?;
        self.state.u_a = filter_step(&self.state.u_a, &mu, p.omega, dt)?;
        self.state.x_hat = xh;
        self.state.mu_hat = mu;
        Ok(())
    }
}
