//! Control-affine plants `x' = f(x) + B(x)(u + h(xi, x))`, the planar
//! quadrotor instance and fixed-step integration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::sampling::halton;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Nominal dynamics `f(x) + B(x) u`.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift(&self, x: &Vector) -> Vector;
    fn drift_jacobian(&self, x: &Vector) -> Matrix;
    fn input_matrix(&self, x: &Vector) -> Matrix;
    /// `dB/dx_i` for every state coordinate `i`.
    fn input_matrix_partials(&self, x: &Vector) -> Vec<Matrix>;

    /// Left pseudoinverse `(B^T B)^-1 B^T`.
    fn input_pinv(&self, x: &Vector) -> Result<Matrix> {
        let b = self.input_matrix(x);
        let gram = b.transpose() * &b;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::RankDeficient(format!("{:?}", x.as_slice())))?;
        Ok(chol.solve(&b.transpose()))
    }

    /// `dB^+/dx_i` from the derivative of the left pseudoinverse.
    fn input_pinv_partials(&self, x: &Vector) -> Result<Vec<Matrix>> {
        let b = self.input_matrix(x);
        let pinv = self.input_pinv(x)?;
        let gram_inv = (b.transpose() * &b)
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient(format!("{:?}", x.as_slice())))?;
        let n = self.state_dim();
        let proj = Matrix::identity(n, n) - &b * &pinv;
        Ok(self
            .input_matrix_partials(x)
            .iter()
            .map(|db| -&pinv * db * &pinv + &gram_inv * db.transpose() * &proj)
            .collect())
    }
}

/// Uncertainty `h(xi, x)` entering through the input channels.
pub trait UncertaintyField: Send + Sync {
    fn output_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn value(&self, xi: &Vector, x: &Vector) -> Vector;
    fn jacobian_x(&self, xi: &Vector, x: &Vector) -> Matrix;
    fn jacobian_xi(&self, xi: &Vector, x: &Vector) -> Matrix;
}

/// Anything that adds a correction to the input channels: the true
/// uncertainty, or a learned mean.
pub trait InputCorrection: Send + Sync {
    fn correction(&self, xi: &Vector, x: &Vector) -> Vector;
}

impl<T: UncertaintyField> InputCorrection for T {
    fn correction(&self, xi: &Vector, x: &Vector) -> Vector {
        self.value(xi, x)
    }
}

/// Exogenous parameter signal `xi(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExogenousSignal {
    /// `xi(t) = t`
    Time,
    Constant(Vec<f64>),
}

impl ExogenousSignal {
    pub fn dim(&self) -> usize {
        match self {
            ExogenousSignal::Time => 1,
            ExogenousSignal::Constant(v) => v.len(),
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        match self {
            ExogenousSignal::Time => Vector::from_element(1, t),
            ExogenousSignal::Constant(v) => Vector::from_column_slice(v),
        }
    }
}

pub fn eval_nominal(sys: &dyn ControlAffine, x: &Vector, u: &Vector) -> Result<Vector> {
    check_dim("state", sys.state_dim(), x.len())?;
    check_dim("input", sys.input_dim(), u.len())?;
    Ok(sys.drift(x) + sys.input_matrix(x) * u)
}

pub fn eval_actual(
    sys: &dyn ControlAffine,
    unc: &dyn UncertaintyField,
    xi: &Vector,
    x: &Vector,
    u: &Vector,
) -> Result<Vector> {
    check_dim("uncertainty parameter", unc.param_dim(), xi.len())?;
    check_dim("uncertainty output", sys.input_dim(), unc.output_dim())?;
    eval_nominal(sys, x, &(u + unc.value(xi, x)))
}

pub fn eval_learned<F>(sys: &dyn ControlAffine, mean: F, xi: &Vector, x: &Vector, u: &Vector) -> Result<Vector>
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    let nu = mean(xi, x);
    check_dim("mean output", sys.input_dim(), nu.len())?;
    eval_nominal(sys, x, &(u + nu))
}

/// Time-varying vector field `(t, x, u) -> x'` used by planners and the
/// simulator.
pub trait VectorField: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, t: f64, x: &Vector, u: &Vector) -> Vector;
}

/// `f(x) + B(x)(u + c(xi(t), x))` with an optional correction `c`.
pub struct ModelField<'a> {
    pub system: &'a dyn ControlAffine,
    pub correction: Option<&'a dyn InputCorrection>,
    pub signal: ExogenousSignal,
}

impl<'a> ModelField<'a> {
    pub fn nominal(system: &'a dyn ControlAffine) -> Self {
        ModelField {
            system,
            correction: None,
            signal: ExogenousSignal::Time,
        }
    }

    pub fn corrected(system: &'a dyn ControlAffine, correction: &'a dyn InputCorrection, signal: ExogenousSignal) -> Self {
        ModelField {
            system,
            correction: Some(correction),
            signal,
        }
    }

    pub fn input_matrix(&self, x: &Vector) -> Matrix {
        self.system.input_matrix(x)
    }
}

impl VectorField for ModelField<'_> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.system.input_dim()
    }
    fn eval(&self, t: f64, x: &Vector, u: &Vector) -> Vector {
        let mut v = u.clone();
        if let Some(c) = self.correction {
            v += c.correction(&self.signal.at(t), x);
        }
        self.system.drift(x) + self.system.input_matrix(x) * v
    }
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(deriv: F, t: f64, x: &Vector, dt: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Vector,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("rk4 step needs dt > 0, got {dt}")));
    }
    let k1 = deriv(t, x);
    check_finite("rk4 derivative", k1.as_slice())?;
    let k2 = deriv(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = deriv(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = deriv(t + dt, &(x + &k3 * dt));
    let out = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_finite("rk4 state", out.as_slice())?;
    Ok(out)
}

/// RK4 step of a vector field with the input held constant.
pub fn rk4_field(field: &dyn VectorField, t: f64, x: &Vector, u: &Vector, dt: f64) -> Result<Vector> {
    rk4_step(|s, y| field.eval(s, y, u), t, x, dt)
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vector,
    pub upper: Vector,
}

impl StateBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter("box needs lower < upper componentwise".into()));
        }
        Ok(StateBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn edges(&self) -> Vector {
        &self.upper - &self.lower
    }

    pub fn center(&self) -> Vector {
        (&self.upper + &self.lower) * 0.5
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Box shrunk by `margin` on every side; fails if it becomes empty.
    pub fn shrink(&self, margin: f64) -> Result<Self> {
        let m = Vector::from_element(self.dim(), margin);
        StateBox::new(&self.lower + &m, &self.upper - &m)
            .map_err(|_| Error::InvalidParameter(format!("box collapses when shrunk by {margin}")))
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &StateBox) -> StateBox {
        let cat = |a: &Vector, b: &Vector| Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
        StateBox {
            lower: cat(&self.lower, &other.lower),
            upper: cat(&self.upper, &other.upper),
        }
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vector {
        Vector::from_iterator(self.dim(), (0..self.dim()).map(|i| self.lower[i] + u[i] * (self.upper[i] - self.lower[i])))
    }

    /// `2^d` corners followed by `n_halton` Halton points.
    pub fn sample_points(&self, n_halton: usize) -> Vec<Vector> {
        let d = self.dim();
        let mut pts = Vec::new();
        if d <= 12 {
            for mask in 0..(1usize << d) {
                let u: Vec<f64> = (0..d).map(|i| ((mask >> i) & 1) as f64).collect();
                pts.push(self.from_unit(&u));
            }
        }
        pts.extend((1..=n_halton as u64).map(|i| self.from_unit(&halton(i, d))));
        pts
    }
}

/// Bounds on the uncertainty and its gradients: `(Delta, Delta_x, Delta_xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTriple {
    pub value: f64,
    pub grad_x: f64,
    pub grad_xi: f64,
}

impl UncertaintyTriple {
    pub const ZERO: UncertaintyTriple = UncertaintyTriple {
        value: 0.0,
        grad_x: 0.0,
        grad_xi: 0.0,
    };

    pub fn new(value: f64, grad_x: f64, grad_xi: f64) -> Self {
        UncertaintyTriple { value, grad_x, grad_xi }
    }

    /// Componentwise minimum.
    pub fn min(&self, other: &UncertaintyTriple) -> Self {
        UncertaintyTriple {
            value: self.value.min(other.value),
            grad_x: self.grad_x.min(other.grad_x),
            grad_xi: self.grad_xi.min(other.grad_xi),
        }
    }
}

/// Known conservative bounds on the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub drift: f64,
    pub drift_jacobian: f64,
    pub input_matrix: f64,
    pub input_matrix_partials: f64,
    pub input_column_partials: f64,
    pub uncertainty: UncertaintyTriple,
    pub pinv: f64,
    pub pinv_partials: f64,
    pub desired_input: f64,
    /// Per-channel bounds on the Hessian of `h_i` in `xi`.
    pub hessian_xi: Vec<f64>,
    /// Per-channel bounds on the Hessian of `h_i` in `x`.
    pub hessian_x: Vec<f64>,
}

impl ModelBounds {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.drift,
            self.drift_jacobian,
            self.input_matrix,
            self.input_matrix_partials,
            self.input_column_partials,
            self.uncertainty.value,
            self.uncertainty.grad_x,
            self.uncertainty.grad_xi,
            self.pinv,
            self.pinv_partials,
            self.desired_input,
        ];
        if scalars
            .iter()
            .chain(self.hessian_xi.iter())
            .chain(self.hessian_x.iter())
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::InvalidParameter("model bounds must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Suprema of the plant terms sampled over a set of states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantSuprema {
    pub drift: f64,
    pub drift_jacobian: f64,
    pub input_matrix: f64,
    pub input_matrix_partials: f64,
    pub input_column_partials: f64,
    pub pinv: f64,
    pub pinv_partials: f64,
}

impl PlantSuprema {
    pub fn accumulate(&mut self, sys: &dyn ControlAffine, x: &Vector) -> Result<()> {
        let b = sys.input_matrix(x);
        let db = sys.input_matrix_partials(x);
        let m = sys.input_dim();
        let n = sys.state_dim();
        // column j of B differentiated in x: n x n with columns dB/dx_i e_j
        let col_sum: f64 = (0..m)
            .map(|j| {
                let mut jac = Matrix::zeros(n, n);
                for (i, d) in db.iter().enumerate() {
                    jac.set_column(i, &d.column(j));
                }
                spectral_norm(&jac)
            })
            .sum();
        let pinv = sys.input_pinv(x)?;
        let dpinv: f64 = sys.input_pinv_partials(x)?.iter().map(spectral_norm).sum();
        self.drift = self.drift.max(sys.drift(x).norm());
        self.drift_jacobian = self.drift_jacobian.max(spectral_norm(&sys.drift_jacobian(x)));
        self.input_matrix = self.input_matrix.max(spectral_norm(&b));
        self.input_matrix_partials = self.input_matrix_partials.max(db.iter().map(spectral_norm).sum());
        self.input_column_partials = self.input_column_partials.max(col_sum);
        self.pinv = self.pinv.max(spectral_norm(&pinv));
        self.pinv_partials = self.pinv_partials.max(dpinv);
        Ok(())
    }
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Planar quadrotor; state `(p_x, p_z, theta, v_x, v_z, theta_dot)` with
/// body-frame velocities, input `(u_F, u_M)` per unit mass and inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarQuadrotor {
    pub gravity: f64,
}

impl Default for PlanarQuadrotor {
    fn default() -> Self {
        PlanarQuadrotor { gravity: 9.81 }
    }
}

impl PlanarQuadrotor {
    pub fn hover_input(&self) -> Vector {
        Vector::from_vec(vec![self.gravity, 0.0])
    }
}

impl ControlAffine for PlanarQuadrotor {
    fn state_dim(&self) -> usize {
        6
    }
    fn input_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &Vector) -> Vector {
        let (th, vx, vz, w) = (x[2], x[3], x[4], x[5]);
        let (s, c) = th.sin_cos();
        let g = self.gravity;
        Vector::from_vec(vec![
            vx * c - vz * s,
            vx * s + vz * c,
            w,
            vz * w - g * s,
            -vx * w - g * c,
            0.0,
        ])
    }

    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        let (th, vx, vz, w) = (x[2], x[3], x[4], x[5]);
        let (s, c) = th.sin_cos();
        let g = self.gravity;
        let mut a = Matrix::zeros(6, 6);
        a[(0, 2)] = -vx * s - vz * c;
        a[(0, 3)] = c;
        a[(0, 4)] = -s;
        a[(1, 2)] = vx * c - vz * s;
        a[(1, 3)] = s;
        a[(1, 4)] = c;
        a[(2, 5)] = 1.0;
        a[(3, 2)] = -g * c;
        a[(3, 4)] = w;
        a[(3, 5)] = vz;
        a[(4, 2)] = g * s;
        a[(4, 3)] = -w;
        a[(4, 5)] = -vx;
        a
    }

    fn input_matrix(&self, _x: &Vector) -> Matrix {
        let mut b = Matrix::zeros(6, 2);
        b[(4, 0)] = 1.0;
        b[(5, 1)] = 1.0;
        b
    }

    fn input_matrix_partials(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(6, 2); 6]
    }

    fn input_pinv(&self, _x: &Vector) -> Result<Matrix> {
        Ok(self.input_matrix(_x).transpose())
    }
}

/// `h(t, x) = (-1 - 0.1 (v_x^2 + v_z^2), 0.3 cos t)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadrotorUncertainty;

impl UncertaintyField for QuadrotorUncertainty {
    fn output_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn value(&self, xi: &Vector, x: &Vector) -> Vector {
        let (vx, vz) = (x[3], x[4]);
        Vector::from_vec(vec![-1.0 - 0.1 * (vx * vx + vz * vz), 0.3 * xi[0].cos()])
    }
    fn jacobian_x(&self, _xi: &Vector, x: &Vector) -> Matrix {
        let mut j = Matrix::zeros(2, 6);
        j[(0, 3)] = -0.2 * x[3];
        j[(0, 4)] = -0.2 * x[4];
        j
    }
    fn jacobian_xi(&self, xi: &Vector, _x: &Vector) -> Matrix {
        let mut j = Matrix::zeros(2, 1);
        j[(1, 0)] = -0.3 * xi[0].sin();
        j
    }
}

/// Linear time-invariant `x' = A x + B u`, handy for toy problems.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl ControlAffine for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn drift(&self, x: &Vector) -> Vector {
        &self.a * x
    }
    fn drift_jacobian(&self, _x: &Vector) -> Matrix {
        self.a.clone()
    }
    fn input_matrix(&self, _x: &Vector) -> Matrix {
        self.b.clone()
    }
    fn input_matrix_partials(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(self.b.nrows(), self.b.ncols()); self.a.nrows()]
    }
}

/// Plant parameters as stored in the JSON configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub state_box: BoxConfig,
    /// Range of the exogenous parameter (time for the quadrotor).
    pub xi_box: BoxConfig,
    pub bounds: BoundsConfig,
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConfig {
    pub fn build(&self) -> Result<StateBox> {
        StateBox::new(Vector::from_column_slice(&self.lower), Vector::from_column_slice(&self.upper))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub delta_h: f64,
    pub delta_hx: f64,
    pub delta_hxi: f64,
    pub hessian_x: Vec<f64>,
    pub hessian_xi: Vec<f64>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let p = 25.0;
        let (th, w) = (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_3);
        PlantConfig {
            n: 6,
            m: 2,
            gravity: 9.81,
            state_box: BoxConfig {
                lower: vec![-p, -p, -th, -2.0, -1.0, -w],
                upper: vec![p, p, th, 2.0, 1.0, w],
            },
            xi_box: BoxConfig {
                lower: vec![0.0],
                upper: vec![15.0],
            },
            bounds: BoundsConfig {
                delta_h: 2.0,
                delta_hx: 0.5,
                delta_hxi: 0.5,
                hessian_x: vec![0.5, 0.5],
                hessian_xi: vec![0.5, 0.5],
            },
        }
    }
}

/// Everything describing the quadrotor plant.
#[derive(Debug, Clone)]
pub struct QuadrotorSetup {
    pub system: PlanarQuadrotor,
    pub uncertainty: QuadrotorUncertainty,
    pub state_box: StateBox,
    pub xi_box: StateBox,
    pub bounds: ModelBounds,
}

impl QuadrotorSetup {
    /// Joint domain `X_xi x X` of the GP inputs.
    pub fn input_domain(&self) -> StateBox {
        self.xi_box.product(&self.state_box)
    }
}

impl PlantConfig {
    pub fn build(&self) -> Result<QuadrotorSetup> {
        if self.n != 6 || self.m != 2 {
            return Err(Error::Config(format!(
                "only the planar quadrotor (n=6, m=2) is built in, got n={} m={}",
                self.n, self.m
            )));
        }
        let state_box = self.state_box.build()?;
        check_dim("state box", 6, state_box.dim())?;
        let xi_box = self.xi_box.build()?;
        check_dim("xi box", 1, xi_box.dim())?;
        check_dim("hessian_x bounds", 2, self.bounds.hessian_x.len())?;
        check_dim("hessian_xi bounds", 2, self.bounds.hessian_xi.len())?;
        let system = PlanarQuadrotor { gravity: self.gravity };
        let mut sup = PlantSuprema::default();
        for x in state_box.sample_points(4096) {
            sup.accumulate(&system, &x)?;
        }
        let bounds = ModelBounds {
            drift: sup.drift,
            drift_jacobian: sup.drift_jacobian,
            input_matrix: sup.input_matrix,
            input_matrix_partials: sup.input_matrix_partials,
            input_column_partials: sup.input_column_partials,
            uncertainty: UncertaintyTriple::new(self.bounds.delta_h, self.bounds.delta_hx, self.bounds.delta_hxi),
            pinv: sup.pinv,
            pinv_partials: sup.pinv_partials,
            desired_input: 0.0,
            hessian_xi: self.bounds.hessian_xi.clone(),
            hessian_x: self.bounds.hessian_x.clone(),
        };
        bounds.validate()?;
        Ok(QuadrotorSetup {
            system,
            uncertainty: QuadrotorUncertainty,
            state_box,
            xi_box,
            bounds,
        })
    }
}

/// Quadrotor with the default workspace (positions within +-25 m).
pub fn planar_quadrotor() -> QuadrotorSetup {
    PlantConfig::default().build().expect("default plant config is valid")
}
