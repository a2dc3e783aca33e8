use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlAffine, Matrix, Vector};
use crate::error::{check_dim, Error, Result};

/// One monomial `prod_k x_{c_k}^{e_k}` times a symmetric coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTerm {
    pub exponents: Vec<u32>,
    pub matrix: Vec<Vec<f64>>,
}

/// On-disk form of a polynomial dual metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub state_dim: usize,
    /// State coordinates the monomials are written in.
    pub coordinates: Vec<usize>,
    pub lambda: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub terms: Vec<MetricTerm>,
}

/// Control contraction metric stored through its dual `W(x) = M(x)^-1`,
/// polynomial in a few state coordinates.
#[derive(Debug, Clone)]
pub struct ContractionMetric {
    n: usize,
    coords: Vec<usize>,
    terms: Vec<(Vec<u32>, Matrix)>,
    pub lambda: f64,
    /// `alpha_lower I <= M(x)`
    pub alpha_lower: f64,
    /// `M(x) <= alpha_upper I`
    pub alpha_upper: f64,
}

impl ContractionMetric {
    pub fn from_file_data(f: MetricFile) -> Result<Self> {
        let n = f.state_dim;
        if n == 0 {
            return Err(Error::Config("metric state_dim must be positive".into()));
        }
        if f.coordinates.iter().any(|&c| c >= n) {
            return Err(Error::Config("metric coordinate out of range".into()));
        }
        if !(f.lambda > 0.0) || !(f.alpha_lower > 0.0) || !(f.alpha_upper >= f.alpha_lower) {
            return Err(Error::Config("metric needs lambda > 0 and 0 < alpha_lower <= alpha_upper".into()));
        }
        if f.terms.is_empty() {
            return Err(Error::Config("metric has no terms".into()));
        }
        let mut terms = Vec::with_capacity(f.terms.len());
        for t in f.terms {
            if t.exponents.len() != f.coordinates.len() {
                return Err(Error::Config("metric term exponent count differs from coordinates".into()));
            }
            if t.matrix.len() != n || t.matrix.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("metric term matrix must be {n}x{n}")));
            }
            let m = Matrix::from_fn(n, n, |i, j| t.matrix[i][j]);
            if (&m - m.transpose()).amax() > 1e-9 * (1.0 + m.amax()) {
                return Err(Error::Config("metric term matrix is not symmetric".into()));
            }
            terms.push((t.exponents, (&m + m.transpose()) * 0.5));
        }
        Ok(ContractionMetric {
            n,
            coords: f.coordinates,
            terms,
            lambda: f.lambda,
            alpha_lower: f.alpha_lower,
            alpha_upper: f.alpha_upper,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_file_data(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }

    pub fn to_file_data(&self) -> MetricFile {
        MetricFile {
            state_dim: self.n,
            coordinates: self.coords.clone(),
            lambda: self.lambda,
            alpha_lower: self.alpha_lower,
            alpha_upper: self.alpha_upper,
            terms: self
                .terms
                .iter()
                .map(|(e, m)| MetricTerm {
                    exponents: e.clone(),
                    matrix: (0..self.n).map(|i| m.row(i).iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }

    /// Constant metric `M = m0`; alpha bounds are its extreme eigenvalues.
    pub fn constant(m0: &Matrix, lambda: f64) -> Result<Self> {
        let n = m0.nrows();
        check_dim("constant metric", n, m0.ncols())?;
        let sym = (m0 + m0.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigenvalues();
        if !(eig.min() > 0.0) {
            return Err(Error::InvalidParameter("constant metric must be positive definite".into()));
        }
        let w = sym
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("constant metric is singular".into()))?;
        let w = (&w + w.transpose()) * 0.5;
        Self::from_file_data(MetricFile {
            state_dim: n,
            coordinates: vec![],
            lambda,
            alpha_lower: eig.min(),
            alpha_upper: eig.max(),
            terms: vec![MetricTerm {
                exponents: vec![],
                matrix: (0..n).map(|i| w.row(i).iter().copied().collect()).collect(),
            }],
        })
    }

    /// Fallback constant metric: the stabilising Riccati solution for the
    /// hover linearisation shifted by `lambda`, i.e. `M = P` with
    /// `(A + lambda I)^T P + P (A + lambda I) - P B R^-1 B^T P + Q = 0`.
    pub fn hover_riccati(sys: &dyn ControlAffine, x_trim: &Vector, lambda: f64, q: &Matrix, r: &Matrix) -> Result<Self> {
        let n = sys.state_dim();
        let a = sys.drift_jacobian(x_trim) + Matrix::identity(n, n) * lambda;
        let b = sys.input_matrix(x_trim);
        let p = solve_care(&a, &b, q, r)?;
        Self::constant(&p, lambda)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn coordinates(&self) -> &[usize] {
        &self.coords
    }

    fn monomial(&self, e: &[u32], x: &Vector) -> f64 {
        e.iter().zip(&self.coords).map(|(&p, &c)| x[c].powi(p as i32)).product()
    }

    /// Dual metric `W(x)`.
    pub fn dual(&self, x: &Vector) -> Matrix {
        let mut w = Matrix::zeros(self.n, self.n);
        for (e, m) in &self.terms {
            w += m * self.monomial(e, x);
        }
        w
    }

    /// `dW/dx_i` for every state coordinate (zero outside `coordinates`).
    pub fn dual_partials(&self, x: &Vector) -> Vec<Matrix> {
        let mut out = vec![Matrix::zeros(self.n, self.n); self.n];
        for (k, &c) in self.coords.iter().enumerate() {
            for (e, m) in &self.terms {
                if e[k] == 0 {
                    continue;
                }
                let mut d = e.clone();
                d[k] -= 1;
                out[c] += m * (e[k] as f64 * self.monomial(&d, x));
            }
        }
        out
    }

    /// `M(x) = W(x)^-1`.
    pub fn metric(&self, x: &Vector) -> Result<Matrix> {
        let w = self.dual(x);
        let chol = w
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter(format!("dual metric not positive definite at {:?}", x.as_slice())))?;
        let m = chol.inverse();
        Ok((&m + m.transpose()) * 0.5)
    }

    /// `M(x)` and `dM/dx_c` for the metric coordinates only, as `(c, dM)`.
    pub fn metric_with_partials(&self, x: &Vector) -> Result<(Matrix, Vec<(usize, Matrix)>)> {
        let m = self.metric(x)?;
        let dw = self.dual_partials(x);
        let parts = self.coords.iter().map(|&c| (c, -&m * &dw[c] * &m)).collect();
        Ok((m, parts))
    }

    /// `dM/dx_i` for every state coordinate.
    pub fn metric_partials(&self, x: &Vector) -> Result<Vec<Matrix>> {
        let (_, parts) = self.metric_with_partials(x)?;
        let mut out = vec![Matrix::zeros(self.n, self.n); self.n];
        for (c, d) in parts {
            out[c] = d;
        }
        Ok(out)
    }

    /// Directional derivative `sum_i v_i dW/dx_i`.
    pub fn dual_directional(&self, x: &Vector, v: &Vector) -> Matrix {
        let dw = self.dual_partials(x);
        let mut out = Matrix::zeros(self.n, self.n);
        for &c in &self.coords {
            out += &dw[c] * v[c];
        }
        out
    }

    /// Directional derivative `sum_i v_i dM/dx_i`.
    pub fn metric_directional(&self, x: &Vector, v: &Vector) -> Result<Matrix> {
        let m = self.metric(x)?;
        Ok(-&m * self.dual_directional(x, v) * &m)
    }

    /// Returns a copy with `extra(x)` added to the dual metric; used to build
    /// counterexamples. `extra` is given as extra polynomial terms.
    pub fn with_extra_terms(&self, extra: &[(Vec<u32>, Matrix)]) -> Result<Self> {
        let mut out = self.clone();
        for (e, m) in extra {
            check_dim("extra term exponents", self.coords.len(), e.len())?;
            check_dim("extra term matrix", self.n, m.nrows())?;
            out.terms.push((e.clone(), m.clone()));
        }
        Ok(out)
    }
}

/// Stabilising solution of the continuous algebraic Riccati equation
/// `A^T P + P A - P B R^-1 B^T P + Q = 0` via the matrix sign function of
/// the Hamiltonian.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("R is singular".into()))?;
    let g = b * rinv * b.transpose();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut z = h;
    for _ in 0..100 {
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        // determinant scaling speeds up the first iterations
        let det = z.determinant().abs();
        let c = if det > 0.0 && det.is_finite() {
            det.powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z * c + zi / c) * 0.5;
        let diff = (&next - &z).norm() / next.norm();
        z = next;
        if diff < 1e-13 {
            break;
        }
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let id = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &id));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidParameter(format!("Riccati solve: {e}")))?;
    Ok((&p + p.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PlanarQuadrotor;

    #[test]
    fn care_residual_small() {
        let sys = PlanarQuadrotor::default();
        let x = Vector::zeros(6);
        let a = sys.drift_jacobian(&x) + Matrix::identity(6, 6) * 0.5;
        let b = sys.input_matrix(&x);
        let q = Matrix::identity(6, 6);
        let r = Matrix::identity(2, 2);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        let res = a.transpose() * &p + &p * &a - &p * &b * b.transpose() * &p + &q;
        assert!(res.amax() < 1e-8, "{}", res.amax());
        assert!(p.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn partials_match_fd() {
        let m = ContractionMetric::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quadrotor_metric.json")).unwrap();
        let x = Vector::from_vec(vec![0.3, -1.0, 0.2, -0.7, 0.4, 0.1]);
        let parts = m.metric_partials(&x).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (m.metric(&xp).unwrap() - m.metric(&xm).unwrap()) / (2.0 * h);
            assert!((&fd - &parts[i]).amax() < 1e-5 * (1.0 + fd.amax()), "coord {i}");
        }
    }

    #[test]
    fn json_round_trip() {
        let m = ContractionMetric::constant(&Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 4.0])), 0.3).unwrap();
        let s = serde_json::to_string(&m.to_file_data()).unwrap();
        let back = ContractionMetric::from_json_str(&s).unwrap();
        assert!((back.metric(&Vector::zeros(2)).unwrap() - m.metric(&Vector::zeros(2)).unwrap()).amax() < 1e-12);
        assert_eq!(back.alpha_lower, 1.0);
        assert_eq!(back.alpha_upper, 4.0);
    }

    #[test]
    fn rejects_malformed() {
        let bad = r#"{"state_dim":2,"coordinates":[0],"lambda":0.5,"alpha_lower":1,"alpha_upper":2,
            "terms":[{"exponents":[0],"matrix":[[1,2],[0,1]]}]}"#;
        assert!(ContractionMetric::from_json_str(bad).is_err());
        let bad = r#"{"state_dim":2,"coordinates":[3],"lambda":0.5,"alpha_lower":1,"alpha_upper":2,"terms":[]}"#;
        assert!(ContractionMetric::from_json_str(bad).is_err());
    }
}
