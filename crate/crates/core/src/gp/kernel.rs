use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::nelder_mead;

/// Anisotropic squared-exponential kernel
/// `k(a, b) = s exp(-0.5 sum_k (a_k - b_k)^2 / l_k^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponential {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
}

impl SquaredExponential {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let k = SquaredExponential {
            signal_variance,
            lengthscales,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0) || self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidParameter(
                "SE kernel needs positive signal variance and lengthscales".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let q: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let r = (x - y) / l;
                r * r
            })
            .sum();
        self.signal_variance * (-0.5 * q).exp()
    }

    /// Gradient in the first argument.
    pub fn grad_first(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        let k = self.eval(a, b);
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| -k * (a[i] - b[i]) / (self.lengthscales[i] * self.lengthscales[i])),
        )
    }

    /// Mixed second derivative `d^2 k / da_i db_j`.
    pub fn cross_hessian(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let k = self.eval(a, b);
        let w: Vec<f64> = (0..d)
            .map(|i| (a[i] - b[i]) / (self.lengthscales[i] * self.lengthscales[i]))
            .collect();
        DMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j {
                1.0 / (self.lengthscales[i] * self.lengthscales[i])
            } else {
                0.0
            };
            k * (diag - w[i] * w[j])
        })
    }

    /// Gram matrix over the columns of `z`.
    pub fn gram(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let n = z.ncols();
        let cols: Vec<Vec<f64>> = (0..n).map(|j| z.column(j).iter().copied().collect()).collect();
        DMatrix::from_fn(n, n, |i, j| self.eval(&cols[i], &cols[j]))
    }

    /// Regularity constants with the input split as `(xi, x)`, `xi` being
    /// the first `param_dim` coordinates.
    pub fn regularity(&self, param_dim: usize) -> KernelRegularity {
        let s = self.signal_variance;
        let e = (-0.5f64).exp();
        let lmin = self.lengthscales.iter().copied().fold(f64::INFINITY, f64::min);
        let d = self.dim();
        let xi: Vec<usize> = (0..param_dim).collect();
        let x: Vec<usize> = (param_dim..d).collect();
        KernelRegularity {
            max_value: s,
            lipschitz: s * e / lmin,
            grad_xi_lipschitz: self.gradient_block_lipschitz(&xi),
            grad_x_lipschitz: self.gradient_block_lipschitz(&x),
            max_partial: self.lengthscales.iter().map(|l| s * e / l).collect(),
            param_dim,
        }
    }

    /// Supremum over lags of the spectral norm of the rows `rows` of the
    /// Hessian of `k`, i.e. a Lipschitz constant of `z -> d k(z, z') / dz_rows`.
    ///
    /// With `u = r / l` the block is `k(u) D_S (u_S u^T - [I 0]) D`; the free
    /// coordinates only enter through `|u_R|`, so the search runs over
    /// `(u_S, |u_R|)`.
    pub fn gradient_block_lipschitz(&self, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let d = self.dim();
        let ls: Vec<f64> = rows.iter().map(|&i| self.lengthscales[i]).collect();
        let rest_min = (0..d)
            .filter(|i| !rows.contains(i))
            .map(|i| self.lengthscales[i])
            .fold(f64::INFINITY, f64::min);
        let ns = rows.len();
        let has_rest = rest_min.is_finite();
        let value = |p: &[f64]| -> f64 {
            let us = &p[..ns];
            let q = if has_rest { p[ns].abs() } else { 0.0 };
            let usq: f64 = us.iter().map(|v| v * v).sum();
            let w2 = if has_rest { (q / rest_min).powi(2) } else { 0.0 };
            // C = (u u^T - I) D^2 (u u^T - I) + |w|^2 u u^T, block = D C D
            let mut c = DMatrix::zeros(ns, ns);
            for i in 0..ns {
                for j in 0..ns {
                    let mut acc = 0.0;
                    for k in 0..ns {
                        let a = us[i] * us[k] - if i == k { 1.0 } else { 0.0 };
                        let b = us[k] * us[j] - if k == j { 1.0 } else { 0.0 };
                        acc += a * b / (ls[k] * ls[k]);
                    }
                    c[(i, j)] = (acc + w2 * us[i] * us[j]) / (ls[i] * ls[j]);
                }
            }
            let top = c.symmetric_eigenvalues().max().max(0.0);
            (-0.5 * (usq + q * q)).exp() * top.sqrt()
        };
        let dim = ns + usize::from(has_rest);
        let mut starts: Vec<Vec<f64>> = vec![vec![0.0; dim]];
        for k in 0..dim {
            for &a in &[0.5, 1.0, 1.5, 2.0, 3.0_f64.sqrt()] {
                let mut p = vec![0.0; dim];
                p[k] = a;
                starts.push(p);
            }
        }
        if has_rest {
            for k in 0..ns {
                let mut p = vec![0.0; dim];
                p[k] = 1.0;
                p[ns] = 1.0;
                starts.push(p);
            }
        }
        let best = starts
            .iter()
            .map(|p0| {
                let (_, v) = nelder_mead(|p| -value(p), p0, 0.3, 4000, 1e-14);
                -v
            })
            .fold(value(&vec![0.0; dim]), f64::max);
        self.signal_variance * best
    }
}

/// Regularity constants of a kernel over the whole input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRegularity {
    /// `sup k`
    pub max_value: f64,
    /// Lipschitz constant of `k` in either argument.
    pub lipschitz: f64,
    /// Lipschitz constant of `z -> dk(z, z')/dxi`.
    pub grad_xi_lipschitz: f64,
    /// Lipschitz constant of `z -> dk(z, z')/dx`.
    pub grad_x_lipschitz: f64,
    /// `sup |dk/dz_k|` per input coordinate.
    pub max_partial: Vec<f64>,
    pub param_dim: usize,
}

impl KernelRegularity {
    pub fn max_partial_xi_sum(&self) -> f64 {
        self.max_partial[..self.param_dim].iter().sum()
    }

    pub fn max_partial_x_sum(&self) -> f64 {
        self.max_partial[self.param_dim..].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(k: &SquaredExponential, a: &[f64], b: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..a.len())
            .map(|i| {
                let mut p = a.to_vec();
                let mut m = a.to_vec();
                p[i] += h;
                m[i] -= h;
                (k.eval(&p, b) - k.eval(&m, b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_fd() {
        let k = SquaredExponential::new(1.7, vec![0.4, 2.0, 1.1]).unwrap();
        let a = [0.3, -0.2, 1.0];
        let b = [0.1, 0.5, 0.2];
        let g = k.grad_first(&a, &b);
        for (x, y) in g.iter().zip(fd_grad(&k, &a, &b)) {
            assert!((x - y).abs() < 1e-8);
        }
        // cross hessian column j = d/db_j of grad_first
        let h = 1e-6;
        let ch = k.cross_hessian(&a, &b);
        for j in 0..3 {
            let mut bp = b;
            let mut bm = b;
            bp[j] += h;
            bm[j] -= h;
            let col = (k.grad_first(&a, &bp) - k.grad_first(&a, &bm)) / (2.0 * h);
            for i in 0..3 {
                assert!((ch[(i, j)] - col[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn isotropic_constants() {
        let k = SquaredExponential::isotropic(1.0, 1.0, 1).unwrap();
        let r = k.regularity(0);
        assert!((r.lipschitz - 0.6065306597126334).abs() < 1e-12);
        assert!((r.grad_x_lipschitz - 1.0).abs() < 1e-9);
        assert_eq!(r.grad_xi_lipschitz, 0.0);
        let k2 = SquaredExponential::isotropic(2.0, 1.0, 1).unwrap().regularity(0);
        assert!((k2.lipschitz - 2.0 * r.lipschitz).abs() < 1e-12);
        assert!((k2.grad_x_lipschitz - 2.0 * r.grad_x_lipschitz).abs() < 1e-9);
        assert!((k2.max_partial[0] - 2.0 * r.max_partial[0]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SquaredExponential::new(0.0, vec![1.0]).is_err());
        assert!(SquaredExponential::new(1.0, vec![1.0, -1.0]).is_err());
        assert!(SquaredExponential::new(1.0, vec![]).is_err());
    }

    #[test]
    fn symmetric_and_bounded() {
        let k = SquaredExponential::new(0.8, vec![0.5, 3.0]).unwrap();
        assert_eq!(k.eval(&[0.1, 0.2], &[0.1, 0.2]), 0.8);
        assert_eq!(k.eval(&[0.1, 0.2], &[0.4, -1.0]), k.eval(&[0.4, -1.0], &[0.1, 0.2]));
    }
}
