use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use super::data::Dataset;
use super::kernel::SquaredExponential;
use crate::dynamics::{InputCorrection, Vector};
use crate::error::{check_dim, Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
const VARIANCE_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone)]
struct Channel {
    kernel: SquaredExponential,
    /// Factor of `K + (sigma^2 + jitter) I`; `None` without data.
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Independent GP posterior per output channel.
#[derive(Debug, Clone)]
pub struct GpModel {
    data: Dataset,
    channels: Vec<Channel>,
    /// Training inputs as rows, for cache-friendly kernel sweeps.
    rows: Vec<Vec<f64>>,
}

/// Posterior of the gradient of every channel at one input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativePosterior {
    /// `m x l`
    pub mean_xi: DMatrix<f64>,
    /// `m x n`
    pub mean_x: DMatrix<f64>,
    /// Per channel `l x l`.
    pub cov_xi: Vec<DMatrix<f64>>,
    /// Per channel `n x n`.
    pub cov_x: Vec<DMatrix<f64>>,
    /// Marginal standard deviations `m x l`.
    pub std_xi: DMatrix<f64>,
    /// Marginal standard deviations `m x n`.
    pub std_x: DMatrix<f64>,
}

/// Posterior standard deviations needed by the uniform bounds, without the
/// full derivative covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadSummary {
    pub std: DVector<f64>,
    /// Per channel norm of the marginal std vector over the `xi` coordinates.
    pub grad_xi_std_norm: DVector<f64>,
    pub grad_x_std_norm: DVector<f64>,
}

fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= VARIANCE_FLOOR {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(v))
    }
}

impl GpModel {
    /// Condition one kernel per channel on `data`.
    pub fn fit(kernels: Vec<SquaredExponential>, data: Dataset) -> Result<Self> {
        check_dim("kernel count", data.output_dim(), kernels.len())?;
        if !(data.noise_std > 0.0) {
            return Err(Error::InvalidParameter("noise std must be positive".into()));
        }
        let d = data.input_dim();
        for k in &kernels {
            k.validate()?;
            check_dim("kernel lengthscales", d, k.dim())?;
        }
        let n = data.len();
        let var = data.noise_std * data.noise_std;
        let mut channels = Vec::with_capacity(kernels.len());
        for (i, kernel) in kernels.into_iter().enumerate() {
            if n == 0 {
                channels.push(Channel {
                    kernel,
                    chol: None,
                    alpha: DVector::zeros(0),
                    jitter: 0.0,
                });
                continue;
            }
            let gram = kernel.gram(&data.inputs);
            let mut jitter = 0.0;
            let chol = loop {
                let mut a = gram.clone();
                for j in 0..n {
                    a[(j, j)] += var + jitter;
                }
                if let Some(c) = a.cholesky() {
                    break c;
                }
                jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
                if jitter > JITTER_MAX {
                    return Err(Error::NotPositiveDefinite { jitter });
                }
            };
            let y: DVector<f64> = data.targets.row(i).transpose();
            let alpha = chol.solve(&y);
            channels.push(Channel {
                kernel,
                chol: Some(chol),
                alpha,
                jitter,
            });
        }
        let rows = (0..n).map(|j| data.inputs.column(j).iter().copied().collect()).collect();
        Ok(GpModel { data, channels, rows })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    pub fn output_dim(&self) -> usize {
        self.channels.len()
    }

    pub fn input_dim(&self) -> usize {
        self.data.input_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.data.param_dim
    }

    pub fn kernel(&self, channel: usize) -> &SquaredExponential {
        &self.channels[channel].kernel
    }

    pub fn weights(&self, channel: usize) -> &DVector<f64> {
        &self.channels[channel].alpha
    }

    pub fn jitter(&self, channel: usize) -> f64 {
        self.channels[channel].jitter
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        check_dim("GP input", self.input_dim(), z.len())
    }

    fn kernel_column(&self, ch: &Channel, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| ch.kernel.eval(z, r)))
    }

    /// Posterior mean of every channel.
    pub fn mean(&self, z: &[f64]) -> Vector {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|ch| {
                if ch.chol.is_none() {
                    return 0.0;
                }
                self.rows.iter().zip(ch.alpha.iter()).map(|(r, a)| ch.kernel.eval(z, r) * a).sum()
            }),
        )
    }

    /// Posterior mean and standard deviation per channel.
    pub fn posterior(&self, z: &[f64]) -> Result<(Vector, Vector)> {
        self.check_input(z)?;
        let m = self.output_dim();
        let mut mean = DVector::zeros(m);
        let mut std = DVector::zeros(m);
        for (i, ch) in self.channels.iter().enumerate() {
            let prior = ch.kernel.eval(z, z);
            match &ch.chol {
                None => std[i] = prior.sqrt(),
                Some(chol) => {
                    let k = self.kernel_column(ch, z);
                    mean[i] = k.dot(&ch.alpha);
                    let v = chol.l().solve_lower_triangular(&k).expect("triangular factor");
                    std[i] = clamp_variance(prior - v.norm_squared())?.sqrt();
                }
            }
        }
        Ok((mean, std))
    }

    /// Gradient posterior; the first `param_dim` input coordinates are `xi`.
    pub fn derivative_posterior(&self, z: &[f64]) -> Result<DerivativePosterior> {
        self.check_input(z)?;
        let m = self.output_dim();
        let d = self.input_dim();
        let l = self.param_dim();
        let n = d - l;
        let mut mean = DMatrix::zeros(m, d);
        let mut covs = Vec::with_capacity(m);
        for (i, ch) in self.channels.iter().enumerate() {
            let prior = ch.kernel.cross_hessian(z, z);
            let cov = match &ch.chol {
                None => prior,
                Some(chol) => {
                    // g[(j, a)] = dk(z, z_j)/dz_a
                    let mut g = DMatrix::zeros(self.rows.len(), d);
                    for (j, r) in self.rows.iter().enumerate() {
                        g.set_row(j, &ch.kernel.grad_first(z, r).transpose());
                    }
                    mean.set_row(i, &(g.transpose() * &ch.alpha).transpose());
                    let v = chol.l().solve_lower_triangular(&g).expect("triangular factor");
                    prior - v.transpose() * v
                }
            };
            covs.push(cov);
        }
        let mut std = DMatrix::zeros(m, d);
        for (i, c) in covs.iter().enumerate() {
            for a in 0..d {
                std[(i, a)] = clamp_variance(c[(a, a)])?.sqrt();
            }
        }
        Ok(DerivativePosterior {
            mean_xi: mean.columns(0, l).into_owned(),
            mean_x: mean.columns(l, n).into_owned(),
            cov_xi: covs.iter().map(|c| c.view((0, 0), (l, l)).into_owned()).collect(),
            cov_x: covs.iter().map(|c| c.view((l, l), (n, n)).into_owned()).collect(),
            std_xi: std.columns(0, l).into_owned(),
            std_x: std.columns(l, n).into_owned(),
        })
    }

    /// Posterior std of `h` and norms of the marginal gradient stds.
    pub fn spread(&self, z: &[f64]) -> Result<SpreadSummary> {
        self.check_input(z)?;
        let m = self.output_dim();
        let d = self.input_dim();
        let l = self.param_dim();
        let mut out = SpreadSummary {
            std: DVector::zeros(m),
            grad_xi_std_norm: DVector::zeros(m),
            grad_x_std_norm: DVector::zeros(m),
        };
        let nd = self.rows.len();
        for (i, ch) in self.channels.iter().enumerate() {
            let ls = &ch.kernel.lengthscales;
            let s = ch.kernel.signal_variance;
            let mut var = s;
            let mut dvar: Vec<f64> = ls.iter().map(|l| s / (l * l)).collect();
            if let Some(chol) = &ch.chol {
                // columns: k, then dk/dz_a
                let mut g = DMatrix::zeros(nd, d + 1);
                for (j, r) in self.rows.iter().enumerate() {
                    let kv = ch.kernel.eval(z, r);
                    g[(j, 0)] = kv;
                    for a in 0..d {
                        g[(j, a + 1)] = -kv * (z[a] - r[a]) / (ls[a] * ls[a]);
                    }
                }
                let v = chol.l().solve_lower_triangular(&g).expect("triangular factor");
                var -= v.column(0).norm_squared();
                for a in 0..d {
                    dvar[a] -= v.column(a + 1).norm_squared();
                }
            }
            out.std[i] = clamp_variance(var)?.sqrt();
            let mut sx = 0.0;
            let mut sxi = 0.0;
            for (a, dv) in dvar.iter().enumerate() {
                let v = clamp_variance(*dv)?;
                if a < l {
                    sxi += v;
                } else {
                    sx += v;
                }
            }
            out.grad_xi_std_norm[i] = sxi.sqrt();
            out.grad_x_std_norm[i] = sx.sqrt();
        }
        Ok(out)
    }

    /// Spectral norm of `(K + sigma^2 I)^-1` by inverse power iteration.
    pub fn inverse_gram_norm(&self, channel: usize) -> f64 {
        let Some(chol) = &self.channels[channel].chol else {
            return 0.0;
        };
        let n = self.len();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut est = 0.0;
        for _ in 0..50 {
            let w = chol.solve(&v);
            let next = w.norm();
            v = w / next;
            let done = (next - est).abs() <= 1e-8 * next;
            est = next;
            if done {
                break;
            }
        }
        est
    }

    /// Residual `|| (K + sigma^2 I) alpha - y ||` for a channel.
    pub fn solve_residual(&self, channel: usize) -> f64 {
        let ch = &self.channels[channel];
        if ch.chol.is_none() {
            return 0.0;
        }
        let mut a = ch.kernel.gram(&self.data.inputs);
        let var = self.data.noise_std.powi(2) + ch.jitter;
        for j in 0..self.len() {
            a[(j, j)] += var;
        }
        let y: DVector<f64> = self.data.targets.row(channel).transpose();
        (a * &ch.alpha - y).norm()
    }

    /// Log marginal likelihood of one channel.
    pub fn log_marginal_likelihood(&self, channel: usize) -> f64 {
        let ch = &self.channels[channel];
        let Some(chol) = &ch.chol else {
            return 0.0;
        };
        let y: DVector<f64> = self.data.targets.row(channel).transpose();
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * y.dot(&ch.alpha) - 0.5 * logdet - 0.5 * self.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

impl InputCorrection for GpModel {
    fn correction(&self, xi: &Vector, x: &Vector) -> Vector {
        let z: Vec<f64> = xi.iter().chain(x.iter()).copied().collect();
        self.mean(&z)
    }
}

/// Grid search of `(signal_variance, lengthscale multiplier)` by marginal
/// likelihood for one channel. Returns the best kernel; certificates never
/// use this.
pub fn select_hyperparameters(
    base: &SquaredExponential,
    data: &Dataset,
    channel: usize,
    variances: &[f64],
    scales: &[f64],
) -> Result<SquaredExponential> {
    let mut best: Option<(f64, SquaredExponential)> = None;
    for &s in variances {
        for &c in scales {
            let k = SquaredExponential::new(s, base.lengthscales.iter().map(|l| l * c).collect())?;
            let mut kernels = vec![base.clone(); data.output_dim()];
            kernels[channel] = k.clone();
            let lml = GpModel::fit(kernels, data.clone())?.log_marginal_likelihood(channel);
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, k));
            }
        }
    }
    best.map(|(_, k)| k)
        .ok_or_else(|| Error::InvalidParameter("empty hyperparameter grid".into()))
}
