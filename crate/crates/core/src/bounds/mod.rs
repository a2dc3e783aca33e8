//! High-probability uniform bounds on the remainder `h - nu_N` and its
//! gradients.
//!
//! All confidence scalings are assembled in log space so that covering
//! radii down to `1e-8` stay finite.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelBounds, StateBox, UncertaintyTriple};
use crate::error::{check_dim, Error, Result};
use crate::gp::{GpModel, KernelRegularity};

/// `log M(tau, Z)` with `M = prod_i ceil(e_i sqrt(d) / (2 tau))`: cubes of
/// side `2 tau / sqrt(d)` fit inside `tau`-balls.
pub fn covering_number_log(domain: &StateBox, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("covering radius must be positive, got {tau}")));
    }
    let d = domain.dim() as f64;
    Ok(domain
        .edges()
        .iter()
        .map(|e| (e * d.sqrt() / (2.0 * tau)).ceil().max(1.0).ln())
        .sum())
}

/// Covering radius, confidence level and the resulting scalings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringParams {
    pub tau: f64,
    pub delta: f64,
    /// `1 - (1 - delta)^(1/m)`
    pub delta_hat: f64,
    pub log_covering: f64,
    pub beta: f64,
    pub beta_xi: f64,
    pub beta_x: f64,
}

impl CoveringParams {
    pub fn new(domain: &StateBox, tau: f64, delta: f64, m: usize, l: usize, n: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        check_dim("bound domain", l + n, domain.dim())?;
        let log_covering = covering_number_log(domain, tau)?;
        let (beta, beta_xi, beta_x) = beta_terms(log_covering, m, l, n, delta);
        Ok(CoveringParams {
            tau,
            delta,
            delta_hat: delta_hat(delta, m),
            log_covering,
            beta,
            beta_xi,
            beta_x,
        })
    }
}

pub fn delta_hat(delta: f64, m: usize) -> f64 {
    -((-delta).ln_1p() / m as f64).exp_m1()
}

/// `(beta, beta_xi, beta_x)` from `log M`.
pub fn beta_terms(log_covering: f64, m: usize, l: usize, n: usize, delta: f64) -> (f64, f64, f64) {
    let dh = delta_hat(delta, m);
    let scaled = |k: usize| {
        if k == 0 {
            0.0
        } else {
            2.0 * ((k as f64 * m as f64).ln() + log_covering - dh.ln())
        }
    };
    let beta = 2.0 * ((m as f64).ln() + log_covering - delta.ln());
    (beta.max(0.0), scaled(l).max(0.0), scaled(n).max(0.0))
}

/// Lipschitz constants of the posterior mean and moduli of continuity of
/// the posterior spreads. Moduli have the form `sqrt(c r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityConstants {
    pub mean_lipschitz: f64,
    pub modulus_coeff: f64,
    pub grad_xi_mean_lipschitz: Vec<f64>,
    pub grad_x_mean_lipschitz: Vec<f64>,
    pub grad_xi_modulus_coeff: Vec<f64>,
    pub grad_x_modulus_coeff: Vec<f64>,
    pub regularity: Vec<KernelRegularity>,
}

impl ContinuityConstants {
    pub fn new(model: &GpModel) -> Self {
        let n = model.len() as f64;
        let l = model.param_dim();
        let regs: Vec<KernelRegularity> = (0..model.output_dim()).map(|i| model.kernel(i).regularity(l)).collect();
        let inv_norms: Vec<f64> = (0..model.output_dim()).map(|i| model.inverse_gram_norm(i)).collect();
        let alpha_norms: Vec<f64> = (0..model.output_dim()).map(|i| model.weights(i).norm()).collect();
        let mean_lipschitz = (n * regs
            .iter()
            .zip(&alpha_norms)
            .map(|(r, a)| r.lipschitz.powi(2) * a * a)
            .sum::<f64>())
        .sqrt();
        let modulus_coeff = 2.0
            * regs
                .iter()
                .zip(&inv_norms)
                .map(|(r, inv)| r.lipschitz * (1.0 + n * inv * r.max_value))
                .sum::<f64>();
        let per = |f: &dyn Fn(&KernelRegularity, f64, f64) -> f64| -> Vec<f64> {
            regs.iter()
                .zip(inv_norms.iter().zip(&alpha_norms))
                .map(|(r, (inv, a))| f(r, *inv, *a))
                .collect()
        };
        ContinuityConstants {
            mean_lipschitz,
            modulus_coeff,
            grad_xi_mean_lipschitz: per(&|r, _, a| n.sqrt() * r.grad_xi_lipschitz * a),
            grad_x_mean_lipschitz: per(&|r, _, a| n.sqrt() * r.grad_x_lipschitz * a),
            grad_xi_modulus_coeff: per(&|r, inv, _| 2.0 * r.grad_xi_lipschitz * (1.0 + n * inv * r.max_partial_xi_sum())),
            grad_x_modulus_coeff: per(&|r, inv, _| 2.0 * r.grad_x_lipschitz * (1.0 + n * inv * r.max_partial_x_sum())),
            regularity: regs,
        }
    }

    pub fn modulus(&self, r: f64) -> f64 {
        (self.modulus_coeff * r).sqrt()
    }

    pub fn grad_xi_modulus(&self, channel: usize, r: f64) -> f64 {
        (self.grad_xi_modulus_coeff[channel] * r).sqrt()
    }

    pub fn grad_x_modulus(&self, channel: usize, r: f64) -> f64 {
        (self.grad_x_modulus_coeff[channel] * r).sqrt()
    }
}

/// Bounds at a single input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBounds {
    pub value: f64,
    pub grad_xi: f64,
    pub grad_x: f64,
}

/// Everything the pointwise bounds need besides the model.
#[derive(Debug, Clone)]
pub struct BoundContext {
    pub covering: CoveringParams,
    pub continuity: ContinuityConstants,
    /// Conservative bounds on `h` (gradients and Hessians enter the
    /// discretisation slack).
    pub prior: ModelBounds,
}

impl BoundContext {
    pub fn new(model: &GpModel, domain: &StateBox, tau: f64, delta: f64, prior: ModelBounds) -> Result<Self> {
        let l = model.param_dim();
        let covering = CoveringParams::new(domain, tau, delta, model.output_dim(), l, model.input_dim() - l)?;
        check_dim("hessian_xi bounds", model.output_dim(), prior.hessian_xi.len())?;
        check_dim("hessian_x bounds", model.output_dim(), prior.hessian_x.len())?;
        Ok(BoundContext {
            covering,
            continuity: ContinuityConstants::new(model),
            prior,
        })
    }

    /// `gamma(tau)`
    pub fn slack(&self) -> f64 {
        let tau = self.covering.tau;
        let t = &self.prior.uncertainty;
        (t.grad_x + t.grad_xi + self.continuity.mean_lipschitz) * tau + self.covering.beta.sqrt() * self.continuity.modulus(tau)
    }

    pub fn grad_xi_slack(&self, channel: usize) -> f64 {
        let tau = self.covering.tau;
        let c = &self.continuity;
        (self.prior.hessian_xi[channel] + c.grad_xi_mean_lipschitz[channel]) * tau
            + self.covering.beta_xi.sqrt() * c.grad_xi_modulus(channel, tau)
    }

    pub fn grad_x_slack(&self, channel: usize) -> f64 {
        let tau = self.covering.tau;
        let c = &self.continuity;
        (self.prior.hessian_x[channel] + c.grad_x_mean_lipschitz[channel]) * tau
            + self.covering.beta_x.sqrt() * c.grad_x_modulus(channel, tau)
    }
}

pub fn pointwise_bounds(model: &GpModel, ctx: &BoundContext, z: &[f64]) -> Result<PointwiseBounds> {
    let spread = model.spread(z)?;
    let cov = &ctx.covering;
    let value = cov.beta.sqrt() * spread.std.norm() + ctx.slack();
    let m = model.output_dim();
    let grad_xi = (0..m)
        .map(|i| (ctx.grad_xi_slack(i) + cov.beta_xi.sqrt() * spread.grad_xi_std_norm[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let grad_x = (0..m)
        .map(|i| (ctx.grad_x_slack(i) + cov.beta_x.sqrt() * spread.grad_x_std_norm[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PointwiseBounds { value, grad_xi, grad_x })
}

/// Learned bounds with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderBounds {
    pub triple: UncertaintyTriple,
    pub provenance: BoundProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundProvenance {
    pub delta: f64,
    pub tau: f64,
    pub n_data: usize,
    pub grid_resolution: Vec<usize>,
    pub grid_points: usize,
    pub refinement: String,
    pub log_covering: f64,
    pub beta: f64,
    pub beta_xi: f64,
    pub beta_x: f64,
    pub slack: f64,
}

impl RemainderBounds {
    /// Componentwise minimum with conservative bounds.
    pub fn capped(&self, conservative: &UncertaintyTriple) -> UncertaintyTriple {
        self.triple.min(conservative)
    }
}

fn grid_axis(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Suprema of the pointwise bounds over a tensor grid on `domain`, followed
/// by coordinate sweeps at a tenth of the grid spacing around each argmax.
pub fn remainder_bounds(model: &GpModel, ctx: &BoundContext, domain: &StateBox, resolution: &[usize]) -> Result<RemainderBounds> {
    let d = domain.dim();
    check_dim("grid resolution", d, resolution.len())?;
    check_dim("bound domain", model.input_dim(), d)?;
    if resolution.iter().any(|r| *r < 2) {
        return Err(Error::InvalidParameter("grid resolution must be at least 2 per dimension".into()));
    }
    let axes: Vec<Vec<f64>> = (0..d).map(|i| grid_axis(domain.lower[i], domain.upper[i], resolution[i])).collect();
    let total: usize = resolution.iter().product();
    let mut best: [(f64, Vec<f64>); 3] = std::array::from_fn(|_| (f64::NEG_INFINITY, vec![0.0; d]));
    let consider = |z: &[f64], best: &mut [(f64, Vec<f64>); 3]| -> Result<PointwiseBounds> {
        let p = pointwise_bounds(model, ctx, z)?;
        for (slot, v) in best.iter_mut().zip([p.value, p.grad_xi, p.grad_x]) {
            if v > slot.0 {
                *slot = (v, z.to_vec());
            }
        }
        Ok(p)
    };
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    for _ in 0..total {
        for i in 0..d {
            z[i] = axes[i][idx[i]];
        }
        consider(&z, &mut best)?;
        for i in 0..d {
            idx[i] += 1;
            if idx[i] < resolution[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    let spacing: Vec<f64> = (0..d).map(|i| (domain.upper[i] - domain.lower[i]) / (resolution[i] - 1) as f64).collect();
    for which in 0..3 {
        let mut centre = best[which].1.clone();
        for _pass in 0..2 {
            for i in 0..d {
                let mut top = (f64::NEG_INFINITY, centre[i]);
                for s in -10..=10 {
                    let mut p = centre.clone();
                    p[i] = (centre[i] + s as f64 * spacing[i] / 10.0).clamp(domain.lower[i], domain.upper[i]);
                    let v = consider(&p, &mut best)?;
                    let v = [v.value, v.grad_xi, v.grad_x][which];
                    if v > top.0 {
                        top = (v, p[i]);
                    }
                }
                centre[i] = top.1;
            }
        }
    }
    let cov = &ctx.covering;
    Ok(RemainderBounds {
        triple: UncertaintyTriple::new(best[0].0, best[2].0, best[1].0),
        provenance: BoundProvenance {
            delta: cov.delta,
            tau: cov.tau,
            n_data: model.len(),
            grid_resolution: resolution.to_vec(),
            grid_points: total,
            refinement: "two coordinate sweeps of 21 points at 1/10 grid spacing around each argmax".into(),
            log_covering: cov.log_covering,
            beta: cov.beta,
            beta_xi: cov.beta_xi,
            beta_x: cov.beta_x,
            slack: ctx.slack(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn unit(d: usize) -> StateBox {
        StateBox::new(DVector::zeros(d), DVector::from_element(d, 1.0)).unwrap()
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering_number_log(&unit(1), 0.5).unwrap(), 0.0);
        assert!((covering_number_log(&unit(2), 0.25).unwrap() - 9f64.ln()).abs() < 1e-12);
        assert!(covering_number_log(&unit(2), 0.0).is_err());
    }

    #[test]
    fn beta_algebra() {
        let (b, bxi, bx) = beta_terms(0.0, 1, 0, 1, (-2.0f64).exp());
        assert!((b - 4.0).abs() < 1e-12);
        assert_eq!(bxi, 0.0);
        assert!((bx - 4.0).abs() < 1e-12);
        let (b, bxi, _) = beta_terms(3.0, 2, 1, 6, 0.1);
        assert!(bxi >= b);
    }

    #[test]
    fn log_space_matches_direct() {
        for &(tau, d) in &[(0.3, 2usize), (0.05, 3), (0.05, 4)] {
            let bx = unit(d);
            let m: f64 = (0..d).map(|_| ((d as f64).sqrt() / (2.0 * tau)).ceil()).product();
            assert!(m <= 1e6);
            let cp = CoveringParams::new(&bx, tau, 0.1, 2, 1, d - 1).unwrap();
            let direct = 2.0 * (2.0 * m / 0.1f64).ln();
            assert!((cp.beta - direct).abs() < 1e-12);
            let dh = 1.0 - 0.9f64.sqrt();
            let direct_x = 2.0 * ((d - 1) as f64 * 2.0 * m / dh).ln();
            assert!((cp.beta_x - direct_x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(CoveringParams::new(&unit(1), 0.1, 1.0, 1, 0, 1).is_err());
        assert!(CoveringParams::new(&unit(1), 0.1, 0.0, 1, 0, 1).is_err());
    }
}
