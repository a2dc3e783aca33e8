use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{eval_actual, ControlAffine, StateBox, UncertaintyField, Vector};
use crate::error::{check_dim, Error, Result};
use crate::sampling::latin_hypercube;

/// Training inputs `z = (xi, x)` (columns) and noisy targets (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(l + n) x N`
    pub inputs: DMatrix<f64>,
    /// `m x N`
    pub targets: DMatrix<f64>,
    pub noise_std: f64,
    /// Number of leading input coordinates that belong to `xi`.
    pub param_dim: usize,
}

impl Dataset {
    pub fn empty(param_dim: usize, state_dim: usize, output_dim: usize, noise_std: f64) -> Self {
        Dataset {
            inputs: DMatrix::zeros(param_dim + state_dim, 0),
            targets: DMatrix::zeros(output_dim, 0),
            noise_std,
            param_dim,
        }
    }

    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, noise_std: f64, param_dim: usize) -> Result<Self> {
        check_dim("dataset columns", inputs.ncols(), targets.ncols())?;
        if param_dim > inputs.nrows() {
            return Err(Error::InvalidParameter("param_dim exceeds input dimension".into()));
        }
        Ok(Dataset {
            inputs,
            targets,
            noise_std,
            param_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.nrows()
    }

    /// Concatenate columns of `other` after ours.
    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        check_dim("appended inputs", self.input_dim(), other.input_dim())?;
        check_dim("appended targets", self.output_dim(), other.output_dim())?;
        let n = self.len();
        let k = other.len();
        let mut z = DMatrix::zeros(self.input_dim(), n + k);
        let mut y = DMatrix::zeros(self.output_dim(), n + k);
        z.columns_mut(0, n).copy_from(&self.inputs);
        z.columns_mut(n, k).copy_from(&other.inputs);
        y.columns_mut(0, n).copy_from(&self.targets);
        y.columns_mut(n, k).copy_from(&other.targets);
        self.inputs = z;
        self.targets = y;
        Ok(())
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs.columns(0, n).into_owned(),
            targets: self.targets.columns(0, n).into_owned(),
            noise_std: self.noise_std,
            param_dim: self.param_dim,
        }
    }

    /// CSV with header `z_1..z_d,y_1..y_m`, one sample per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header: Vec<String> = (1..=self.input_dim())
            .map(|i| format!("z_{i}"))
            .chain((1..=self.output_dim()).map(|i| format!("y_{i}")))
            .collect();
        wr.write_record(&header)?;
        for j in 0..self.len() {
            let rec: Vec<String> = self
                .inputs
                .column(j)
                .iter()
                .chain(self.targets.column(j).iter())
                .map(|v| format!("{v:e}"))
                .collect();
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, noise_std: f64, param_dim: usize) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let d = header.iter().filter(|h| h.starts_with("z_")).count();
        let m = header.iter().filter(|h| h.starts_with("y_")).count();
        if d + m != header.len() || header.iter().take(d).any(|h| !h.starts_with("z_")) {
            return Err(Error::Config("dataset header must be z_1..z_d followed by y_1..y_m".into()));
        }
        let mut z = Vec::new();
        let mut y = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("dataset value: {e}")))?;
            check_dim("dataset row", d + m, vals.len())?;
            z.extend_from_slice(&vals[..d]);
            y.extend_from_slice(&vals[d..]);
        }
        let n = z.len() / d.max(1);
        Dataset::new(
            DMatrix::from_column_slice(d, n, &z),
            DMatrix::from_column_slice(m, n, &y),
            noise_std,
            param_dim,
        )
    }
}

/// Noisy measurements `y_k = B^+(x_k)(x'_k - f(x_k)) - u_k + kappa` with
/// `x'_k` from the true plant.
pub fn generate_measurements(
    sys: &dyn ControlAffine,
    unc: &dyn UncertaintyField,
    states: &[Vector],
    controls: &[Vector],
    params: &[Vector],
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    check_dim("controls", states.len(), controls.len())?;
    check_dim("parameters", states.len(), params.len())?;
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidParameter("noise std must be nonnegative".into()));
    }
    let n = sys.state_dim();
    let m = sys.input_dim();
    let l = unc.param_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(l + n, states.len());
    let mut y = DMatrix::zeros(m, states.len());
    for (k, ((x, u), xi)) in states.iter().zip(controls).zip(params).enumerate() {
        let xdot = eval_actual(sys, unc, xi, x, u)?;
        let pinv = sys.input_pinv(x)?;
        let mut target = pinv * (xdot - sys.drift(x)) - u;
        for c in target.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *c += noise_std * e;
        }
        z.view_mut((0, k), (l, 1)).copy_from(xi);
        z.view_mut((l, k), (n, 1)).copy_from(x);
        y.set_column(k, &target);
    }
    // a zero noise level is allowed for measurements but not for fitting
    Dataset::new(z, y, noise_std, l)
}

/// Latin hypercube states and parameters over `X_xi x X`, measured with
/// zero control.
pub fn collect_lhs(
    sys: &dyn ControlAffine,
    unc: &dyn UncertaintyField,
    domain: &StateBox,
    count: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    let l = unc.param_dim();
    let n = sys.state_dim();
    check_dim("sampling domain", l + n, domain.dim())?;
    let pts = latin_hypercube(domain, count, seed)?;
    let params: Vec<Vector> = (0..count).map(|j| pts.column(j).rows(0, l).into_owned()).collect();
    let states: Vec<Vector> = (0..count).map(|j| pts.column(j).rows(l, n).into_owned()).collect();
    let controls = vec![Vector::zeros(sys.input_dim()); count];
    generate_measurements(sys, unc, &states, &controls, &params, noise_std, seed.wrapping_add(0x9e37_79b9))
}
