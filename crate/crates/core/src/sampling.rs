//! Deterministic point sets: Halton sequences and Latin hypercube designs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::StateBox;
use crate::error::{Error, Result};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Halton point `index` (starting at 1 to skip the origin) in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    PRIMES[..dim]
        .iter()
        .map(|&p| radical_inverse(index, p as u64))
        .collect()
}

/// Latin hypercube design with one sample per stratum in every dimension.
/// Columns are samples.
pub fn latin_hypercube(domain: &StateBox, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("latin hypercube needs n >= 1".into()));
    }
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(d, n);
    let mut strata: Vec<usize> = (0..n).collect();
    for i in 0..d {
        strata.shuffle(&mut rng);
        let (lo, hi) = (domain.lower[i], domain.upper[i]);
        for (j, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            out[(i, j)] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    Ok(out)
}
