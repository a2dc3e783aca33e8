mod common;

use common::{dense_oracle, kernels, random_dataset};
use l1gp::dynamics::{planar_quadrotor, ControlAffine, QuadrotorUncertainty, UncertaintyField, Vector};
use l1gp::gp::{collect_lhs, generate_measurements, Dataset, GpModel, SquaredExponential};
use l1gp::sampling::latin_hypercube;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn posterior_matches_dense_inverse() {
    for (n, seed) in [(3, 1), (5, 2), (12, 3), (20, 4)] {
        let data = random_dataset(n, 3, 2, 0.1, seed);
        let model = GpModel::fit(kernels(3, 2), data.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (mean, std) = model.posterior(&z).unwrap();
            let dp = model.derivative_posterior(&z).unwrap();
            for ch in 0..2 {
                let (om, ov, ogm, ogc) = dense_oracle(model.kernel(ch), &data, ch, &z);
                assert!((mean[ch] - om).abs() < 1e-10);
                assert!((std[ch].powi(2) - ov).abs() < 1e-10);
                assert!((dp.mean_xi[(ch, 0)] - ogm[0]).abs() < 1e-10);
                for a in 0..2 {
                    assert!((dp.mean_x[(ch, a)] - ogm[a + 1]).abs() < 1e-10);
                    for b in 0..2 {
                        assert!((dp.cov_x[ch][(a, b)] - ogc[(a + 1, b + 1)]).abs() < 1e-10);
                    }
                }
                assert!((dp.cov_xi[ch][(0, 0)] - ogc[(0, 0)]).abs() < 1e-10);
            }
        }
        for ch in 0..2 {
            assert!(model.solve_residual(ch) <= 1e-8);
        }
    }
}

#[test]
fn derivative_mean_matches_finite_differences() {
    let data = random_dataset(15, 3, 2, 0.05, 9);
    let model = GpModel::fit(kernels(3, 2), data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = 1e-5;
    for _ in 0..50 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dp = model.derivative_posterior(&z).unwrap();
        for a in 0..3 {
            let mut p = z.clone();
            let mut m = z.clone();
            p[a] += h;
            m[a] -= h;
            let fd = (model.mean(&p) - model.mean(&m)) / (2.0 * h);
            for ch in 0..2 {
                let an = if a == 0 { dp.mean_xi[(ch, 0)] } else { dp.mean_x[(ch, a - 1)] };
                assert!((an - fd[ch]).abs() <= 1e-4 * an.abs().max(1e-3), "{an} vs {}", fd[ch]);
            }
        }
    }
}

#[test]
fn empty_dataset_is_the_prior() {
    let data = Dataset::empty(1, 2, 2, 0.1);
    let model = GpModel::fit(kernels(3, 2), data).unwrap();
    let z = [0.3, -0.4, 0.9];
    let (mean, std) = model.posterior(&z).unwrap();
    assert_eq!(mean, DVector::zeros(2));
    assert!((std[0] - 0.7f64.sqrt()).abs() < 1e-15);
    assert!((std[1] - 1.0).abs() < 1e-15);
    let dp = model.derivative_posterior(&z).unwrap();
    assert_eq!(dp.mean_x, DMatrix::zeros(2, 2));
    assert_eq!(dp.cov_x[0], model.kernel(0).cross_hessian(&z, &z).view((1, 1), (2, 2)).into_owned());
}

#[test]
fn interpolates_with_tiny_noise() {
    let z = DMatrix::from_column_slice(2, 1, &[0.2, 0.5]);
    let y = DMatrix::from_column_slice(1, 1, &[1.25]);
    let model = GpModel::fit(vec![SquaredExponential::isotropic(1.0, 1.0, 2).unwrap()], Dataset::new(z, y, 1e-6, 1).unwrap()).unwrap();
    let (mean, std) = model.posterior(&[0.2, 0.5]).unwrap();
    assert!((mean[0] - 1.25).abs() < 1e-4);
    assert!(std[0] < 1e-3);
    let (_, far) = model.posterior(&[20.0, -20.0]).unwrap();
    assert!((far[0] - 1.0).abs() < 1e-6);
}

#[test]
fn variance_shrinks_and_is_monotone_in_data() {
    let full = random_dataset(12, 3, 1, 0.1, 21);
    let k = kernels(3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let probes: Vec<Vec<f64>> = (0..100).map(|_| (0..3).map(|_| rng.random_range(-1.2..1.2)).collect()).collect();
    let mut prev: Option<Vec<f64>> = None;
    for n in 0..=12 {
        let model = GpModel::fit(k.clone(), full.prefix(n)).unwrap();
        let vars: Vec<f64> = probes.iter().map(|z| model.posterior(z).unwrap().1[0].powi(2)).collect();
        for (z, v) in probes.iter().zip(&vars) {
            assert!(*v <= k[0].eval(z, z) + 1e-12);
        }
        if let Some(p) = prev {
            for (a, b) in vars.iter().zip(&p) {
                assert!(*a <= b + 1e-9);
            }
        }
        prev = Some(vars);
    }
}

#[test]
fn derivative_variances_nonnegative() {
    let data = random_dataset(20, 3, 2, 0.01, 5);
    let model = GpModel::fit(kernels(3, 2), data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dp = model.derivative_posterior(&z).unwrap();
        assert!(dp.std_x.iter().chain(dp.std_xi.iter()).all(|s| *s >= 0.0));
        let spread = model.spread(&z).unwrap();
        for ch in 0..2 {
            let nx = dp.std_x.row(ch).norm();
            assert!((spread.grad_x_std_norm[ch] - nx).abs() < 1e-10);
        }
    }
}

#[test]
fn kernel_constants_dominate_dense_grid() {
    // 1-D: 200 x 200 pairs on [-4, 4]
    let k = SquaredExponential::isotropic(1.3, 0.8, 1).unwrap();
    let reg = k.regularity(0);
    let xs: Vec<f64> = (0..200).map(|i| -4.0 + 8.0 * i as f64 / 199.0).collect();
    let mut lip: f64 = 0.0;
    let mut hess: f64 = 0.0;
    for a in &xs {
        for b in &xs {
            lip = lip.max(k.grad_first(&[*a], &[*b])[0].abs());
            hess = hess.max(k.cross_hessian(&[*a], &[*b])[(0, 0)].abs());
        }
    }
    assert!(lip <= reg.lipschitz && lip >= 0.99 * reg.lipschitz);
    assert!(hess <= reg.grad_x_lipschitz * (1.0 + 1e-9) && hess >= 0.99 * reg.grad_x_lipschitz);

    // anisotropic 2-D, split (xi, x) = (1, 1); search the lag plane directly
    let k = SquaredExponential::new(0.9, vec![2.0, 0.5]).unwrap();
    let reg = k.regularity(1);
    let mut lip: f64 = 0.0;
    let (mut gxi, mut gx): (f64, f64) = (0.0, 0.0);
    for i in 0..400 {
        for j in 0..400 {
            let r = [-8.0 + 16.0 * i as f64 / 399.0, -2.0 + 4.0 * j as f64 / 399.0];
            lip = lip.max(k.grad_first(&r, &[0.0, 0.0]).norm());
            let h = k.cross_hessian(&r, &[0.0, 0.0]);
            gxi = gxi.max(h.rows(0, 1).into_owned().svd(false, false).singular_values[0]);
            gx = gx.max(h.rows(1, 1).into_owned().svd(false, false).singular_values[0]);
        }
    }
    assert!(lip <= reg.lipschitz * (1.0 + 1e-9) && lip >= 0.99 * reg.lipschitz);
    assert!(gxi <= reg.grad_xi_lipschitz * (1.0 + 1e-6) && gxi >= 0.99 * reg.grad_xi_lipschitz, "{gxi} {}", reg.grad_xi_lipschitz);
    assert!(gx <= reg.grad_x_lipschitz * (1.0 + 1e-6) && gx >= 0.99 * reg.grad_x_lipschitz, "{gx} {}", reg.grad_x_lipschitz);
}

#[test]
fn bad_gram_is_reported() {
    // duplicated inputs with almost no noise and a huge lengthscale
    let z = DMatrix::from_fn(1, 40, |_, j| j as f64 * 1e-9);
    let y = DMatrix::from_fn(1, 40, |_, j| j as f64);
    let data = Dataset::new(z, y, 1e-12, 0).unwrap();
    let err = GpModel::fit(vec![SquaredExponential::isotropic(1.0, 1e6, 1).unwrap()], data);
    assert!(err.is_ok() || matches!(err, Err(l1gp::Error::NotPositiveDefinite { .. })));
}

#[test]
fn inverse_gram_norm_matches_eigenvalues() {
    let data = random_dataset(10, 3, 1, 0.1, 31);
    let model = GpModel::fit(kernels(3, 1), data.clone()).unwrap();
    let mut g = model.kernel(0).gram(&data.inputs);
    for i in 0..10 {
        g[(i, i)] += 0.01;
    }
    let smallest = g.symmetric_eigenvalues().min();
    assert!((model.inverse_gram_norm(0) - 1.0 / smallest).abs() < 1e-6 / smallest);
}

#[test]
fn noiseless_measurements_recover_h() {
    let q = planar_quadrotor();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let states: Vec<Vector> = (0..50).map(|_| q.state_box.from_unit(&(0..6).map(|_| rng.random()).collect::<Vec<f64>>())).collect();
    let controls: Vec<Vector> = (0..50).map(|_| Vector::from_vec(vec![rng.random_range(0.0..15.0), rng.random_range(-1.0..1.0)])).collect();
    let params: Vec<Vector> = (0..50).map(|_| Vector::from_vec(vec![rng.random_range(0.0..6.0)])).collect();
    let d = generate_measurements(&q.system, &QuadrotorUncertainty, &states, &controls, &params, 0.0, 1).unwrap();
    for k in 0..50 {
        let h = QuadrotorUncertainty.value(&params[k], &states[k]);
        assert!((d.targets.column(k) - h).amax() < 1e-10);
    }
}

#[test]
fn measurement_noise_is_centred_and_seeded() {
    let q = planar_quadrotor();
    let domain = q.input_domain();
    let a = collect_lhs(&q.system, &QuadrotorUncertainty, &domain, 10_000, 0.01, 5).unwrap();
    let b = collect_lhs(&q.system, &QuadrotorUncertainty, &domain, 10_000, 0.01, 5).unwrap();
    assert_eq!(a, b);
    for ch in 0..2 {
        let mut s = 0.0;
        for k in 0..a.len() {
            let z = a.inputs.column(k);
            let xi = Vector::from_vec(vec![z[0]]);
            let x = z.rows(1, 6).into_owned();
            s += a.targets[(ch, k)] - QuadrotorUncertainty.value(&xi, &x)[ch];
        }
        let mean = s / a.len() as f64;
        assert!(mean.abs() < 3.0 * 0.01 / 100.0, "channel {ch} mean {mean}");
    }
    assert_eq!(q.system.input_dim(), 2);
}

#[test]
fn lhs_inside_quadrotor_domain() {
    let q = planar_quadrotor();
    let domain = q.input_domain();
    let s = latin_hypercube(&domain, 25, 11).unwrap();
    for j in 0..25 {
        assert!(domain.contains(&s.column(j).into_owned()));
    }
}

proptest! {
    #[test]
    fn csv_roundtrip(n in 0usize..12, seed in 0u64..1000) {
        let d = random_dataset(n, 4, 2, 0.01, seed);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), 0.01, 1).unwrap();
        prop_assert_eq!(back.inputs.shape(), d.inputs.shape());
        prop_assert!((back.inputs - &d.inputs).amax() <= 1e-15 * 10.0);
        prop_assert!((back.targets - &d.targets).amax() <= 1e-15 * 10.0);
    }
}

#[test]
fn csv_header_is_checked() {
    let text = "a,b\n1,2\n";
    assert!(Dataset::read_csv(text.as_bytes(), 0.01, 0).is_err());
    let text = "z_1,y_1\n1,2\n";
    let d = Dataset::read_csv(text.as_bytes(), 0.01, 0).unwrap();
    assert_eq!(d.len(), 1);
}
