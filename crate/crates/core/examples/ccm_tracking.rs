//! Riemannian feedback with the shipped metric on the nominal quadrotor:
//! geodesic energy against its exponential envelope.
//!
//! cargo run --release --example ccm_tracking

use l1gp::ccm::{CcmController, ContractionMetric};
use l1gp::dynamics::{eval_nominal, rk4_step, PlanarQuadrotor, Vector};

fn main() -> l1gp::Result<()> {
    let metric = ContractionMetric::from_json_str(include_str!("../../../configs/quadrotor_metric.json"))?;
    let lambda = metric.lambda;
    let sys = PlanarQuadrotor::default();
    let mut ctl = CcmController::new(metric, 8)?;
    let dt = 0.002;
    let ud = sys.hover_input();
    // level flight at 0.5 m/s, plant starts off to the side and tilted
    let mut xd = Vector::from_vec(vec![0.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
    let mut x = Vector::from_vec(vec![0.3, -0.2, 0.1, 0.2, 0.1, -0.1]);
    let f = |x: &Vector, u: &Vector| eval_nominal(&sys, x, u).unwrap_or_else(|_| Vector::from_element(6, f64::NAN));
    let mut e0 = None;
    for k in 0..=(6.0 / dt) as usize {
        let t = k as f64 * dt;
        let u = ctl.u_c(f, &xd, &f(&xd, &ud), &ud, &x)?;
        let e = ctl.energy();
        let e0 = *e0.get_or_insert(e);
        if k % 500 == 0 {
            println!(
                "t {t:4.1}  energy {e:.3e}  envelope {:.3e}  |x - xd| {:.4}",
                e0 * (-2.0 * lambda * t).exp(),
                (&x - &xd).norm()
            );
        }
        x = rk4_step(|_, y| f(y, &u), t, &x, dt)?;
        xd = rk4_step(|_, y| f(y, &ud), t, &xd, dt)?;
    }
    Ok(())
}
