//! Hover under the true remainder with and without the L1 input: the CCM
//! feedback alone sags under the thrust deficit, the adaptive input cancels
//! it.
//!
//! cargo run --release --example l1_hover -- [omega] [gamma]

use l1gp::ccm::{CcmController, ContractionMetric};
use l1gp::dynamics::{eval_actual, planar_quadrotor, rk4_step, ModelField, UncertaintyField, Vector};
use l1gp::l1::L1Params;
use l1gp::planning::{DynamicsTag, PlannedTrajectory};
use l1gp::sim::ClosedLoop;

fn main() -> l1gp::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let omega: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let gamma: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e6);
    let setup = planar_quadrotor();
    let metric = ContractionMetric::from_json_str(include_str!("../../../configs/quadrotor_metric.json"))?;
    let field = ModelField::nominal(&setup.system);
    let dt = 0.002;
    let steps = (8.0 / dt) as usize;
    let ud = setup.system.hover_input();
    let plan = PlannedTrajectory::new(dt, DynamicsTag::Nominal, vec![Vector::zeros(6); steps], vec![ud.clone(); steps])?;
    let x0 = Vector::zeros(6);

    let cl = ClosedLoop {
        system: &setup.system,
        uncertainty: &setup.uncertainty,
        model: &field,
        metric: &metric,
        l1: L1Params::diagonal(6, 10.0, gamma, omega, setup.bounds.uncertainty.value, 0.1)?,
        geodesic_nodes: 8,
    };
    let log = cl.run(&plan, &x0, false)?;
    let tail = &log.rows[log.rows.len() / 2..];
    let cancel = tail
        .iter()
        .map(|r| (&r.u_a + setup.uncertainty.value(&Vector::from_element(1, r.t), &r.x)).norm())
        .fold(0.0, f64::max);
    println!("RL1 (omega {omega}, Gamma {gamma:e}, {} substeps): sup |x - xd| {:.4}, late |u_a + h| {cancel:.4}", log.l1_substeps, log.max_tracking_error());

    // CCM feedback alone
    let mut ctl = CcmController::new(metric, 8)?;
    let mut x = x0;
    let mut worst = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let xd = &plan.states[k];
        let u = ctl.u_c(|y, u| field_eval(&field, t, y, u), xd, &field_eval(&field, t, xd, &ud), &ud, &x)?;
        worst = worst.max((&x - xd).norm());
        let (sys, unc) = (&setup.system, &setup.uncertainty);
        x = rk4_step(|s, y| eval_actual(sys, unc, &Vector::from_element(1, s), y, &u).unwrap_or_else(|_| Vector::from_element(6, f64::NAN)), t, &x, dt)?;
    }
    println!("CCM only: sup |x - xd| {worst:.4}");
    Ok(())
}

fn field_eval(field: &ModelField, t: f64, x: &Vector, u: &Vector) -> Vector {
    use l1gp::dynamics::VectorField;
    field.eval(t, x, u)
}
