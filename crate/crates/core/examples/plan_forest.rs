//! MPPI through the desk-scale forest with obstacles inflated by a tube.
//!
//! cargo run --release --example plan_forest -- [rho] [rollouts] [horizon]

use l1gp::dynamics::{planar_quadrotor, ModelField, Vector};
use l1gp::planning::{mppi_plan, tube_inflate, DynamicsTag, Environment, MppiCost, MppiParams};

fn main() -> l1gp::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rho: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let rollouts: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);

    let setup = planar_quadrotor();
    let field = ModelField::nominal(&setup.system);
    let env = Environment::desk_forest();
    let inflated = tube_inflate(&env, rho)?;
    let state_box = setup.state_box.shrink(rho)?;
    let mut goal = Vector::zeros(6);
    goal[0] = env.goal[0];
    goal[1] = env.goal[1];
    let cost = MppiCost {
        env: &inflated,
        state_box: &state_box,
        goal,
        position: [0, 1],
    };
    let u_trim = setup.system.hover_input();
    let horizon: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let params = MppiParams::quadrotor(&u_trim, rollouts, horizon, 3);
    let x0 = Vector::zeros(6);
    let start = std::time::Instant::now();
    let plan = mppi_plan(&field, &cost, &x0, &u_trim, &params, 14.0, 0.1, DynamicsTag::Nominal)?;
    let traj = &plan.trajectory;
    let clearance = traj.states.iter().map(|x| inflated.clearance([x[0], x[1]])).fold(f64::INFINITY, f64::min);
    println!(
        "{} knots over {:.2} s in {:.2?}, reached goal: {}, colliding replans: {}",
        traj.len(),
        traj.duration(),
        start.elapsed(),
        plan.reached_goal,
        plan.colliding_steps
    );
    println!("min clearance to inflated obstacles {clearance:.3} m, box violation {:.2e}", traj.box_violation(&state_box));
    let last = traj.states.last().unwrap();
    println!("final position ({:.3}, {:.3})", last[0], last[1]);
    Ok(())
}
