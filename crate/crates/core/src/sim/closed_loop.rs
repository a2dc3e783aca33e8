use std::io::Write;

use crate::ccm::{CcmController, ContractionMetric};
use crate::dynamics::{eval_actual, rk4_step, ControlAffine, ModelField, UncertaintyField, Vector, VectorField};
use crate::error::{check_dim, Error, Result};
use crate::l1::{L1Adaptive, L1Params};
use crate::planning::PlannedTrajectory;

/// One control period of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vector,
    pub x_d: Vector,
    pub u_c: Vector,
    pub u_a: Vector,
    pub mu: Vector,
    pub x_tilde: Vector,
    pub energy: f64,
    pub tracking_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub dt: f64,
    pub certified: bool,
    pub rows: Vec<LogRow>,
    /// Control periods where the feedback had no admissible direction.
    pub degenerate_steps: usize,
    /// Predictor/adaptation sub-steps per control period.
    pub l1_substeps: usize,
}

impl SimLog {
    pub fn header(n: usize, m: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..n).map(|i| format!("x{i}")));
        h.extend((0..n).map(|i| format!("xd{i}")));
        h.extend((0..m).map(|i| format!("uc{i}")));
        h.extend((0..m).map(|i| format!("ua{i}")));
        h.extend((0..m).map(|i| format!("mu{i}")));
        h.extend((0..n).map(|i| format!("xt{i}")));
        h.push("energy".into());
        h.push("tracking_error".into());
        h
    }

    pub fn max_tracking_error(&self) -> f64 {
        self.rows.iter().map(|r| r.tracking_error).fold(0.0, f64::max)
    }

    /// `# status=certified` (or `UNCERTIFIED`), then the header and one row
    /// per control period.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let status = if self.certified { "certified" } else { "UNCERTIFIED" };
        writeln!(w, "# status={status}")?;
        let Some(first) = self.rows.first() else {
            return Ok(());
        };
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(first.x.len(), first.u_c.len()))?;
        for r in &self.rows {
            let mut rec = vec![format!("{:.6}", r.t)];
            for v in [&r.x, &r.x_d, &r.u_c, &r.u_a, &r.mu, &r.x_tilde] {
                rec.extend(v.iter().map(|c| format!("{c:e}")));
            }
            rec.push(format!("{:e}", r.energy));
            rec.push(format!("{:e}", r.tracking_error));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// RL1 loop: CCM feedback and L1 adaptation both built on `model`, driving
/// the true plant `f + B(u + h)`.
pub struct ClosedLoop<'a> {
    pub system: &'a dyn ControlAffine,
    pub uncertainty: &'a dyn UncertaintyField,
    pub model: &'a ModelField<'a>,
    pub metric: &'a ContractionMetric,
    pub l1: L1Params,
    pub geodesic_nodes: usize,
}

impl ClosedLoop<'_> {
    /// Tracks `plan` (already at the control period) from `x0` over its
    /// whole duration.
    pub fn run(&self, plan: &PlannedTrajectory, x0: &Vector, certified: bool) -> Result<SimLog> {
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        check_dim("initial state", n, x0.len())?;
        let dt = plan.dt;
        let model = self.model;
        let mut ccm = CcmController::new(self.metric.clone(), self.geodesic_nodes)?;
        let mut l1 = L1Adaptive::new(self.l1.clone(), x0, m);
        l1.choose_substeps(model.input_matrix(x0).norm(), dt);
        let mut x = x0.clone();
        let mut rows = Vec::with_capacity(plan.len());
        for k in 0..plan.len() {
            let t = plan.time(k);
            let x_d = &plan.states[k];
            let u_d = &plan.inputs[k];
            let xd_dot = model.eval(t, x_d, u_d);
            let u_c = ccm.u_c(|y, u| model.eval(t, y, u), x_d, &xd_dot, u_d, &x)?;
            let u_a = l1.state.u_a.clone();
            let u = &u_c + &u_a;
            rows.push(LogRow {
                t,
                x: x.clone(),
                x_d: x_d.clone(),
                u_c,
                u_a,
                mu: l1.state.mu_hat.clone(),
                x_tilde: l1.x_tilde(&x),
                energy: ccm.energy(),
                tracking_error: (&x - x_d).norm(),
            });
            if k + 1 == plan.len() {
                break;
            }
            let (sys, unc) = (self.system, self.uncertainty);
            let next = rk4_step(
                |s, y| eval_actual(sys, unc, &Vector::from_element(1, s), y, &u).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)),
                t,
                &x,
                dt,
            )
            .map_err(|_| Error::NonFinite("closed-loop plant state"))?;
            // predictor and adaptation see the plant moving through the period
            let f0 = model.eval(t, &x, &u);
            let f1 = model.eval(t + dt, &next, &u);
            l1.advance_interpolated([&f0, &f1], &model.input_matrix(&x), [&x, &next], dt)?;
            x = next;
        }
        Ok(SimLog {
            dt,
            certified,
            rows,
            degenerate_steps: ccm.degenerate_steps,
            l1_substeps: l1.substeps,
        })
    }
}
