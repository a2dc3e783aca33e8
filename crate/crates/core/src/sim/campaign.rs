use std::path::Path;

use serde::{Deserialize, Serialize};

use super::closed_loop::{ClosedLoop, SimLog};
use super::config::{CampaignConfig, EpisodeSpec};
use crate::bounds::{remainder_bounds, BoundContext, RemainderBounds};
use crate::ccm::{ContractionMetric, GeodesicSolver};
use crate::certificate::{
    check_conditions, check_tube_in_box, compute_constants, compute_tube_params, tube_suprema, CertificateInputs, CertificateReport,
    TripleSource,
};
use crate::dynamics::{ControlAffine, ExogenousSignal, ModelField, QuadrotorSetup, UncertaintyField, UncertaintyTriple, Vector};
use crate::error::{Error, Result};
use crate::gp::{collect_lhs, Dataset, GpModel};
use crate::l1::L1Params;
use crate::planning::{
    mppi_plan, trajopt_lqr, trim_input, tube_inflate, DynamicsTag, Environment, IlqrParams, MppiCost, MppiParams, PlannedTrajectory,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Simulate infeasible certificates too, stamped UNCERTIFIED.
    pub force: bool,
    /// Only this episode (the dataset is still built up to it).
    pub episode: Option<usize>,
}

/// Row of the bound-decay table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n_data: usize,
    /// Learned bound as computed, or the conservative triple at `N = 0`.
    pub raw: UncertaintyTriple,
    /// What the certificate uses.
    pub used: UncertaintyTriple,
    pub conservative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub index: usize,
    pub n_data: usize,
    pub dynamics: String,
    pub omega: f64,
    pub gamma: f64,
    pub triple: UncertaintyTriple,
    pub rho: f64,
    pub feasible: bool,
    pub certified: bool,
    pub margins: [Option<f64>; 3],
    pub plan_duration: f64,
    pub reached_goal: bool,
    /// Smallest clearance of the plan's knots in the inflated scene.
    pub plan_clearance: f64,
    pub sup_tracking_error: f64,
    pub within_tube: bool,
    /// Simulated samples inside an obstacle or outside the workspace.
    pub penetrating_samples: usize,
    pub min_clearance: f64,
    pub energy0: f64,
    pub l1_substeps: usize,
    pub degenerate_steps: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub summary: EpisodeSummary,
    pub bounds: BoundRow,
    pub learned: Option<RemainderBounds>,
    pub plan: PlannedTrajectory,
    pub certificate: CertificateReport,
    pub log: SimLog,
}

/// Trajectory optimization on nominal and learned dynamics, both flown by
/// the RL1 loop on the true plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub n_data: usize,
    pub nominal_planned_cost: f64,
    pub learned_planned_cost: f64,
    pub nominal_realized_cost: f64,
    pub learned_realized_cost: f64,
    pub nominal_iterations: usize,
    pub learned_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub full: bool,
    pub bounds: Vec<BoundRow>,
    pub episodes: Vec<EpisodeSummary>,
    pub optimality: Option<OptimalityReport>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub episodes: Vec<EpisodeOutcome>,
    pub dataset: Dataset,
}

/// Everything an episode needs, built once from a config.
pub struct Campaign {
    pub config: CampaignConfig,
    pub setup: QuadrotorSetup,
    pub metric: ContractionMetric,
    pub env: Environment,
    pub full: bool,
}

impl Campaign {
    pub fn new(config: CampaignConfig, full: bool) -> Result<Self> {
        config.validate()?;
        let setup = config.plant.build().map_err(|e| Error::Config(e.to_string()))?;
        let metric = config.load_metric()?;
        let env = config.load_environment(full)?;
        Ok(Campaign {
            config,
            setup,
            metric,
            env,
            full,
        })
    }

    pub fn from_file(path: impl AsRef<Path>, full: bool) -> Result<Self> {
        Self::new(CampaignConfig::load(path)?, full)
    }

    fn data_seed(&self, k: usize) -> u64 {
        self.config.seed.wrapping_mul(1_000).wrapping_add(100 + k as u64)
    }

    fn planner_seed(&self, k: usize) -> u64 {
        self.config.seed.wrapping_mul(1_000).wrapping_add(200 + k as u64)
    }

    /// `n_new` Latin-hypercube measurements over `X_xi x X`.
    pub fn collect_data(&self, n_new: usize, seed: u64) -> Result<Dataset> {
        if n_new == 0 {
            return Err(Error::InvalidParameter("collect at least one sample".into()));
        }
        let s = &self.setup;
        collect_lhs(&s.system, &s.uncertainty, &s.input_domain(), n_new, self.config.gp.noise_std, seed)
    }

    /// Dataset after episodes `0..=upto` of the schedule.
    pub fn schedule_dataset(&self, upto: usize) -> Result<Dataset> {
        let mut data = Dataset::empty(1, self.setup.state_box.dim(), 2, self.config.gp.noise_std);
        for (k, ep) in self.config.episodes.iter().enumerate().take(upto + 1) {
            if ep.n_data > data.len() {
                data.append(&self.collect_data(ep.n_data - data.len(), self.data_seed(k))?)?;
            }
        }
        Ok(data)
    }

    pub fn fit(&self, data: &Dataset) -> Result<GpModel> {
        GpModel::fit(self.config.gp.kernels.clone(), data.clone())
    }

    pub fn learned_bounds(&self, model: &GpModel) -> Result<RemainderBounds> {
        let domain = self.setup.input_domain();
        let gp = &self.config.gp;
        let ctx = BoundContext::new(model, &domain, gp.tau, gp.delta, self.setup.bounds.clone())?;
        remainder_bounds(model, &ctx, &domain, &gp.grid_resolution)
    }

    fn bound_row(&self, n_data: usize, learned: Option<&RemainderBounds>) -> BoundRow {
        let cons = self.setup.bounds.uncertainty;
        match learned {
            None => BoundRow {
                n_data,
                raw: cons,
                used: cons,
                conservative: true,
            },
            Some(b) => BoundRow {
                n_data,
                raw: b.triple,
                used: b.capped(&cons),
                conservative: false,
            },
        }
    }

    fn goal_state(&self, p: [f64; 2]) -> Vector {
        let mut g = Vector::zeros(self.setup.state_box.dim());
        g[0] = p[0];
        g[1] = p[1];
        g
    }

    /// MPPI through the scene inflated by `rho`, on `field`.
    pub fn plan(&self, field: &ModelField, rho: f64, seed: u64, tag: DynamicsTag) -> Result<(PlannedTrajectory, bool)> {
        let pc = &self.config.planner;
        let inflated = tube_inflate(&self.env, rho)?;
        let state_box = self.setup.state_box.shrink(rho)?;
        let cost = MppiCost {
            env: &inflated,
            state_box: &state_box,
            goal: self.goal_state(self.env.goal),
            position: [0, 1],
        };
        let x0 = self.goal_state(self.env.start);
        let trim = trim_input(field, 0.0, &x0)?;
        let (rollouts, horizon, max_time) = if self.full {
            (pc.full_rollouts, pc.full_horizon, pc.full_max_time)
        } else {
            (pc.rollouts, pc.horizon, pc.max_time)
        };
        let mut params = MppiParams::quadrotor(&trim, rollouts, horizon, seed);
        params.temperature = pc.temperature;
        params.noise_std = vec![pc.noise_fraction * trim.norm(); trim.len()];
        params.q = pc.q.clone();
        params.q_f = pc.q_f.clone();
        params.u_min = pc.u_min.clone();
        params.u_max = pc.u_max.clone();
        params.penalty = pc.penalty;
        params.soft_fraction = pc.soft_fraction;
        params.soft_weight = pc.soft_weight;
        let plan = mppi_plan(field, &cost, &x0, &trim, &params, max_time, pc.goal_tol, tag)?;
        Ok((plan.trajectory, plan.reached_goal))
    }

    /// Post-checks a plan against the scene inflated by `rho` and the box
    /// shrunk by it; returns the smallest knot clearance.
    pub fn check_plan(&self, plan: &PlannedTrajectory, rho: f64) -> Result<f64> {
        let inflated = tube_inflate(&self.env, rho)?;
        let mut worst = f64::INFINITY;
        for (k, x) in plan.states.iter().enumerate() {
            let c = inflated.clearance([x[0], x[1]]);
            if c < 0.0 {
                return Err(Error::Workspace(format!("knot {k} is {:.3} m inside the inflated scene", -c)));
            }
            worst = worst.min(c);
        }
        check_tube_in_box(&plan.states, rho, &self.setup.state_box)?;
        Ok(worst)
    }

    fn l1_params(&self, omega: f64, gamma: f64, triple: &UncertaintyTriple) -> Result<L1Params> {
        let c = &self.config.l1;
        L1Params::diagonal(self.setup.state_box.dim(), c.a_m_scale, gamma, omega, triple.value, c.eps_proj)
    }

    /// Certificate of `plan` under the episode's `(omega, Gamma, rho_a, eps)`.
    pub fn certify(&self, plan: &PlannedTrajectory, spec: &EpisodeSpec, triple: UncertaintyTriple, source: TripleSource, x0: &Vector) -> Result<CertificateReport> {
        let x_d0 = &plan.states[0];
        let tube = compute_tube_params(&self.metric, x_d0, x0, spec.rho_a, spec.eps)?;
        let sup = tube_suprema(&self.metric, &self.setup.system, &plan.states, tube.rho, self.config.sim.tube_samples)?;
        let desired = plan.inputs.iter().map(|u| u.norm()).fold(0.0, f64::max);
        let l1 = self.l1_params(spec.omega, spec.gamma, &triple)?;
        let inputs = CertificateInputs::new(&self.metric, sup, desired, &l1);
        let constants = compute_constants(&inputs, triple, spec.omega, tube.rho)?;
        let energy0 = if x_d0 == x0 {
            0.0
        } else {
            GeodesicSolver::new(self.config.sim.geodesic_nodes)?.solve(&self.metric, x_d0, x0)?.energy
        };
        let verdict = check_conditions(&constants, self.metric.alpha_lower, self.metric.lambda, &tube, energy0, spec.gamma)?;
        Ok(CertificateReport::new(source, tube, constants, verdict, plan.duration()))
    }

    fn closed_loop<'a>(&'a self, field: &'a ModelField<'a>, omega: f64, gamma: f64, triple: &UncertaintyTriple) -> Result<ClosedLoop<'a>> {
        Ok(ClosedLoop {
            system: &self.setup.system,
            uncertainty: &self.setup.uncertainty,
            model: field,
            metric: &self.metric,
            l1: self.l1_params(omega, gamma, triple)?,
            geodesic_nodes: self.config.sim.geodesic_nodes,
        })
    }

    fn densify(&self, plan: &PlannedTrajectory, field: &ModelField) -> Result<PlannedTrajectory> {
        let factor = (plan.dt / self.config.sim.dt).round().max(1.0) as usize;
        if ((plan.dt / factor as f64) - self.config.sim.dt).abs() > 1e-9 {
            return Err(Error::Config("control period must divide the plan step".into()));
        }
        plan.densify(field, factor)
    }

    /// Fit, bound, plan, certify and fly episode `k` on the first
    /// `n_data` samples of `dataset`.
    pub fn run_episode(&self, k: usize, dataset: &Dataset, opts: &RunOptions) -> Result<EpisodeOutcome> {
        let spec = self
            .config
            .episodes
            .get(k)
            .ok_or_else(|| Error::Config(format!("no episode {k}")))?
            .clone();
        if dataset.len() < spec.n_data {
            return Err(Error::InvalidParameter(format!("episode {k} needs {} samples, have {}", spec.n_data, dataset.len())));
        }
        let gp = if spec.n_data > 0 {
            Some(self.fit(&dataset.prefix(spec.n_data))?)
        } else {
            None
        };
        let learned = gp.as_ref().map(|g| self.learned_bounds(g)).transpose()?;
        let bounds = self.bound_row(spec.n_data, learned.as_ref());
        let triple = bounds.used;
        let (field, tag, source) = match &gp {
            Some(g) => (
                ModelField::corrected(&self.setup.system, g, ExogenousSignal::Time),
                DynamicsTag::Learned { n: spec.n_data },
                TripleSource::Learned { n: spec.n_data },
            ),
            None => (ModelField::nominal(&self.setup.system), DynamicsTag::Nominal, TripleSource::Conservative),
        };

        let x_d0 = self.goal_state(self.env.start);
        let x0 = &x_d0 + Vector::from_column_slice(&self.config.sim.initial_offset);
        let tube = compute_tube_params(&self.metric, &x_d0, &x0, spec.rho_a, spec.eps)?;
        let (plan, reached_goal) = self.plan(&field, tube.rho, self.planner_seed(k), tag)?;
        let plan_clearance = self.check_plan(&plan, tube.rho)?;
        let certificate = self.certify(&plan, &spec, triple, source, &x0)?;
        let feasible = certificate.verdict.feasible;
        if !feasible && !opts.force {
            return Err(Error::Infeasible(format!(
                "episode {k} (omega {}, Gamma {:e}) margins {:?}",
                spec.omega, spec.gamma, certificate.verdict.margins
            )));
        }
        let dense = self.densify(&plan, &field)?;
        let cl = self.closed_loop(&field, spec.omega, spec.gamma, &triple)?;
        let log = cl.run(&dense, &x0, feasible)?;

        let mut penetrating = 0;
        let mut min_clearance = f64::INFINITY;
        for r in &log.rows {
            let c = self.env.clearance([r.x[0], r.x[1]]);
            penetrating += (c < 0.0) as usize;
            min_clearance = min_clearance.min(c);
        }
        let sup_err = log.max_tracking_error();
        let summary = EpisodeSummary {
            index: k,
            n_data: spec.n_data,
            dynamics: tag.to_string(),
            omega: spec.omega,
            gamma: spec.gamma,
            triple,
            rho: tube.rho,
            feasible,
            certified: feasible,
            margins: certificate.verdict.margins,
            plan_duration: plan.duration(),
            reached_goal,
            plan_clearance,
            sup_tracking_error: sup_err,
            within_tube: sup_err <= tube.rho,
            penetrating_samples: penetrating,
            min_clearance,
            energy0: certificate.verdict.energy0,
            l1_substeps: log.l1_substeps,
            degenerate_steps: log.degenerate_steps,
        };
        Ok(EpisodeOutcome {
            summary,
            bounds,
            learned,
            plan,
            certificate,
            log,
        })
    }

    /// Certifies an externally supplied plan with the settings of the
    /// episode whose dataset size matches its dynamics tag.
    pub fn certify_plan(&self, plan: &PlannedTrajectory) -> Result<CertificateReport> {
        let n = match plan.tag {
            DynamicsTag::Nominal => 0,
            DynamicsTag::Learned { n } => n,
        };
        let (k, spec) = self
            .config
            .episodes
            .iter()
            .enumerate()
            .find(|(_, e)| e.n_data == n)
            .ok_or_else(|| Error::Config(format!("no episode with {n} samples for a {} plan", plan.tag)))?;
        let gp = if n > 0 {
            Some(self.fit(&self.schedule_dataset(k)?.prefix(n))?)
        } else {
            None
        };
        let learned = gp.as_ref().map(|g| self.learned_bounds(g)).transpose()?;
        let triple = self.bound_row(n, learned.as_ref()).used;
        let (field, source) = match &gp {
            Some(g) => (ModelField::corrected(&self.setup.system, g, ExogenousSignal::Time), TripleSource::Learned { n }),
            None => (ModelField::nominal(&self.setup.system), TripleSource::Conservative),
        };
        let defect = plan.max_defect(&field)?;
        if defect > 1e-6 {
            return Err(Error::Config(format!("plan violates its {} dynamics by {defect:.3e}", plan.tag)));
        }
        let x0 = &plan.states[0] + Vector::from_column_slice(&self.config.sim.initial_offset);
        let tube = compute_tube_params(&self.metric, &plan.states[0], &x0, spec.rho_a, spec.eps)?;
        self.check_plan(plan, tube.rho)?;
        self.certify(plan, spec, triple, source, &x0)
    }

    /// Episodes in order on the growing dataset, then the trajectory
    /// optimization comparison when every episode ran.
    pub fn run(&self, opts: &RunOptions) -> Result<CampaignOutcome> {
        let count = self.config.episodes.len();
        if let Some(k) = opts.episode {
            if k >= count {
                return Err(Error::Config(format!("episode {k} out of range (0..{count})")));
            }
        }
        let last = opts.episode.unwrap_or(count - 1);
        let dataset = self.schedule_dataset(last)?;
        let mut episodes = Vec::new();
        for k in 0..=last {
            if opts.episode.is_some_and(|e| e != k) {
                continue;
            }
            episodes.push(self.run_episode(k, &dataset, opts)?);
        }
        let optimality = if opts.episode.is_none() && self.config.trajopt.enabled {
            Some(self.optimality(&dataset)?)
        } else {
            None
        };
        let report = CampaignReport {
            seed: self.config.seed,
            full: self.full,
            bounds: episodes.iter().map(|e| e.bounds.clone()).collect(),
            episodes: episodes.iter().map(|e| e.summary.clone()).collect(),
            optimality,
        };
        Ok(CampaignOutcome { report, episodes, dataset })
    }

    /// Plans `start -> goal` with iLQR on the nominal model and on the GP
    /// mean fitted to `n_data` samples, then flies both on the true plant.
    /// Realized cost uses the same weights against the true trim input.
    pub fn optimality(&self, dataset: &Dataset) -> Result<OptimalityReport> {
        let tc = &self.config.trajopt;
        if dataset.len() < tc.n_data || tc.n_data == 0 {
            return Err(Error::Config(format!("trajopt needs {} samples, have {}", tc.n_data, dataset.len())));
        }
        let gp = self.fit(&dataset.prefix(tc.n_data))?;
        let learned = self.learned_bounds(&gp)?;
        let cons = self.setup.bounds.uncertainty;
        let sys = &self.setup.system;
        let nominal = ModelField::nominal(sys);
        let corrected = ModelField::corrected(sys, &gp, ExogenousSignal::Time);
        let x0 = self.goal_state(tc.start);
        let goal = self.goal_state(tc.goal);
        let mut params = IlqrParams::new(tc.dt, tc.horizon, tc.q.clone(), tc.r.clone(), tc.q_f.clone())?;
        params.max_iter = tc.max_iter;

        let mut out = Vec::new();
        for (field, tag, triple) in [
            (&nominal, DynamicsTag::Nominal, cons),
            (&corrected, DynamicsTag::Learned { n: tc.n_data }, learned.capped(&cons)),
        ] {
            let u_ref = (0..params.steps)
                .map(|k| trim_input(field, k as f64 * tc.dt, &goal))
                .collect::<Result<Vec<_>>>()?;
            let res = trajopt_lqr(field, &x0, &goal, &u_ref, &params, Some(&self.setup.state_box), tag)?;
            let dense = self.densify(&res.trajectory, field)?;
            let log = self.closed_loop(field, tc.omega, tc.gamma, &triple)?.run(&dense, &x0, false)?;
            let realized = self.realized_cost(&log, &goal, res.trajectory.dt, &params)?;
            out.push((res.cost, realized, res.iterations));
        }
        Ok(OptimalityReport {
            n_data: tc.n_data,
            nominal_planned_cost: out[0].0,
            learned_planned_cost: out[1].0,
            nominal_realized_cost: out[0].1,
            learned_realized_cost: out[1].1,
            nominal_iterations: out[0].2,
            learned_iterations: out[1].2,
        })
    }

    /// The trajopt objective on the flown trajectory, sampled at the plan
    /// knots, with the total plant input measured against the true trim.
    pub fn realized_cost(&self, log: &SimLog, goal: &Vector, plan_dt: f64, p: &IlqrParams) -> Result<f64> {
        let stride = (plan_dt / log.dt).round() as usize;
        let mut cost = 0.0;
        let knots: Vec<_> = log.rows.iter().step_by(stride.max(1)).collect();
        for (k, r) in knots.iter().enumerate() {
            let dx = &r.x - goal;
            let q = if k + 1 == knots.len() { &p.q_f } else { &p.q };
            cost += dx.iter().zip(q).map(|(d, w)| w * d * d).sum::<f64>();
            if k + 1 < knots.len() {
                let u_star = true_trim(&self.setup, r.t, goal)?;
                let du = &r.u_c + &r.u_a - u_star;
                cost += du.iter().zip(&p.r).map(|(d, w)| w * d * d).sum::<f64>();
            }
        }
        Ok(cost)
    }
}

/// Input holding `x` still on the true plant at time `t`.
fn true_trim(s: &QuadrotorSetup, t: f64, x: &Vector) -> Result<Vector> {
    Ok(-(s.system.input_pinv(x)? * s.system.drift(x)) - s.uncertainty.value(&Vector::from_element(1, t), x))
}
