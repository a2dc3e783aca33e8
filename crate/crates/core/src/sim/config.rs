use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ccm::ContractionMetric;
use crate::dynamics::PlantConfig;
use crate::error::{Error, Result};
use crate::gp::SquaredExponential;
use crate::planning::Environment;

const SHIPPED_METRIC: &str = include_str!("../../../../configs/quadrotor_metric.json");

/// One learning episode: how much data the model has seen and the L1 and
/// tube settings it is certified with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_data: usize,
    pub omega: f64,
    pub gamma: f64,
    pub rho_a: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub noise_std: f64,
    /// One kernel per output channel, over `(t, x)`.
    pub kernels: Vec<SquaredExponential>,
    pub tau: f64,
    pub delta: f64,
    pub grid_resolution: Vec<usize>,
}

impl Default for GpConfig {
    fn default() -> Self {
        let off = 1e4;
        GpConfig {
            noise_std: 0.01,
            kernels: vec![
                SquaredExponential {
                    signal_variance: 1.0,
                    lengthscales: vec![off, off, off, off, 3.0, 3.0, off],
                },
                SquaredExponential {
                    signal_variance: 0.1,
                    lengthscales: vec![3.0, off, off, off, off, off, off],
                },
            ],
            tau: 1e-8,
            delta: 0.1,
            grid_resolution: vec![16, 2, 2, 3, 9, 9, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L1Config {
    /// `A_m = -a_m_scale I`
    pub a_m_scale: f64,
    pub eps_proj: f64,
}

impl Default for L1Config {
    fn default() -> Self {
        L1Config {
            a_m_scale: 10.0,
            eps_proj: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub rollouts: usize,
    /// Seconds.
    pub horizon: f64,
    pub temperature: f64,
    /// Control noise std as a fraction of the trim input's norm.
    pub noise_fraction: f64,
    pub q: Vec<f64>,
    pub q_f: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub penalty: f64,
    pub soft_fraction: f64,
    pub soft_weight: f64,
    pub max_time: f64,
    pub goal_tol: f64,
    /// Used instead of the above under `--full`.
    pub full_rollouts: usize,
    pub full_horizon: f64,
    pub full_max_time: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            rollouts: 64,
            horizon: 1.0,
            temperature: 1.0,
            noise_fraction: 0.2,
            q: vec![1.0, 1.0, 0.1, 0.1, 0.1, 0.1],
            q_f: vec![20.0, 20.0, 1.0, 5.0, 5.0, 1.0],
            u_min: vec![0.0, -6.0],
            u_max: vec![19.62, 6.0],
            penalty: 1e6,
            soft_fraction: 0.8,
            soft_weight: 1e3,
            max_time: 14.0,
            goal_tol: 0.1,
            full_rollouts: 500,
            full_horizon: 2.0,
            full_max_time: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Control period; plans are densified to it.
    pub dt: f64,
    pub geodesic_nodes: usize,
    /// Ball samples per plan knot for the tube suprema.
    pub tube_samples: usize,
    /// Offset of the plant's initial state from the plan start.
    pub initial_offset: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.002,
            geodesic_nodes: 8,
            tube_samples: 16,
            initial_offset: vec![0.0; 6],
        }
    }
}

/// Trajectory-optimization comparison between nominal and learned models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajoptConfig {
    pub enabled: bool,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub horizon: f64,
    pub dt: f64,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub q_f: Vec<f64>,
    pub max_iter: usize,
    pub n_data: usize,
    pub omega: f64,
    pub gamma: f64,
}

impl Default for TrajoptConfig {
    fn default() -> Self {
        TrajoptConfig {
            enabled: true,
            start: [0.0, 0.0],
            goal: [2.0, 4.0],
            horizon: 10.0,
            dt: 0.02,
            q: vec![1.0, 1.0, 0.5, 0.5, 0.5, 0.5],
            r: vec![0.1, 0.1],
            q_f: vec![50.0; 6],
            max_iter: 100,
            n_data: 100,
            omega: 30.0,
            gamma: 2e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub plant: PlantConfig,
    /// Metric JSON relative to the config file; the shipped metric if absent.
    pub metric: Option<PathBuf>,
    /// Environment JSON relative to the config file; the built-in forest if absent.
    pub environment: Option<PathBuf>,
    pub gp: GpConfig,
    pub l1: L1Config,
    pub planner: PlannerConfig,
    pub episodes: Vec<EpisodeSpec>,
    pub sim: SimConfig,
    pub trajopt: TrajoptConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let ep = |n_data, omega, gamma, r| EpisodeSpec {
            n_data,
            omega,
            gamma,
            rho_a: r,
            eps: r,
        };
        CampaignConfig {
            plant: PlantConfig::default(),
            metric: None,
            environment: None,
            gp: GpConfig::default(),
            l1: L1Config::default(),
            planner: PlannerConfig::default(),
            episodes: vec![ep(0, 90.0, 7e10, 0.3), ep(25, 30.0, 2e6, 0.175), ep(100, 30.0, 2e6, 0.05)],
            sim: SimConfig::default(),
            trajopt: TrajoptConfig::default(),
            seed: 7,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl CampaignConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: CampaignConfig = serde_json::from_str(s).map_err(|e| bad(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.metric, &mut c.environment].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let gp = &self.gp;
        if !(gp.delta > 0.0 && gp.delta < 1.0) {
            return Err(bad("delta must lie in (0, 1)"));
        }
        if !(gp.tau > 0.0) {
            return Err(bad("tau must be positive"));
        }
        if !(gp.noise_std > 0.0) {
            return Err(bad("measurement noise std must be positive"));
        }
        if gp.kernels.len() != self.plant.m {
            return Err(bad(format!("need {} kernels, got {}", self.plant.m, gp.kernels.len())));
        }
        for k in &gp.kernels {
            k.validate().map_err(|e| bad(e.to_string()))?;
            if k.lengthscales.len() != self.plant.n + 1 {
                return Err(bad("kernel lengthscales must cover (t, x)"));
            }
        }
        if gp.grid_resolution.len() != self.plant.n + 1 || gp.grid_resolution.iter().any(|r| *r < 2) {
            return Err(bad("grid resolution needs n + 1 entries of at least 2"));
        }
        if self.episodes.is_empty() {
            return Err(bad("no episodes"));
        }
        if self.episodes.windows(2).any(|w| w[1].n_data < w[0].n_data) {
            return Err(bad("episode dataset sizes must be nondecreasing"));
        }
        for (k, e) in self.episodes.iter().enumerate() {
            if !(e.omega > 0.0 && e.gamma > 0.0 && e.rho_a > 0.0 && e.eps > 0.0) {
                return Err(bad(format!("episode {k}: omega, gamma, rho_a and eps must be positive")));
            }
        }
        let p = &self.planner;
        if p.rollouts == 0 || p.full_rollouts == 0 || !(p.horizon > 0.0) || !(p.full_horizon > 0.0) {
            return Err(bad("planner needs rollouts and a positive horizon"));
        }
        if !(p.max_time > 0.0) || !(p.full_max_time > 0.0) || !(p.goal_tol > 0.0) {
            return Err(bad("planner max_time and goal_tol must be positive"));
        }
        let s = &self.sim;
        if !(s.dt > 0.0) || s.geodesic_nodes < 2 || s.tube_samples == 0 {
            return Err(bad("sim needs dt > 0, at least 2 geodesic nodes and tube samples"));
        }
        if s.initial_offset.len() != self.plant.n {
            return Err(bad("initial offset must have n entries"));
        }
        let t = &self.trajopt;
        if t.enabled && (!(t.horizon > 0.0) || !(t.dt > 0.0) || !(t.omega > 0.0) || !(t.gamma > 0.0)) {
            return Err(bad("trajopt needs positive horizon, dt, omega and gamma"));
        }
        Ok(())
    }

    pub fn load_metric(&self) -> Result<ContractionMetric> {
        match &self.metric {
            Some(p) => ContractionMetric::load(p).map_err(|e| bad(format!("metric {}: {e}", p.display()))),
            None => ContractionMetric::from_json_str(SHIPPED_METRIC),
        }
    }

    pub fn load_environment(&self, full: bool) -> Result<Environment> {
        match &self.environment {
            Some(p) => Environment::load(p).map_err(|e| bad(format!("environment {}: {e}", p.display()))),
            None if full => Ok(Environment::full_forest()),
            None => Ok(Environment::desk_forest()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_roundtrips() {
        let c = CampaignConfig::default();
        c.validate().unwrap();
        let back = CampaignConfig::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.load_metric().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = CampaignConfig::default();
        c.gp.delta = 1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = CampaignConfig::default();
        c.episodes[2].n_data = 10;
        assert!(c.validate().is_err());
        assert!(CampaignConfig::from_json_str(r#"{"sed": 3}"#).is_err());
        // missing fields fall back to defaults
        assert_eq!(CampaignConfig::from_json_str(r#"{"seed": 3}"#).unwrap().seed, 3);
    }
}
