use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_field, StateBox, Vector, VectorField};
use crate::error::{check_dim, Error, Result};

/// Which vector field a plan satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsTag {
    Nominal,
    Learned { n: usize },
}

impl std::fmt::Display for DynamicsTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsTag::Nominal => write!(f, "nominal"),
            DynamicsTag::Learned { n } => write!(f, "learned@{n}"),
        }
    }
}

impl std::str::FromStr for DynamicsTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "nominal" {
            return Ok(DynamicsTag::Nominal);
        }
        s.strip_prefix("learned@")
            .and_then(|n| n.parse().ok())
            .map(|n| DynamicsTag::Learned { n })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown dynamics tag {s:?}")))
    }
}

/// Desired state-input pairs on a uniform grid; `u[k]` is held over
/// `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory {
    pub dt: f64,
    pub tag: DynamicsTag,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl PlannedTrajectory {
    pub fn new(dt: f64, tag: DynamicsTag, states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("plan step must be positive".into()));
        }
        check_dim("plan knots", states.len(), inputs.len())?;
        if states.is_empty() {
            return Err(Error::Planner("empty plan".into()));
        }
        Ok(PlannedTrajectory { dt, tag, states, inputs })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Largest one-step RK4 defect under `field`.
    pub fn max_defect(&self, field: &dyn VectorField) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.len() - 1 {
            let next = rk4_field(field, self.time(k), &self.states[k], &self.inputs[k], self.dt)?;
            worst = worst.max((next - &self.states[k + 1]).amax());
        }
        Ok(worst)
    }

    /// Largest box violation, zero if every knot lies inside.
    pub fn box_violation(&self, bx: &StateBox) -> f64 {
        let mut worst: f64 = 0.0;
        for x in &self.states {
            for i in 0..x.len() {
                worst = worst.max(bx.lower[i] - x[i]).max(x[i] - bx.upper[i]);
            }
        }
        worst
    }

    /// Resamples to step `dt / factor`: each input held over its interval
    /// and the states re-integrated under `field` from every coarse knot, so
    /// the coarse knots are kept exactly.
    pub fn densify(&self, field: &dyn VectorField, factor: usize) -> Result<PlannedTrajectory> {
        if factor == 0 {
            return Err(Error::InvalidParameter("densify factor must be at least 1".into()));
        }
        let h = self.dt / factor as f64;
        let mut states = Vec::with_capacity((self.len() - 1) * factor + 1);
        let mut inputs = Vec::with_capacity(states.capacity());
        for k in 0..self.len() - 1 {
            let u = &self.inputs[k];
            let mut x = self.states[k].clone();
            for j in 0..factor {
                states.push(x.clone());
                inputs.push(u.clone());
                if j + 1 < factor {
                    x = rk4_field(field, (k * factor + j) as f64 * h, &x, u, h)?;
                }
            }
        }
        states.push(self.states[self.len() - 1].clone());
        inputs.push(self.inputs[self.len() - 1].clone());
        PlannedTrajectory::new(h, self.tag, states, inputs)
    }

    /// Plan value at time `t`, clamped to the last knot.
    pub fn sample(&self, t: f64) -> (&Vector, &Vector) {
        let k = ((t / self.dt).round().max(0.0) as usize).min(self.len() - 1);
        (&self.states[k], &self.inputs[k])
    }

    /// CSV with header `t,x0..x{n-1},u0..u{m-1}`; the tag goes in a leading
    /// `# dynamics=` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dynamics={}", self.tag)?;
        let n = self.states[0].len();
        let m = self.inputs[0].len();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        wr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:.6}", self.time(k))];
            row.extend(self.states[k].iter().map(|v| format!("{v:.17e}")));
            row.extend(self.inputs[k].iter().map(|v| format!("{v:.17e}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<PlannedTrajectory> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (tag, body) = match text.strip_prefix("# dynamics=") {
            Some(rest) => {
                let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
                (line.trim().parse()?, body)
            }
            None => (DynamicsTag::Nominal, text.as_str()),
        };
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let header = rd.headers()?.clone();
        let n = header.iter().filter(|h| h.starts_with('x')).count();
        let m = header.iter().filter(|h| h.starts_with('u')).count();
        if header.get(0) != Some("t") || n + m + 1 != header.len() || n == 0 {
            return Err(Error::Config(format!("unexpected plan header {header:?}")));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad number in plan: {e}")))?;
            times.push(vals[0]);
            states.push(Vector::from_column_slice(&vals[1..1 + n]));
            inputs.push(Vector::from_column_slice(&vals[1 + n..]));
        }
        if times.len() < 2 {
            return Err(Error::Config("plan needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6) {
            return Err(Error::Config("plan times are not uniform".into()));
        }
        PlannedTrajectory::new(dt, tag, states, inputs)
    }
}
