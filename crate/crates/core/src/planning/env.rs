use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Sides of the regular polygon standing in for the disc in dilations.
pub const DILATION_SIDES: usize = 16;

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = Error;

    fn try_from(v: Vec<Point>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidParameter("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        for i in 0..n {
            let c = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if c <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "polygon is not convex and counter-clockwise at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        Ok(Polygon { vertices })
    }

    /// Axis-aligned rectangle.
    pub fn rect(x0: f64, z0: f64, x1: f64, z1: f64) -> Result<Self> {
        Polygon::new(vec![[x0, z0], [x1, z0], [x1, z1], [x0, z1]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }

    /// Euclidean distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        let mut inside = true;
        let mut best = f64::INFINITY;
        let mut deepest = f64::NEG_INFINITY;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let e = [b[0] - a[0], b[1] - a[1]];
            let len2 = e[0] * e[0] + e[1] * e[1];
            let w = [p[0] - a[0], p[1] - a[1]];
            let s = ((w[0] * e[0] + w[1] * e[1]) / len2).clamp(0.0, 1.0);
            let d = [w[0] - s * e[0], w[1] - s * e[1]];
            best = best.min((d[0] * d[0] + d[1] * d[1]).sqrt());
            // outward normal is (e_z, -e_x) for CCW order
            let side = (e[0] * w[1] - e[1] * w[0]) / len2.sqrt();
            if side < 0.0 {
                inside = false;
            }
            deepest = deepest.max(-side);
        }
        if inside {
            deepest.min(0.0)
        } else {
            best
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.signed_distance(p) <= 0.0
    }

    /// Minkowski sum with the regular polygon circumscribing the disc of
    /// radius `r`, so the result contains the exact dilation.
    pub fn dilate(&self, r: f64) -> Result<Polygon> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter("dilation radius must be nonnegative".into()));
        }
        if r == 0.0 {
            return Ok(self.clone());
        }
        let circ = r / (PI / DILATION_SIDES as f64).cos();
        let mut pts = Vec::with_capacity(self.vertices.len() * DILATION_SIDES);
        for v in &self.vertices {
            for k in 0..DILATION_SIDES {
                // vertices between face normals at multiples of 2 pi / sides
                let a = (2.0 * k as f64 + 1.0) * PI / DILATION_SIDES as f64;
                pts.push([v[0] + circ * a.cos(), v[1] + circ * a.sin()]);
            }
        }
        Polygon::new(convex_hull(pts))
    }
}

/// Andrew's monotone chain; CCW without collinear points.
pub fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 1e-12 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 1e-12 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Axis-aligned position limits `[x_min, x_max] x [z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: [f64; 2],
    pub z: [f64; 2],
}

impl Workspace {
    /// Distance to the nearest wall, negative outside.
    pub fn margin(&self, p: Point) -> f64 {
        (p[0] - self.x[0]).min(self.x[1] - p[0]).min(p[1] - self.z[0]).min(self.z[1] - p[1])
    }

    pub fn shrink(&self, r: f64) -> Result<Workspace> {
        let w = Workspace {
            x: [self.x[0] + r, self.x[1] - r],
            z: [self.z[0] + r, self.z[1] - r],
        };
        if w.x[0] >= w.x[1] || w.z[0] >= w.z[1] {
            return Err(Error::InvalidParameter(format!("workspace collapses under margin {r}")));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Workspace,
    pub obstacles: Vec<Polygon>,
    pub start: Point,
    pub goal: Point,
}

impl Environment {
    pub fn new(workspace: Workspace, obstacles: Vec<Polygon>, start: Point, goal: Point) -> Result<Self> {
        let env = Environment {
            workspace,
            obstacles,
            start,
            goal,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workspace.margin(self.goal) < 0.0 {
            return Err(Error::InvalidParameter("goal outside the workspace".into()));
        }
        if self.workspace.margin(self.start) < 0.0 {
            return Err(Error::InvalidParameter("start outside the workspace".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Signed clearance: distance to the nearest obstacle or wall, negative
    /// when inside an obstacle or outside the workspace.
    pub fn clearance(&self, p: Point) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.signed_distance(p))
            .fold(self.workspace.margin(p), f64::min)
    }

    /// Summed penetration depth into obstacles and walls.
    pub fn penetration(&self, p: Point) -> f64 {
        let walls = (-self.workspace.margin(p)).max(0.0);
        walls + self.obstacles.iter().map(|o| (-o.signed_distance(p)).max(0.0)).sum::<f64>()
    }

    /// Three-obstacle forest over a 10 m course.
    pub fn desk_forest() -> Self {
        let obstacles = vec![
            Polygon::new(vec![[2.0, 0.45], [3.2, 0.65], [3.0, 2.05], [2.1, 1.75]]).unwrap(),
            Polygon::new(vec![[5.2, -1.95], [6.4, -1.75], [6.2, -0.45], [5.3, -0.65]]).unwrap(),
            Polygon::new(vec![[7.8, 0.45], [8.9, 0.65], [8.7, 1.85], [7.9, 1.55]]).unwrap(),
        ];
        Environment::new(
            Workspace {
                x: [-1.0, 11.0],
                z: [-4.0, 4.0],
            },
            obstacles,
            [0.0, 0.0],
            [10.0, 0.0],
        )
        .unwrap()
    }

    /// Denser 20 m forest.
    pub fn full_forest() -> Self {
        let mut obstacles = Vec::new();
        let centres = [
            [3.0, 0.3],
            [5.5, -2.0],
            [6.0, 2.5],
            [8.5, 0.0],
            [10.5, -2.8],
            [11.0, 2.2],
            [13.5, -0.5],
            [15.5, 2.6],
            [16.0, -2.4],
            [18.0, 0.4],
        ];
        for (i, c) in centres.iter().enumerate() {
            let r = 0.6 + 0.15 * (i % 3) as f64;
            let verts: Vec<Point> = (0..5)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / 5.0 + 0.3 * i as f64;
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect();
            obstacles.push(Polygon::new(verts).unwrap());
        }
        Environment::new(
            Workspace {
                x: [-1.0, 21.0],
                z: [-5.0, 5.0],
            },
            obstacles,
            [0.0, 0.0],
            [20.0, 0.0],
        )
        .unwrap()
    }
}

/// Obstacles dilated by `rho` and the workspace shrunk by `rho`.
pub fn tube_inflate(env: &Environment, rho: f64) -> Result<Environment> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter("tube radius must be nonnegative".into()));
    }
    if rho == 0.0 {
        return Ok(env.clone());
    }
    Ok(Environment {
        workspace: env.workspace.shrink(rho)?,
        obstacles: env.obstacles.iter().map(|o| o.dilate(rho)).collect::<Result<_>>()?,
        start: env.start,
        goal: env.goal,
    })
}

/// Closed polyline of a circle, for plotting tube cross-sections.
pub fn circle_polyline(c: Point, r: f64, segments: usize) -> Vec<Point> {
    (0..=segments)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / segments as f64;
            [c[0] + r * a.cos(), c[1] + r * a.sin()]
        })
        .collect()
}
