use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::grid::{Domain, Grid2D};

/// Point in the plane. The plane is identified with C by `[x, y] <-> x + i y`.
pub type Point = [f64; 2];

/// A point vortex: position, S^1 winding degree and S^2 gyro-coefficient.
///
/// `q` is a half-integer for micromagnetic vortices; for Ginzburg-Landau
/// vortices it is unused and conventionally set to `degree / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub position: Point,
    pub degree: i32,
    #[serde(default)]
    pub q: f64,
}

impl Vortex {
    pub fn new(position: Point, degree: i32, q: f64) -> Self {
        Vortex { position, degree, q }
    }

    /// Ginzburg-Landau vortex, `q = d / 2`.
    pub fn gl(position: Point, degree: i32) -> Self {
        Vortex { position, degree, q: 0.5 * degree as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VortexSet {
    pub entries: Vec<Vortex>,
}

impl VortexSet {
    pub fn new(entries: Vec<Vortex>) -> Self {
        VortexSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.entries.iter().map(|v| v.position).collect()
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.entries.iter().map(|v| v.degree).collect()
    }

    pub fn total_degree(&self) -> i32 {
        self.entries.iter().map(|v| v.degree).sum()
    }

    /// Checks degrees are +-1 and q is a half-integer.
    pub fn validate(&self) -> Result<()> {
        for (n, v) in self.entries.iter().enumerate() {
            if v.degree.abs() != 1 {
                return Err(VortexError::config(format!("vortex {n}: degree {} is not +-1", v.degree)));
            }
            if !v.position.iter().all(|c| c.is_finite()) {
                return Err(VortexError::config(format!("vortex {n}: non-finite position")));
            }
            if !is_half_odd(v.q) {
                return Err(VortexError::config(format!("vortex {n}: q = {} is not in 1/2 + Z", v.q)));
            }
        }
        Ok(())
    }
}

/// True when `q` lies in 1/2 + Z.
pub fn is_half_odd(q: f64) -> bool {
    let t = q - 0.5;
    (t - t.round()).abs() < 1e-12
}

/// Rounds to the nearest element of 1/2 + Z.
pub fn round_half_odd(x: f64) -> f64 {
    (x - 0.5).round() + 0.5
}

/// Rounds to the nearest element of (1/2) Z.
pub fn round_half(x: f64) -> f64 {
    (2.0 * x).round() / 2.0
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Minimal inter-vortex / vortex-boundary distance of a configuration:
/// `min{ 1/2 min_{m != n} |a_m - a_n|, min_n dist(a_n, boundary) }`.
pub fn rho(v: &VortexSet, grid: &Grid2D) -> Result<f64> {
    rho_domain(v, Some(&grid.domain))
}

/// As [`rho`], with `None` meaning the whole plane (no boundary term).
pub fn rho_domain(v: &VortexSet, domain: Option<&Domain>) -> Result<f64> {
    if v.is_empty() {
        return Err(VortexError::EmptyVortexSet);
    }
    let mut r = f64::INFINITY;
    for (n, a) in v.entries.iter().enumerate() {
        for b in &v.entries[n + 1..] {
            r = r.min(0.5 * distance(a.position, b.position));
        }
        if let Some(d) = domain {
            r = r.min(d.boundary_distance(a.position));
        }
    }
    Ok(r)
}

/// The pair (epsilon, alpha_eps) with `alpha_eps * log(1/eps) = alpha0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
    pub alpha0: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon: f64, alpha0: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(VortexError::config(format!("epsilon = {epsilon} not in (0, 1/2]")));
        }
        if !(alpha0 >= 0.0) || !alpha0.is_finite() {
            return Err(VortexError::config(format!("alpha0 = {alpha0} must be non-negative")));
        }
        Ok(EpsilonSchedule { epsilon, alpha0 })
    }

    pub fn log_inv_eps(&self) -> f64 {
        (1.0 / self.epsilon).ln()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha0 / self.log_inv_eps()
    }
}
