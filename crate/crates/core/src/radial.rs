//! One-dimensional radial minimizers of the degree-one core energy on the unit disk.
//!
//! GL: `u = f(r) e^{i phi}` with `f(0) = 0`, `f(1) = 1`,
//! `E = 2 pi int_0^1 [ (f'^2 + f^2/r^2)/2 + (1 - f^2)^2/(4 eps^2) ] r dr`.
//!
//! LLG: `m = (sin th e^{i phi}, cos th)` with `th(0) = 0`, `th(1) = pi/2`,
//! `E = 2 pi int_0^1 [ (th'^2 + sin^2 th / r^2)/2 + cos^2 th/(2 eps^2) ] r dr`.
//!
//! The core constant is `gamma(eps) = E_min - pi log(1/eps)`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};

pub const RADIAL_NODES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialKind {
    Gl,
    Llg,
}

#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub kind: RadialKind,
    pub epsilon: f64,
    /// Nodal values on `r_i = i / (len - 1)`: modulus `f` (GL) or polar angle `th` (LLG).
    pub values: Vec<f64>,
    pub energy: f64,
}

impl RadialProfile {
    pub fn gamma(&self) -> f64 {
        self.energy - PI * (1.0 / self.epsilon).ln()
    }

    /// Linear interpolation; constant beyond `r = 1`.
    pub fn eval(&self, r: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = (r.max(0.0) * n as f64).min(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

struct Terms {
    kind: RadialKind,
    inv_eps2: f64,
}

impl Terms {
    /// Angular part, its first and second derivative (without the `1/r`).
    fn angular(&self, v: f64) -> (f64, f64, f64) {
        match self.kind {
            RadialKind::Gl => (0.5 * v * v, v, 1.0),
            RadialKind::Llg => {
                let s = v.sin();
                (0.5 * s * s, 0.5 * (2.0 * v).sin(), (2.0 * v).cos())
            }
        }
    }

    /// Potential, first and second derivative (without the `r`).
    fn potential(&self, v: f64) -> (f64, f64, f64) {
        let k = self.inv_eps2;
        match self.kind {
            RadialKind::Gl => {
                let w = 1.0 - v * v;
                (0.25 * k * w * w, -k * v * w, k * (3.0 * v * v - 1.0))
            }
            RadialKind::Llg => {
                let c = v.cos();
                (0.5 * k * c * c, -0.5 * k * (2.0 * v).sin(), -k * (2.0 * v).cos())
            }
        }
    }
}

fn energy(t: &Terms, v: &[f64], dr: f64) -> f64 {
    let n = v.len() - 1;
    let mut e = 0.0;
    for i in 0..n {
        let rm = (i as f64 + 0.5) * dr;
        let d = v[i + 1] - v[i];
        e += 0.5 * d * d * rm / dr;
    }
    for (i, &x) in v.iter().enumerate().skip(1) {
        let r = i as f64 * dr;
        let c = if i == n { 0.5 } else { 1.0 };
        e += c * dr * (t.angular(x).0 / r + t.potential(x).0 * r);
    }
    2.0 * PI * e
}

fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Damped Newton iteration on the discretized energy.
pub fn minimize(kind: RadialKind, epsilon: f64, nodes: usize) -> Result<RadialProfile> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(VortexError::Config(format!("epsilon {epsilon} outside (0, 1/2]")));
    }
    let n = nodes;
    let dr = 1.0 / n as f64;
    let t = Terms { kind, inv_eps2: 1.0 / (epsilon * epsilon) };
    let end = match kind {
        RadialKind::Gl => 1.0,
        RadialKind::Llg => FRAC_PI_2,
    };
    let mut v: Vec<f64> = (0..=n)
        .map(|i| {
            let r = i as f64 * dr;
            end * (r / epsilon).tanh() / (1.0 / epsilon).tanh()
        })
        .collect();
    let mut e = energy(&t, &v, dr);
    let m = n - 1;
    for _ in 0..200 {
        let mut grad = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m];
        for u in 0..m {
            let i = u + 1;
            let r = i as f64 * dr;
            let rl = (i as f64 - 0.5) * dr;
            let rr = (i as f64 + 0.5) * dr;
            let (_, a1, a2) = t.angular(v[i]);
            let (_, p1, p2) = t.potential(v[i]);
            grad[u] = (rl * (v[i] - v[i - 1]) - rr * (v[i + 1] - v[i])) / dr + dr * (a1 / r + p1 * r);
            diag[u] = (rl + rr) / dr + dr * (a2 / r + p2 * r);
            off[u] = -rr / dr;
        }
        let sub: Vec<f64> = (0..m).map(|u| if u > 0 { off[u - 1] } else { 0.0 }).collect();
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = solve_tridiagonal(&sub, &diag, &off, &neg);
        let smax = step.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        let mut lam = 1.0;
        loop {
            let mut trial = v.clone();
            for u in 0..m {
                trial[u + 1] += lam * step[u];
            }
            let et = energy(&t, &trial, dr);
            if et <= e + 1e-14 * e.abs() || lam < 1e-6 {
                v = trial;
                e = et;
                break;
            }
            lam *= 0.5;
        }
        if smax * lam < 1e-12 {
            return Ok(RadialProfile { kind, epsilon, values: v, energy: e });
        }
    }
    Err(VortexError::SolverDiverged { iterations: 200, residual: f64::NAN })
}

/// Cached minimizer at the default resolution.
pub fn profile(kind: RadialKind, epsilon: f64) -> Result<Arc<RadialProfile>> {
    static CACHE: OnceLock<Mutex<HashMap<(RadialKind, u64), Arc<RadialProfile>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (kind, epsilon.to_bits());
    if let Some(p) = cache.lock().expect("radial cache poisoned").get(&key) {
        return Ok(p.clone());
    }
    let p = Arc::new(minimize(kind, epsilon, RADIAL_NODES)?);
    cache.lock().expect("radial cache poisoned").insert(key, p.clone());
    Ok(p)
}

/// `gamma_num(eps)` for the given model.
pub fn gamma(kind: RadialKind, epsilon: f64) -> Result<f64> {
    Ok(profile(kind, epsilon)?.gamma())
}
