//! Vortex initial data: director and order-parameter seeds, the bubble core,
//! and a vortex-free phase perturbation that injects a set amount of energy.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{total_energy, OrderParameter};
use crate::error::{Result, VortexError};
use crate::field::{project_unit, ComplexField, DirectorField};
use crate::grid::{Domain, Grid2D};
use crate::radial::{self, RadialKind};
use crate::renorm::canonical_map;
use crate::vec3::Vec3;
use crate::vortex::{distance, rho, VortexSet};

/// Core radius in units of epsilon.
pub const C_CORE: f64 = 3.0;
/// Radius of the inner full turn of a bubble core, in units of epsilon.
pub const BUBBLE_INNER: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreProfile {
    /// Polar angle from the pole to the equator over `C_CORE eps`.
    #[default]
    Cap,
    /// A full turn pole to pole over `BUBBLE_INNER eps`, then back to the
    /// equator over a further `C_CORE eps`. The inner turn is a shrinkable bubble.
    Bubble,
}

impl CoreProfile {
    pub fn outer_radius(self, eps: f64) -> f64 {
        match self {
            CoreProfile::Cap => C_CORE * eps,
            CoreProfile::Bubble => (BUBBLE_INNER + C_CORE) * eps,
        }
    }

    /// Polar angle for polarity `+1`; polarity `-1` uses `pi` minus this.
    pub fn angle(self, r: f64, eps: f64) -> f64 {
        match self {
            CoreProfile::Cap => {
                let t = r / (C_CORE * eps);
                if t >= 1.0 {
                    FRAC_PI_2
                } else {
                    FRAC_PI_2 * (FRAC_PI_2 * t).sin()
                }
            }
            CoreProfile::Bubble => {
                let r1 = BUBBLE_INNER * eps;
                if r < r1 {
                    PI * (FRAC_PI_2 * r / r1).sin()
                } else {
                    let t = ((r - r1) / (C_CORE * eps)).min(1.0);
                    PI - FRAC_PI_2 * 0.5 * (1.0 - (PI * t).cos())
                }
            }
        }
    }
}

fn check_seed(grid: &Grid2D, v: &VortexSet, eps: f64, reach: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(VortexError::config(format!("epsilon {eps} outside (0, 1/2]")));
    }
    v.validate()?;
    let r = rho(v, grid)?;
    if r <= reach {
        return Err(VortexError::Unresolvable(format!("rho = {r:.4} but cores need {reach:.4}")));
    }
    Ok(r)
}

/// Director seed: `m = (sin th(r_n) m_*, cos th(r_n))` near each vortex and
/// `(m_*, 0)` elsewhere, with `m_*` the canonical map of the grid's boundary condition.
pub fn seed_vortex_field(grid: &Arc<Grid2D>, v: &VortexSet, eps: f64, polarity: &[i32]) -> Result<DirectorField> {
    seed_vortex_field_with(grid, v, eps, polarity, &vec![CoreProfile::Cap; v.len()])
}

pub fn seed_vortex_field_with(
    grid: &Arc<Grid2D>,
    v: &VortexSet,
    eps: f64,
    polarity: &[i32],
    cores: &[CoreProfile],
) -> Result<DirectorField> {
    if polarity.len() != v.len() || cores.len() != v.len() || polarity.iter().any(|p| p.abs() != 1) {
        return Err(VortexError::config("one polarity (+1 or -1) and one core profile per vortex"));
    }
    let reach = cores.iter().map(|c| c.outer_radius(eps)).fold(4.0 * C_CORE * eps, f64::max);
    check_seed(grid, v, eps, reach)?;
    let ms = canonical_map(grid, v, &grid.bc)?;
    let m = (0..grid.len())
        .map(|k| {
            let x = grid.pos_idx(k);
            let w = ms.u[k];
            for (n, e) in v.entries.iter().enumerate() {
                let r = distance(x, e.position);
                if r < cores[n].outer_radius(eps) {
                    let mut th = cores[n].angle(r, eps);
                    if polarity[n] < 0 {
                        th = PI - th;
                    }
                    return Vec3::new(th.sin() * w.re, th.sin() * w.im, th.cos());
                }
            }
            Vec3::new(w.re, w.im, 0.0)
        })
        .collect();
    project_unit(DirectorField { grid: grid.clone(), m })
}

/// Order-parameter seed `u = prod f(|x - a_n|) m_*` with `f` the radial minimizer.
pub fn seed_gl_field(grid: &Arc<Grid2D>, v: &VortexSet, eps: f64) -> Result<ComplexField> {
    check_seed(grid, v, eps, 4.0 * C_CORE * eps)?;
    let ms = canonical_map(grid, v, &grid.bc)?;
    let prof = radial::profile(RadialKind::Gl, eps)?;
    let u = (0..grid.len())
        .map(|k| {
            if grid.bc.is_dirichlet() && grid.is_boundary(k) {
                return ms.u[k];
            }
            let x = grid.pos_idx(k);
            let f: f64 = v.entries.iter().map(|e| prof.eval(distance(x, e.position))).product();
            ms.u[k] * f
        })
        .collect();
    Ok(ComplexField { grid: grid.clone(), u })
}

/// Smooth phase modulation `e^{i A eta}` that vanishes on the boundary; `A`
/// is chosen by bisection so that the energy rises by `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub target: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: f64,
}

fn default_wavenumber() -> f64 {
    2.0 * PI
}

fn phase_profile(grid: &Grid2D, wavenumber: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (0..2).map(|_| (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI))).collect();
    (0..grid.len())
        .map(|k| {
            if !grid.in_mask(k) {
                return 0.0;
            }
            let x = grid.pos_idx(k);
            let b = match &grid.domain {
                Domain::UnitDisk => (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0),
                Domain::Rectangle { min, max } => {
                    let s = (x[0] - min[0]) / (max[0] - min[0]);
                    let t = (x[1] - min[1]) / (max[1] - min[1]);
                    (PI * s).sin() * (PI * t).sin()
                }
            };
            let wave: f64 =
                modes.iter().map(|&(dir, ph)| (wavenumber * (dir.cos() * x[0] + dir.sin() * x[1]) + ph).cos()).sum();
            if grid.bc.is_dirichlet() && grid.is_boundary(k) {
                0.0
            } else {
                b * wave
            }
        })
        .collect()
}

fn bisect_amplitude<F, G>(base: &F, eps: f64, target: f64, apply: G) -> Result<(F, f64)>
where
    F: OrderParameter,
    G: Fn(f64) -> F,
{
    if !(target > 0.0) {
        return Err(VortexError::config("perturbation target must be positive"));
    }
    let e0 = total_energy(base, eps);
    let gain = |a: f64| total_energy(&apply(a), eps) - e0;
    let mut lo = 0.0;
    let mut hi = 0.1;
    let mut n = 0;
    while gain(hi) < target {
        lo = hi;
        hi *= 2.0;
        n += 1;
        if n > 60 {
            return Err(VortexError::Numerical { time: 0.0, detail: "perturbation amplitude diverged".into() });
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let g = gain(mid);
        if (g - target).abs() <= 1e-9 * target {
            lo = mid;
            hi = mid;
            break;
        }
        if g < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    Ok((apply(a), a))
}

/// Returns the perturbed field and the amplitude used.
pub fn perturb_gl(u: &ComplexField, eps: f64, p: &Perturbation, seed: u64) -> Result<(ComplexField, f64)> {
    let eta = phase_profile(&u.grid, p.wavenumber, seed);
    bisect_amplitude(u, eps, p.target, |a| ComplexField {
        grid: u.grid.clone(),
        u: u.u.iter().zip(&eta).map(|(z, e)| z * Complex64::from_polar(1.0, a * e)).collect(),
    })
}

/// Rotates the in-plane part of `m` by `A eta`.
pub fn perturb_llg(m: &DirectorField, eps: f64, p: &Perturbation, seed: u64) -> Result<(DirectorField, f64)> {
    let eta = phase_profile(&m.grid, p.wavenumber, seed);
    bisect_amplitude(m, eps, p.target, |a| DirectorField {
        grid: m.grid.clone(),
        m: m.m
            .iter()
            .zip(&eta)
            .map(|(v, e)| {
                let (s, c) = (a * e).sin_cos();
                Vec3::new(c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z())
            })
            .collect(),
    })
}
