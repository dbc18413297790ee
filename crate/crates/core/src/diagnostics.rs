//! Concentration quantities and vortex tracking.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::field::{cell_in_mask, ComplexField, DirectorField, ScalarField, Staggering, VectorField};
use crate::grid::Grid2D;
use crate::ops::{curl, gradient, wrap_angle};
use crate::radial::{self, RadialKind};
use crate::renorm::{renormalized_energy, RenormalizedEnergyModel};
use crate::stencil::{gradient_energy, gradient_energy_density, node_sum};
use crate::vec3::Vec3;
use crate::vortex::{distance, round_half_odd, Point, VortexSet};

/// Fields with a Ginzburg-Landau type energy and a planar part.
pub trait OrderParameter: Sync {
    fn grid(&self) -> &Arc<Grid2D>;
    /// `u` itself, or `m1 + i m2`.
    fn planar_part(&self) -> ComplexField;
    fn potential(&self, k: usize, eps: f64) -> f64;
    fn gradient_energy(&self) -> f64;
    fn gradient_density(&self) -> Vec<f64>;
    fn radial_kind(&self) -> RadialKind;
    /// Lattice vorticity, where it exists.
    fn lattice_vorticity(&self) -> Option<ScalarField>;
}

impl OrderParameter for DirectorField {
    fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    fn planar_part(&self) -> ComplexField {
        self.planar()
    }
    fn potential(&self, k: usize, eps: f64) -> f64 {
        let z = self.m[k].z();
        z * z / (2.0 * eps * eps)
    }
    fn gradient_energy(&self) -> f64 {
        gradient_energy(&self.grid, &self.m, |v: Vec3| v.norm_sq())
    }
    fn gradient_density(&self) -> Vec<f64> {
        gradient_energy_density(&self.grid, &self.m, |v: Vec3| v.norm_sq())
    }
    fn radial_kind(&self) -> RadialKind {
        RadialKind::Llg
    }
    fn lattice_vorticity(&self) -> Option<ScalarField> {
        Some(vorticity_lattice(self))
    }
}

impl OrderParameter for ComplexField {
    fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }
    fn planar_part(&self) -> ComplexField {
        self.clone()
    }
    fn potential(&self, k: usize, eps: f64) -> f64 {
        let w = 1.0 - self.u[k].norm_sqr();
        w * w / (4.0 * eps * eps)
    }
    fn gradient_energy(&self) -> f64 {
        gradient_energy(&self.grid, &self.u, |z: Complex64| z.norm_sqr())
    }
    fn gradient_density(&self) -> Vec<f64> {
        gradient_energy_density(&self.grid, &self.u, |z: Complex64| z.norm_sqr())
    }
    fn radial_kind(&self) -> RadialKind {
        RadialKind::Gl
    }
    fn lattice_vorticity(&self) -> Option<ScalarField> {
        None
    }
}

/// Lattice energy density; its quadrature total equals [`total_energy`].
pub fn energy_density<F: OrderParameter>(f: &F, eps: f64) -> ScalarField {
    let g = f.grid();
    let mut values = f.gradient_density();
    for (k, v) in values.iter_mut().enumerate() {
        if g.in_mask(k) {
            *v += f.potential(k, eps);
        }
    }
    ScalarField { grid: g.clone(), values, staggering: Staggering::Node }
}

/// Edge gradient energy plus `h^2`-weighted potential.
pub fn total_energy<F: OrderParameter>(f: &F, eps: f64) -> f64 {
    f.gradient_energy() + node_sum(f.grid(), |k| f.potential(k, eps))
}

/// Pointwise `<m, d1 m x d2 m>` with central differences.
pub fn vorticity(m: &DirectorField) -> ScalarField {
    let g = &m.grid;
    let d = gradient(g, &m.m);
    let values = (0..g.len()).map(|k| if g.in_mask(k) { m.m[k].dot(d[k][0].cross(d[k][1])) } else { 0.0 }).collect();
    ScalarField { grid: g.clone(), values, staggering: Staggering::Node }
}

fn solid_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    2.0 * a.dot(b.cross(c)).atan2(1.0 + a.dot(b) + b.dot(c) + c.dot(a))
}

/// Plaquette vorticity: signed spherical area of the image of each cell
/// (two triangles), divided by `h^2`. Cell masses add up exactly.
pub fn vorticity_lattice(m: &DirectorField) -> ScalarField {
    let g = &m.grid;
    let nx = g.nx;
    let inv = 1.0 / (g.h * g.h);
    let mut values = vec![0.0; g.len()];
    values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = g.idx(i, j);
            if !cell_in_mask(g, k) {
                continue;
            }
            let (a, b, c, d) = (m.m[k], m.m[k + 1], m.m[k + nx + 1], m.m[k + nx]);
            *o = (solid_angle(a, b, c) + solid_angle(a, c, d)) * inv;
        }
    });
    ScalarField { grid: g.clone(), values, staggering: Staggering::Cell }
}

#[inline]
fn edge_flow(a: Complex64, b: Complex64) -> f64 {
    let ra = a.norm();
    let rb = b.norm();
    if ra == 0.0 || rb == 0.0 {
        return 0.0;
    }
    ra * rb * wrap_angle((b * a.conj()).arg())
}

/// Plaquette Jacobian `1/2 curl j` from the lattice supercurrent. For unit-modulus
/// fields every cell mass is `pi` times an integer.
pub fn planar_jacobian(u: &ComplexField) -> ScalarField {
    let g = &u.grid;
    let nx = g.nx;
    let inv = 0.5 / (g.h * g.h);
    let mut values = vec![0.0; g.len()];
    values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = g.idx(i, j);
            if !cell_in_mask(g, k) {
                continue;
            }
            // Each edge is evaluated in its positive lattice direction only, so
            // neighbouring cells cancel exactly even for antipodal phases.
            let (a, b, c, d) = (u.u[k], u.u[k + 1], u.u[k + nx + 1], u.u[k + nx]);
            let circ = edge_flow(a, b) + edge_flow(b, c) - edge_flow(d, c) - edge_flow(a, d);
            *o = circ * inv;
        }
    });
    ScalarField { grid: g.clone(), values, staggering: Staggering::Cell }
}

/// Pointwise Jacobian `d1 u1 d2 u2 - d2 u1 d1 u2` with central differences.
pub fn jacobian_pointwise(u: &ComplexField) -> ScalarField {
    let g = &u.grid;
    let d = gradient(g, &u.u);
    let values = d.iter().map(|[a, b]| a.re * b.im - b.re * a.im).collect();
    ScalarField { grid: g.clone(), values, staggering: Staggering::Node }
}

/// `j(u) = (i u, grad u) = u1 grad u2 - u2 grad u1`.
pub fn supercurrent(u: &ComplexField) -> VectorField {
    let g = &u.grid;
    let d = gradient(g, &u.u);
    let values = u.u.iter().zip(&d).map(|(z, [a, b])| [z.re * a.im - z.im * a.re, z.re * b.im - z.im * b.re]).collect();
    VectorField { grid: g.clone(), values }
}

/// L1 norms of `J - m3 omega` and `omega - 3 m3 J - curl(m2 m3 grad m1 - m1 m3 grad m2)`.
pub fn identity_residuals(m: &DirectorField) -> (f64, f64) {
    let g = &m.grid;
    let omega = vorticity(m);
    let jac = jacobian_pointwise(&m.planar());
    let m1: Vec<f64> = m.m.iter().map(|v| v.x()).collect();
    let m2: Vec<f64> = m.m.iter().map(|v| v.y()).collect();
    let d1 = gradient(g, &m1);
    let d2 = gradient(g, &m2);
    let flux: Vec<[f64; 2]> = (0..g.len())
        .map(|k| {
            let v = m.m[k];
            let a = v.y() * v.z();
            let b = v.x() * v.z();
            [a * d1[k][0] - b * d2[k][0], a * d1[k][1] - b * d2[k][1]]
        })
        .collect();
    let c = curl(g, &flux);
    let r1 = node_sum(g, |k| (jac.values[k] - m.m[k].z() * omega.values[k]).abs());
    let r2 = node_sum(g, |k| (omega.values[k] - 3.0 * m.m[k].z() * jac.values[k] - c[k]).abs());
    (r1, r2)
}

/// Fraction of the square `[p - h/2, p + h/2]^2` inside the disk `B_r(c)`.
fn cover_fraction(p: Point, h: f64, c: Point, r: f64) -> f64 {
    let d = distance(p, c);
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    if d + half_diag <= r {
        return 1.0;
    }
    if d - half_diag >= r {
        return 0.0;
    }
    const S: usize = 8;
    let mut n = 0;
    for a in 0..S {
        for b in 0..S {
            let q = [p[0] + h * ((a as f64 + 0.5) / S as f64 - 0.5), p[1] + h * ((b as f64 + 0.5) / S as f64 - 0.5)];
            if distance(q, c) <= r {
                n += 1;
            }
        }
    }
    n as f64 / (S * S) as f64
}

fn window_sum(s: &ScalarField, c: Point, r: f64) -> f64 {
    let g = &s.grid;
    let (ci, cj) = g.lattice_coords(c);
    let span = (r / g.h).ceil() as isize + 2;
    let i0 = (ci.floor() as isize - span).max(0) as usize;
    let i1 = ((ci.ceil() as isize + span) as usize).min(g.nx - 1);
    let j0 = (cj.floor() as isize - span).max(0) as usize;
    let j1 = ((cj.ceil() as isize + span) as usize).min(g.ny - 1);
    let mut acc = 0.0;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let k = g.idx(i, j);
            let w = s.quad_weight(k);
            if w == 0.0 {
                continue;
            }
            acc += w * s.values[k] * cover_fraction(s.position(k), g.h, c, r);
        }
    }
    acc
}

/// `h^2`-weighted sum over `B_r(center)` with fractional weights for cut cells.
pub fn ball_mass(s: &ScalarField, center: Point, r: f64) -> Result<f64> {
    if s.grid.domain.boundary_distance(center) <= r {
        return Err(VortexError::BallOutsideDomain { x: center[0], y: center[1], radius: r });
    }
    Ok(window_sum(s, center, r))
}

fn interpolate(u: &ComplexField, x: Point) -> Complex64 {
    let g = &u.grid;
    let (s, t) = g.lattice_coords(x);
    let i = (s.floor().max(0.0) as usize).min(g.nx - 2);
    let j = (t.floor().max(0.0) as usize).min(g.ny - 2);
    let fs = s - i as f64;
    let ft = t - j as f64;
    let k = g.idx(i, j);
    u.u[k] * ((1.0 - fs) * (1.0 - ft))
        + u.u[k + 1] * (fs * (1.0 - ft))
        + u.u[k + g.nx] * ((1.0 - fs) * ft)
        + u.u[k + g.nx + 1] * (fs * ft)
}

/// Winding of `u` along the circle `|x - center| = radius` (bilinear samples).
pub fn winding_number(u: &ComplexField, center: Point, radius: f64) -> Result<i32> {
    let g = &u.grid;
    if g.domain.boundary_distance(center) < radius {
        return Err(VortexError::BallOutsideDomain { x: center[0], y: center[1], radius });
    }
    let n = ((16.0 * PI * radius / g.h).ceil() as usize).max(64);
    let at = |s: usize| {
        let t = 2.0 * PI * s as f64 / n as f64;
        interpolate(u, [center[0] + radius * t.cos(), center[1] + radius * t.sin()])
    };
    let mut total = 0.0;
    let mut prev = at(0);
    for s in 1..=n {
        let z = at(s % n);
        if z.norm() == 0.0 {
            return Err(VortexError::Numerical { time: f64::NAN, detail: "zero on winding contour".into() });
        }
        total += wrap_angle((z * prev.conj()).arg());
        prev = z;
    }
    Ok((total / (2.0 * PI)).round() as i32)
}

/// A concentrated cluster of Jacobian mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianCluster {
    pub position: Point,
    pub mass: f64,
    /// Set when several clusters closer than `min_sep` were merged.
    pub merged: bool,
}

pub const DEFAULT_THRESHOLD: f64 = 0.6 * PI;
/// Clusters above this fraction of the threshold take part in merging; a
/// shrinking bubble splits its core into several such pieces.
const MERGE_FRACTION: f64 = 0.1;

pub fn default_min_sep(h: f64, eps: f64) -> f64 {
    (8.0 * h).max(6.0 * eps)
}

/// Clusters of same-sign plaquette mass, merged within `min_sep`, refined by
/// a quadratic peak fit plus a windowed centroid and kept when the merged
/// mass reaches `threshold`.
pub fn locate_vortices(jac: &ScalarField, threshold: f64, min_sep: f64) -> Vec<JacobianCluster> {
    let g = &jac.grid;
    let n = g.len();
    let mass: Vec<f64> = (0..n).map(|k| jac.values[k] * jac.quad_weight(k)).collect();
    let peak = mass.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    if peak == 0.0 {
        return Vec::new();
    }
    let floor = 1e-4 * peak;
    let mut label = vec![usize::MAX; n];
    let mut clusters: Vec<(f64, Point, f64, usize)> = Vec::new(); // mass, centroid, |mass|, argmax
    for start in 0..n {
        if label[start] != usize::MAX || mass[start].abs() <= floor {
            continue;
        }
        let sign = mass[start].signum();
        let id = clusters.len();
        let mut stack = vec![start];
        label[start] = id;
        let (mut m, mut am, mut cx, mut cy) = (0.0, 0.0, 0.0, 0.0);
        let mut best = start;
        while let Some(k) = stack.pop() {
            let w = mass[k];
            m += w;
            am += w.abs();
            let p = jac.position(k);
            cx += w.abs() * p[0];
            cy += w.abs() * p[1];
            if w.abs() > mass[best].abs() {
                best = k;
            }
            let (i, j) = g.ij(k);
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let ii = i as isize + di;
                    let jj = j as isize + dj;
                    if ii < 0 || jj < 0 || ii as usize >= g.nx || jj as usize >= g.ny {
                        continue;
                    }
                    let q = g.idx(ii as usize, jj as usize);
                    if label[q] == usize::MAX && mass[q].abs() > floor && mass[q].signum() == sign {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        clusters.push((m, [cx / am, cy / am], am, best));
    }
    let mut found: Vec<JacobianCluster> = clusters
        .iter()
        .filter(|c| c.0.abs() >= MERGE_FRACTION * threshold)
        .map(|c| JacobianCluster { position: peak_fit(jac, c.3).unwrap_or(c.1), mass: c.0, merged: false })
        .collect();

    let mut merged = true;
    while merged {
        merged = false;
        'outer: for a in 0..found.len() {
            for b in a + 1..found.len() {
                if distance(found[a].position, found[b].position) < min_sep {
                    let (ma, mb) = (found[a].mass.abs(), found[b].mass.abs());
                    let p = [
                        (ma * found[a].position[0] + mb * found[b].position[0]) / (ma + mb),
                        (ma * found[a].position[1] + mb * found[b].position[1]) / (ma + mb),
                    ];
                    found[a] = JacobianCluster { position: p, mass: found[a].mass + found[b].mass, merged: true };
                    found.remove(b);
                    log::warn!("merged vortex clusters closer than {min_sep}");
                    merged = true;
                    break 'outer;
                }
            }
        }
    }
    for c in &mut found {
        c.position = window_centroid(jac, c.position, min_sep);
    }
    found.retain(|c| c.mass.abs() >= threshold);
    found.sort_by(|a, b| a.position[0].total_cmp(&b.position[0]).then(a.position[1].total_cmp(&b.position[1])));
    found
}

/// Vertex of the quadratic fitted to the 3x3 block around cell `k`.
fn peak_fit(jac: &ScalarField, k: usize) -> Option<Point> {
    let g = &jac.grid;
    let (i, j) = g.ij(k);
    if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
        return None;
    }
    let v = |di: isize, dj: isize| jac.values[g.idx((i as isize + di) as usize, (j as isize + dj) as usize)].abs();
    let fx = 0.5 * (v(1, 0) - v(-1, 0));
    let fy = 0.5 * (v(0, 1) - v(0, -1));
    let fxx = v(1, 0) - 2.0 * v(0, 0) + v(-1, 0);
    let fyy = v(0, 1) - 2.0 * v(0, 0) + v(0, -1);
    let fxy = 0.25 * (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1));
    let det = fxx * fyy - fxy * fxy;
    if !(fxx < 0.0 && det > 0.0) {
        return None;
    }
    let dx = -(fyy * fx - fxy * fy) / det;
    let dy = -(fxx * fy - fxy * fx) / det;
    if dx.abs() > 1.0 || dy.abs() > 1.0 {
        return None;
    }
    let p = jac.position(k);
    Some([p[0] + dx * g.h, p[1] + dy * g.h])
}

fn window_centroid(jac: &ScalarField, start: Point, radius: f64) -> Point {
    let g = &jac.grid;
    let mut c = start;
    for _ in 0..30 {
        let (ci, cj) = g.lattice_coords(c);
        let span = (radius / g.h).ceil() as isize + 1;
        let mut acc = [0.0; 3];
        for j in (cj.floor() as isize - span).max(0)..=(cj.ceil() as isize + span).min(g.ny as isize - 1) {
            for i in (ci.floor() as isize - span).max(0)..=(ci.ceil() as isize + span).min(g.nx as isize - 1) {
                let k = g.idx(i as usize, j as usize);
                let w = jac.quad_weight(k);
                if w == 0.0 {
                    continue;
                }
                let p = jac.position(k);
                let f = cover_fraction(p, g.h, c, radius);
                let m = f * w * jac.values[k].abs();
                acc[0] += m;
                acc[1] += m * p[0];
                acc[2] += m * p[1];
            }
        }
        if acc[0] == 0.0 {
            break;
        }
        let next = [acc[1] / acc[0], acc[2] / acc[0]];
        let moved = distance(next, c);
        c = next;
        if moved < 1e-6 * g.h {
            break;
        }
    }
    c
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VortexReading {
    pub position: Point,
    pub degree: i32,
    pub jacobian_mass: f64,
    /// Raw vorticity mass in the window (director fields only).
    pub vorticity_mass: Option<f64>,
    /// `vorticity_mass / 4 pi` rounded to a half-odd integer.
    pub q_hat: Option<f64>,
    /// `(vorticity_mass - 2 pi d) / 4 pi`.
    pub q_shifted: Option<f64>,
    pub window_radius: f64,
    pub merged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    pub threshold: f64,
    pub min_sep: f64,
}

impl TrackOptions {
    pub fn for_grid(g: &Grid2D, eps: f64) -> Self {
        TrackOptions { threshold: DEFAULT_THRESHOLD, min_sep: default_min_sep(g.h, eps) }
    }
}

/// Locates vortices and reads their degree, Jacobian and vorticity masses.
pub fn read_vortices<F: OrderParameter>(f: &F, opts: TrackOptions) -> Vec<VortexReading> {
    let u = f.planar_part();
    let jac = planar_jacobian(&u);
    let omega = f.lattice_vorticity();
    let g = f.grid();
    locate_vortices(&jac, opts.threshold, opts.min_sep)
        .into_iter()
        .map(|c| {
            let room = g.domain.boundary_distance(c.position) - g.h;
            let r = opts.min_sep.min(room).max(g.h);
            let degree = winding_number(&u, c.position, r).unwrap_or_else(|_| (c.mass / PI).round() as i32);
            let jacobian_mass = window_sum(&jac, c.position, r);
            let vorticity_mass = omega.as_ref().map(|w| window_sum(w, c.position, r));
            VortexReading {
                position: c.position,
                degree,
                jacobian_mass,
                vorticity_mass,
                q_hat: vorticity_mass.map(|w| round_half_odd(w / (4.0 * PI))),
                q_shifted: vorticity_mass.map(|w| (w - 2.0 * PI * degree as f64) / (4.0 * PI)),
                window_radius: r,
                merged: c.merged,
            }
        })
        .collect()
}

/// `E - N (pi log(1/eps) + gamma_num(eps)) - W(a, d)`.
pub fn excess_energy<F: OrderParameter>(
    f: &F,
    eps: f64,
    v: &VortexSet,
    model: &RenormalizedEnergyModel,
) -> Result<f64> {
    if v.is_empty() {
        return Err(VortexError::EmptyVortexSet);
    }
    let gamma = radial::gamma(f.radial_kind(), eps)?;
    let w = renormalized_energy(v, model)?;
    let n = v.len() as f64;
    Ok(total_energy(f, eps) - n * (PI * (1.0 / eps).ln() + gamma) - w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, BoundaryCondition, Domain};

    fn square(n: usize) -> Arc<Grid2D> {
        make_grid(n, n, Domain::unit_square(), BoundaryCondition::Neumann).unwrap()
    }

    #[test]
    fn constant_field_has_zero_energy() {
        let m = DirectorField::uniform(square(33), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(energy_density(&m, 0.1).max_abs(), 0.0);
        assert_eq!(total_energy(&m, 0.1), 0.0);
    }

    #[test]
    fn planar_rotation_has_half_density() {
        let g = square(65);
        let m = DirectorField::from_fn(g.clone(), |p| Vec3::new(p[0].cos(), p[0].sin(), 0.0));
        let e = energy_density(&m, 0.1);
        let err = g.mask_indices().filter(|&k| g.is_interior(k)).map(|k| (e.values[k] - 0.5).abs()).fold(0.0, f64::max);
        assert!(err < g.h * g.h, "{err}");
        assert!((total_energy(&m, 0.1) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn smooth_phase_has_no_jacobian_mass() {
        let g = square(49);
        let u = ComplexField::from_fn(g, |p| Complex64::from_polar(1.0, 3.0 * p[0] * p[1] + (2.0 * p[1]).sin()));
        assert!(planar_jacobian(&u).total().abs() < 1e-10);
    }

    #[test]
    fn vortex_plaquette_carries_pi() {
        let g = square(33);
        let c = [0.51, 0.47];
        let u = ComplexField::from_fn(g, |p| Complex64::new(p[0] - c[0], p[1] - c[1]) / distance(p, c));
        let j = planar_jacobian(&u);
        assert!((j.total() - PI).abs() < 1e-12);
        let found = locate_vortices(&j, DEFAULT_THRESHOLD, 8.0 * j.grid.h);
        assert_eq!(found.len(), 1);
        assert!(distance(found[0].position, c) < j.grid.h);
        assert_eq!(winding_number(&u, c, 0.2).unwrap(), 1);
    }

    #[test]
    fn supercurrent_of_plane_wave() {
        let g = square(65);
        let k = 3.0;
        let u = ComplexField::from_fn(g.clone(), |p| Complex64::from_polar(1.0, k * p[0]));
        let j = supercurrent(&u);
        for n in g.mask_indices().filter(|&n| g.is_interior(n)) {
            assert!((j.values[n][0] - k).abs() < k * k * k * g.h * g.h);
            assert!(j.values[n][1].abs() < 1e-12);
        }
        let r = ComplexField::from_fn(g.clone(), |p| Complex64::new(p[0] * p[1], 0.0));
        assert!(supercurrent(&r).values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn lattice_and_pointwise_vorticity_agree_for_smooth_fields() {
        let g = square(129);
        let m = crate::field::project_unit(DirectorField::from_fn(g.clone(), |p| {
            Vec3::new((3.0 * p[0]).cos(), (2.0 * p[1]).sin(), 0.5 + p[0] * p[1])
        }))
        .unwrap();
        let a = vorticity(&m).total();
        let b = vorticity_lattice(&m).total();
        assert!((a - b).abs() < 1e-3 * a.abs().max(1e-3), "{a} {b}");
    }

    #[test]
    fn identity_residuals_shrink_under_refinement() {
        let field = |n: usize| {
            let g = square(n);
            crate::field::project_unit(DirectorField::from_fn(g, |p| Vec3::new(p[0].cos(), p[1].sin(), 0.5))).unwrap()
        };
        let (a1, a2) = identity_residuals(&field(65));
        let (b1, b2) = identity_residuals(&field(129));
        assert!(a1 / b1 >= 1.5 && a2 / b2 >= 1.5, "{a1} {b1} {a2} {b2}");
        let c = DirectorField::uniform(square(33), Vec3::new(0.0, 0.6, 0.8));
        assert_eq!(identity_residuals(&c), (0.0, 0.0));
    }

    #[test]
    fn ball_mass_of_unit_density() {
        let g = make_grid(129, 129, Domain::UnitDisk, BoundaryCondition::Neumann).unwrap();
        let s = ScalarField::from_fn(g.clone(), |_| 1.0);
        let m = ball_mass(&s, [0.0, 0.0], 0.5).unwrap();
        assert!((m - PI / 4.0).abs() < 0.01 * PI / 4.0);
        assert!(matches!(ball_mass(&s, [0.6, 0.0], 0.4), Err(VortexError::BallOutsideDomain { .. })));
    }

    #[test]
    fn vortex_free_field_has_no_readings() {
        let u = ComplexField::from_fn(square(33), |p| Complex64::from_polar(1.0, p[0]));
        assert!(locate_vortices(&planar_jacobian(&u), DEFAULT_THRESHOLD, 0.2).is_empty());
    }
}
