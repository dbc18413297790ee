//! Canonical harmonic map, renormalized energy and the stress-energy identity.
//!
//! Positions are identified with complex numbers. The sum over `m != n` runs
//! over ordered pairs, so every unordered pair enters twice.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::field::{ComplexField, DirectorField, ScalarField, Staggering, TensorField};
use crate::grid::{make_grid, product_map, BoundaryCondition, BoundaryData, Domain, Grid2D};
use crate::ops::{gradient, wrap_angle};
use crate::solver::GraphLaplacian;
use crate::vortex::{distance, rho_domain, Point, VortexSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

impl From<&BoundaryCondition> for BcKind {
    fn from(bc: &BoundaryCondition) -> Self {
        if bc.is_dirichlet() {
            BcKind::Dirichlet
        } else {
            BcKind::Neumann
        }
    }
}

/// Harmonic phase `theta` in `m_* = e^{i theta} prod (...)`.
#[derive(Debug, Clone)]
pub struct HarmonicCorrection {
    pub theta: ScalarField,
    pub bc_kind: BcKind,
}

/// Canonical map on a lattice, kept in factored form so that its gradient can
/// be evaluated anywhere: an analytic singular phase plus a smooth lattice phase.
#[derive(Debug, Clone)]
pub struct CanonicalMap {
    pub grid: Arc<Grid2D>,
    /// Charges of the singular factor (vortices plus image charges if any).
    pub charges: Vec<(Point, i32)>,
    pub correction: HarmonicCorrection,
    dtheta: Vec<[f64; 2]>,
}

/// Gradient of `sum d arg(x - b)`.
pub fn phase_gradient(charges: &[(Point, i32)], x: Point) -> [f64; 2] {
    let mut g = [0.0; 2];
    for &(b, d) in charges {
        let dx = x[0] - b[0];
        let dy = x[1] - b[1];
        let r2 = dx * dx + dy * dy;
        if r2 > 0.0 {
            g[0] -= d as f64 * dy / r2;
            g[1] += d as f64 * dx / r2;
        }
    }
    g
}

fn singular_charges(domain: &Domain, bc: &BoundaryCondition, v: &VortexSet) -> Vec<(Point, i32)> {
    let mut c: Vec<(Point, i32)> = v.entries.iter().map(|e| (e.position, e.degree)).collect();
    if matches!(domain, Domain::UnitDisk) && !bc.is_dirichlet() {
        // Inversion images make the normal current vanish on the unit circle.
        for e in &v.entries {
            let a = e.position;
            let r2 = a[0] * a[0] + a[1] * a[1];
            if r2 > 0.0 {
                c.push(([a[0] / r2, a[1] / r2], -e.degree));
            }
        }
    }
    c
}

fn singular_phase_difference(charges: &[(Point, i32)], x: Point, y: Point) -> f64 {
    wrap_angle((product_map(charges, y) / product_map(charges, x)).arg())
}

/// Boundary values of `theta`, continuously lifted along the boundary.
fn dirichlet_lift(
    g: &Grid2D,
    charges: &[(Point, i32)],
    gdata: &BoundaryData,
    v: &VortexSet,
) -> Result<Vec<(usize, f64)>> {
    let reference = gdata.charges(v);
    let ref_deg: i32 = reference.iter().map(|c| c.1).sum();
    let deg: i32 = charges.iter().map(|c| c.1).sum();
    if ref_deg != deg {
        return Err(VortexError::Geometry(format!("boundary data has degree {ref_deg} but the vortices carry {deg}")));
    }
    let center = match &g.domain {
        Domain::UnitDisk => [0.0, 0.0],
        Domain::Rectangle { min, max } => [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])],
    };
    let mut nodes: Vec<(usize, f64)> = g
        .boundary_indices()
        .map(|k| {
            let p = g.pos_idx(k);
            (k, (p[1] - center[1]).atan2(p[0] - center[0]))
        })
        .collect();
    nodes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let raw: Vec<f64> = nodes
        .iter()
        .map(|&(k, _)| {
            let x = g.pos_idx(k);
            (product_map(&reference, x) / product_map(charges, x)).arg()
        })
        .collect();
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = raw[0];
    out.push((nodes[0].0, acc));
    for n in 1..nodes.len() {
        acc += wrap_angle(raw[n] - raw[n - 1]);
        out.push((nodes[n].0, acc));
    }
    let closing = acc + wrap_angle(raw[0] - raw[raw.len() - 1]) - raw[0];
    if closing.abs() > PI {
        return Err(VortexError::Geometry(format!(
            "boundary phase winds {:.0} times relative to the vortices",
            closing / (2.0 * PI)
        )));
    }
    Ok(out)
}

/// Solves for the harmonic phase and assembles the factored canonical map.
pub fn canonical_map_factored(grid: &Arc<Grid2D>, v: &VortexSet, bc: &BoundaryCondition) -> Result<CanonicalMap> {
    if v.is_empty() {
        return Err(VortexError::EmptyVortexSet);
    }
    let grid = if &grid.bc == bc { grid.clone() } else { grid.with_bc(bc.clone()) };
    let g = &*grid;
    let r = rho_domain(v, Some(&g.domain))?;
    if r <= 4.0 * g.h {
        return Err(VortexError::Unresolvable(format!("rho = {r} <= 4h = {}", 4.0 * g.h)));
    }
    let charges = singular_charges(&g.domain, bc, v);
    let n = g.len();
    let mut theta = vec![0.0; n];
    match bc {
        BoundaryCondition::Dirichlet { g: gdata } => {
            let lifted = dirichlet_lift(g, &charges, gdata, v)?;
            let free: Vec<bool> = (0..n).map(|k| g.is_interior(k)).collect();
            let a = GraphLaplacian::new(g, free);
            for &(k, t) in &lifted {
                theta[k] = t;
            }
            let mut rhs = vec![0.0; n];
            for k in 0..n {
                if a.is_free(k) {
                    a.for_each_edge(k, |nb, w| {
                        if !a.is_free(nb) {
                            rhs[k] += w * theta[nb];
                        }
                    });
                }
            }
            let (x, _) = a.solve(&rhs, None)?;
            for k in 0..n {
                if a.is_free(k) {
                    theta[k] = x[k];
                }
            }
        }
        BoundaryCondition::Neumann => {
            let free: Vec<bool> = (0..n).map(|k| g.in_mask(k)).collect();
            let a = GraphLaplacian::new(g, free);
            let mut rhs = vec![0.0; n];
            if g.is_rectangle() {
                // Mirror ghosts for the total phase: psi(ghost) = psi(opposite node).
                for k in g.boundary_indices() {
                    let (i, j) = g.ij(k);
                    let x = g.pos(i, j);
                    let h = g.h;
                    let mut c = 0.0;
                    let dirs = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
                    for (di, dj) in dirs {
                        if !g.in_mask_ij(i as isize + di, j as isize + dj) {
                            let ghost = [x[0] + di as f64 * h, x[1] + dj as f64 * h];
                            let opp = [x[0] - di as f64 * h, x[1] - dj as f64 * h];
                            c += singular_phase_difference(&charges, ghost, opp);
                        }
                    }
                    rhs[k] = g.weight(k) * c;
                }
            }
            let (x, _) = a.solve(&rhs, None)?;
            theta = x;
        }
    }
    let dtheta = extend_outside(g, gradient(g, &theta));
    Ok(CanonicalMap {
        correction: HarmonicCorrection {
            theta: ScalarField { grid: grid.clone(), values: theta, staggering: Staggering::Node },
            bc_kind: BcKind::from(bc),
        },
        grid,
        charges,
        dtheta,
    })
}

/// Fills unmasked nodes next to the mask with averages of masked neighbours.
fn extend_outside(g: &Grid2D, mut v: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut known: Vec<bool> = (0..g.len()).map(|k| g.in_mask(k)).collect();
    for _ in 0..3 {
        let mut next = known.clone();
        let mut upd = Vec::new();
        for k in 0..g.len() {
            if known[k] {
                continue;
            }
            let (i, j) = g.ij(k);
            let mut s = [0.0; 2];
            let mut c = 0;
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)] {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                if ii >= 0 && jj >= 0 && (ii as usize) < g.nx && (jj as usize) < g.ny {
                    let q = g.idx(ii as usize, jj as usize);
                    if known[q] {
                        s[0] += v[q][0];
                        s[1] += v[q][1];
                        c += 1;
                    }
                }
            }
            if c > 0 {
                upd.push((k, [s[0] / c as f64, s[1] / c as f64]));
                next[k] = true;
            }
        }
        for (k, val) in upd {
            v[k] = val;
        }
        known = next;
    }
    v
}

impl CanonicalMap {
    /// Unit-modulus lattice field; Dirichlet boundary nodes carry `g` exactly.
    pub fn field(&self, v: &VortexSet) -> ComplexField {
        let g = &self.grid;
        let reference = match &g.bc {
            BoundaryCondition::Dirichlet { g: gd } => Some(gd.charges(v)),
            BoundaryCondition::Neumann => None,
        };
        let u = (0..g.len())
            .map(|k| {
                let x = g.pos_idx(k);
                match &reference {
                    Some(r) if g.is_boundary(k) => product_map(r, x),
                    _ => Complex64::from_polar(1.0, self.correction.theta.values[k]) * product_map(&self.charges, x),
                }
            })
            .collect();
        ComplexField { grid: g.clone(), u }
    }

    /// Gradient of the total phase at an arbitrary point of the lattice box.
    pub fn phase_gradient_at(&self, x: Point) -> [f64; 2] {
        let a = phase_gradient(&self.charges, x);
        let b = bilinear(&self.grid, &self.dtheta, x);
        [a[0] + b[0], a[1] + b[1]]
    }
}

fn bilinear(g: &Grid2D, f: &[[f64; 2]], x: Point) -> [f64; 2] {
    let (s, t) = g.lattice_coords(x);
    let i = (s.floor().max(0.0) as usize).min(g.nx - 2);
    let j = (t.floor().max(0.0) as usize).min(g.ny - 2);
    let fs = (s - i as f64).clamp(0.0, 1.0);
    let ft = (t - j as f64).clamp(0.0, 1.0);
    let k = g.idx(i, j);
    let w = [(1.0 - fs) * (1.0 - ft), fs * (1.0 - ft), (1.0 - fs) * ft, fs * ft];
    let ks = [k, k + 1, k + g.nx, k + g.nx + 1];
    let mut out = [0.0; 2];
    for n in 0..4 {
        out[0] += w[n] * f[ks[n]][0];
        out[1] += w[n] * f[ks[n]][1];
    }
    out
}

/// Unit-modulus canonical map `e^{i theta} prod ((x - a_n)/|x - a_n|)^{d_n}`.
pub fn canonical_map(grid: &Arc<Grid2D>, v: &VortexSet, bc: &BoundaryCondition) -> Result<ComplexField> {
    Ok(canonical_map_factored(grid, v, bc)?.field(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelDomain {
    FreePlane,
    UnitDisk,
    Rectangle { min: Point, max: Point },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WMethod {
    /// Closed form: pair term on the plane, pair plus image terms on the disk.
    ClosedForm,
    /// Excised-ball energy of the lattice canonical map, extrapolated in the ball radius.
    NumericLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedEnergyModel {
    pub domain: ModelDomain,
    pub bc: BoundaryCondition,
    pub method: WMethod,
    /// Lattice nodes per side used by the numeric limit.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    257
}

impl RenormalizedEnergyModel {
    pub fn free_plane() -> Self {
        RenormalizedEnergyModel {
            domain: ModelDomain::FreePlane,
            bc: BoundaryCondition::Neumann,
            method: WMethod::ClosedForm,
            resolution: default_resolution(),
        }
    }

    pub fn unit_disk(bc: BoundaryCondition, method: WMethod) -> Self {
        RenormalizedEnergyModel { domain: ModelDomain::UnitDisk, bc, method, resolution: default_resolution() }
    }

    pub fn has_boundary(&self) -> bool {
        !matches!(self.domain, ModelDomain::FreePlane)
    }

    pub fn domain(&self) -> Option<Domain> {
        match &self.domain {
            ModelDomain::FreePlane => None,
            ModelDomain::UnitDisk => Some(Domain::UnitDisk),
            ModelDomain::Rectangle { min, max } => Some(Domain::Rectangle { min: *min, max: *max }),
        }
    }

    /// Lattice used by the numeric limit.
    pub fn grid(&self) -> Result<Arc<Grid2D>> {
        let n = self.resolution;
        match &self.domain {
            ModelDomain::FreePlane => Err(VortexError::config("the free plane has no lattice")),
            ModelDomain::UnitDisk => make_grid(n, n, Domain::UnitDisk, self.bc.clone()),
            ModelDomain::Rectangle { min, max } => {
                let h = (max[0] - min[0]) / (n - 1) as f64;
                let ny = ((max[1] - min[1]) / h).round() as usize + 1;
                make_grid(n, ny, Domain::Rectangle { min: *min, max: *max }, self.bc.clone())
            }
        }
    }
}

fn check_distinct(v: &VortexSet) -> Result<()> {
    if v.is_empty() {
        return Err(VortexError::EmptyVortexSet);
    }
    for (m, a) in v.entries.iter().enumerate() {
        for b in &v.entries[m + 1..] {
            if distance(a.position, b.position) == 0.0 {
                return Err(VortexError::CoincidentVortices(format!("{:?}", a.position)));
            }
        }
    }
    Ok(())
}

fn cpx(p: Point) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// `-pi sum_{m != n} d_m d_n log |a_m - a_n|`.
pub fn pair_energy(v: &VortexSet) -> f64 {
    let e = &v.entries;
    let mut w = 0.0;
    for m in 0..e.len() {
        for n in 0..e.len() {
            if m != n {
                w -= PI * (e[m].degree * e[n].degree) as f64 * distance(e[m].position, e[n].position).ln();
            }
        }
    }
    w
}

/// `dW/da_n = -2 pi d_n sum_{m != n} d_m (a_n - a_m)/|a_n - a_m|^2`.
pub fn pair_gradient(v: &VortexSet) -> Vec<[f64; 2]> {
    let e = &v.entries;
    (0..e.len())
        .map(|n| {
            let mut g = [0.0; 2];
            for m in 0..e.len() {
                if m == n {
                    continue;
                }
                let dx = e[n].position[0] - e[m].position[0];
                let dy = e[n].position[1] - e[m].position[1];
                let r2 = dx * dx + dy * dy;
                let c = -2.0 * PI * (e[n].degree * e[m].degree) as f64 / r2;
                g[0] += c * dx;
                g[1] += c * dy;
            }
            g
        })
        .collect()
}

fn disk_reference(v: &VortexSet, bc: &BoundaryCondition) -> Result<Option<Vec<(Point, i32)>>> {
    match bc {
        BoundaryCondition::Neumann => Ok(None),
        BoundaryCondition::Dirichlet { g } => {
            let r = g.charges(v);
            let dr: i32 = r.iter().map(|c| c.1).sum();
            if dr != v.total_degree() {
                return Err(VortexError::Geometry(format!(
                    "boundary data has degree {dr} but the vortices carry {}",
                    v.total_degree()
                )));
            }
            Ok(Some(r))
        }
    }
}

/// Closed-form renormalized energy on the unit disk.
pub fn disk_energy(v: &VortexSet, bc: &BoundaryCondition) -> Result<f64> {
    let e = &v.entries;
    let reference = disk_reference(v, bc)?;
    let s = if reference.is_some() { -1.0 } else { 1.0 };
    let mut w = pair_energy(v);
    for n in e {
        for m in e {
            let z = Complex64::new(1.0, 0.0) - cpx(m.position).conj() * cpx(n.position);
            w += s * PI * (n.degree * m.degree) as f64 * z.norm().ln();
        }
    }
    if let Some(r) = reference {
        for n in e {
            for &(b, dk) in &r {
                let z = Complex64::new(1.0, 0.0) - cpx(n.position).conj() * cpx(b);
                w += 2.0 * PI * (n.degree * dk) as f64 * z.norm().ln();
            }
        }
        for &(b, dk) in &r {
            for &(b2, dk2) in &r {
                let z = Complex64::new(1.0, 0.0) - cpx(b2).conj() * cpx(b);
                w -= 0.5 * PI * (dk * dk2) as f64 * z.norm().ln();
            }
        }
    }
    Ok(w)
}

/// Closed-form gradient on the unit disk, from `2 dW/d(conj a)`.
pub fn disk_gradient(v: &VortexSet, bc: &BoundaryCondition) -> Result<Vec<[f64; 2]>> {
    let e = &v.entries;
    let reference = disk_reference(v, bc)?;
    let s = if reference.is_some() { 1.0 } else { -1.0 };
    let pair = pair_gradient(v);
    Ok((0..e.len())
        .map(|p| {
            let ap = cpx(e[p].position);
            let dp = e[p].degree as f64;
            let mut z = Complex64::new(pair[p][0], pair[p][1]);
            let one = Complex64::new(1.0, 0.0);
            for m in e {
                let am = cpx(m.position);
                z += s * 2.0 * PI * dp * m.degree as f64 * am / (one - am * ap.conj());
            }
            if let Some(r) = &reference {
                for &(b, dk) in r {
                    let b = cpx(b);
                    z -= 2.0 * PI * dp * dk as f64 * b / (one - b * ap.conj());
                }
            }
            [z.re, z.im]
        })
        .collect())
}

/// Ball radii of the numeric limit, in lattice spacings.
pub const RHO_LEVELS: [f64; 3] = [8.0, 16.0, 32.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericLimit {
    pub value: f64,
    /// `(rho, excised energy minus N pi log(1/rho))` per level.
    pub levels: Vec<(f64, f64)>,
}

/// Excised Dirichlet energy of the canonical map, extrapolated to zero ball radius
/// in `rho^2` (odd powers cancel by angular symmetry).
pub fn numeric_limit(v: &VortexSet, model: &RenormalizedEnergyModel) -> Result<NumericLimit> {
    check_distinct(v)?;
    let grid = model.grid()?;
    let domain = grid.domain.clone();
    let r = rho_domain(v, Some(&domain))?;
    let rmax = RHO_LEVELS[2] * grid.h;
    if rmax >= r {
        return Err(VortexError::Unresolvable(format!(
            "excision radius {rmax} not below rho = {r}; increase the resolution"
        )));
    }
    let cm = canonical_map_factored(&grid, v, &model.bc)?;
    let nv = v.len() as f64;
    let levels: Vec<(f64, f64)> = RHO_LEVELS
        .par_iter()
        .map(|&l| {
            let rho = l * grid.h;
            let e = excised_energy(&cm, &domain, &v.positions(), rho);
            (rho, e - nv * PI * (1.0 / rho).ln())
        })
        .collect();
    let s: Vec<f64> = levels.iter().map(|l| l.0 * l.0).collect();
    let mut value = 0.0;
    for k in 0..3 {
        let mut c = levels[k].1;
        for j in 0..3 {
            if j != k {
                c *= -s[j] / (s[k] - s[j]);
            }
        }
        value += c;
    }
    Ok(NumericLimit { value, levels })
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
const MAX_DEPTH: u32 = 6;

#[derive(Clone, Copy)]
enum Cover {
    In,
    Out,
    Cut,
}

fn square_vs_circle(x0: f64, y0: f64, s: f64, c: Point, r: f64) -> Cover {
    let nx = c[0].clamp(x0, x0 + s);
    let ny = c[1].clamp(y0, y0 + s);
    let dmin = (nx - c[0]).hypot(ny - c[1]);
    let fx = (x0 - c[0]).abs().max((x0 + s - c[0]).abs());
    let fy = (y0 - c[1]).abs().max((y0 + s - c[1]).abs());
    let dmax = fx.hypot(fy);
    if dmax <= r {
        Cover::In
    } else if dmin >= r {
        Cover::Out
    } else {
        Cover::Cut
    }
}

fn region_point(domain: &Domain, balls: &[Point], rho: f64, p: Point) -> bool {
    domain.contains(p) && balls.iter().all(|b| distance(*b, p) >= rho)
}

/// Integral of `|grad psi|^2 / 2` over `domain` minus the balls.
fn excised_energy(cm: &CanonicalMap, domain: &Domain, balls: &[Point], rho: f64) -> f64 {
    let g = &cm.grid;
    let h = g.h;
    let rows: Vec<f64> = (0..g.ny - 1)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..g.nx - 1 {
                let p = g.pos(i, j);
                acc += cell_integral(cm, domain, balls, rho, p[0], p[1], h, 0);
            }
            acc
        })
        .collect();
    rows.iter().sum()
}

#[allow(clippy::too_many_arguments)]
fn cell_integral(
    cm: &CanonicalMap,
    domain: &Domain,
    balls: &[Point],
    rho: f64,
    x0: f64,
    y0: f64,
    s: f64,
    depth: u32,
) -> f64 {
    let mut cut = false;
    if let Domain::UnitDisk = domain {
        match square_vs_circle(x0, y0, s, [0.0, 0.0], 1.0) {
            Cover::Out => return 0.0,
            Cover::Cut => cut = true,
            Cover::In => {}
        }
    }
    for b in balls {
        match square_vs_circle(x0, y0, s, *b, rho) {
            Cover::In => return 0.0,
            Cover::Cut => cut = true,
            Cover::Out => {}
        }
    }
    if cut && depth < MAX_DEPTH {
        let t = 0.5 * s;
        return cell_integral(cm, domain, balls, rho, x0, y0, t, depth + 1)
            + cell_integral(cm, domain, balls, rho, x0 + t, y0, t, depth + 1)
            + cell_integral(cm, domain, balls, rho, x0, y0 + t, t, depth + 1)
            + cell_integral(cm, domain, balls, rho, x0 + t, y0 + t, t, depth + 1);
    }
    let mut acc = 0.0;
    for gx in GAUSS2 {
        for gy in GAUSS2 {
            let p = [x0 + 0.5 * s * (1.0 + gx), y0 + 0.5 * s * (1.0 + gy)];
            if cut && !region_point(domain, balls, rho, p) {
                continue;
            }
            let d = cm.phase_gradient_at(p);
            acc += 0.5 * (d[0] * d[0] + d[1] * d[1]);
        }
    }
    acc * 0.25 * s * s
}

/// `W(a, d)` for the given model.
pub fn renormalized_energy(v: &VortexSet, model: &RenormalizedEnergyModel) -> Result<f64> {
    check_distinct(v)?;
    if let Some(d) = model.domain() {
        rho_domain(v, Some(&d))?;
        if v.entries.iter().any(|e| d.boundary_distance(e.position) <= 0.0) {
            return Err(VortexError::config("vortex outside the domain"));
        }
    }
    match (&model.domain, model.method) {
        (ModelDomain::FreePlane, _) => Ok(pair_energy(v)),
        (ModelDomain::UnitDisk, WMethod::ClosedForm) => disk_energy(v, &model.bc),
        (ModelDomain::Rectangle { .. }, WMethod::ClosedForm) => {
            Err(VortexError::Unsupported("no closed form on rectangles; use the numeric limit".into()))
        }
        (_, WMethod::NumericLimit) => Ok(numeric_limit(v, model)?.value),
    }
}

/// Step of the finite-difference gradient.
pub const FD_STEP: f64 = 1e-3;

/// Central finite differences of `renormalized_energy`.
pub fn grad_w_fd(v: &VortexSet, model: &RenormalizedEnergyModel, delta: f64) -> Result<Vec<[f64; 2]>> {
    let jobs: Vec<(usize, usize)> = (0..v.len()).flat_map(|n| [(n, 0), (n, 1)]).collect();
    let parts: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(n, c)| {
            let mut p = v.clone();
            let mut q = v.clone();
            p.entries[n].position[c] += delta;
            q.entries[n].position[c] -= delta;
            Ok((renormalized_energy(&p, model)? - renormalized_energy(&q, model)?) / (2.0 * delta))
        })
        .collect();
    let mut out = vec![[0.0; 2]; v.len()];
    for (&(n, c), r) in jobs.iter().zip(parts) {
        out[n][c] = r?;
    }
    Ok(out)
}

/// `dW/da_n` for every vortex.
pub fn grad_w(v: &VortexSet, model: &RenormalizedEnergyModel) -> Result<Vec<[f64; 2]>> {
    check_distinct(v)?;
    match (&model.domain, model.method) {
        (ModelDomain::FreePlane, _) => Ok(pair_gradient(v)),
        (ModelDomain::UnitDisk, WMethod::ClosedForm) => disk_gradient(v, &model.bc),
        (ModelDomain::Rectangle { .. }, WMethod::ClosedForm) => {
            Err(VortexError::Unsupported("no closed form on rectangles; use the numeric limit".into()))
        }
        (_, WMethod::NumericLimit) => grad_w_fd(v, model, FD_STEP),
    }
}

/// Node tensor `sum_c d_i f_c d_j f_c` of a complex field.
pub fn stress_energy_complex(f: &ComplexField) -> TensorField {
    let g = &f.grid;
    let d = gradient(g, &f.u);
    let values = d
        .iter()
        .map(|[a, b]| {
            let xy = a.re * b.re + a.im * b.im;
            [[a.norm_sqr(), xy], [xy, b.norm_sqr()]]
        })
        .collect();
    TensorField { grid: g.clone(), values }
}

pub fn stress_energy_director(f: &DirectorField) -> TensorField {
    let g = &f.grid;
    let d = gradient(g, &f.m);
    let values = d
        .iter()
        .map(|[a, b]| {
            let xy = a.dot(*b);
            [[a.norm_sq(), xy], [xy, b.norm_sq()]]
        })
        .collect();
    TensorField { grid: g.clone(), values }
}

/// Radial cutoff equal to one on `[0, inner]` and zero beyond `outer`, smooth in between.
fn cutoff(s: f64, inner: f64, outer: f64) -> f64 {
    if s <= inner {
        return 1.0;
    }
    if s >= outer {
        return 0.0;
    }
    let t = (s - inner) / (outer - inner);
    let a = (-1.0 / (1.0 - t)).exp();
    let b = (-1.0 / t).exp();
    a / (a + b)
}

/// Affine function `c0 + c1 x + c2 y` times a radial cutoff around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBump {
    pub center: Point,
    pub inner: f64,
    pub outer: f64,
    pub coeffs: [f64; 3],
}

/// Test function: a sum of affine bumps. It is affine on every ball of radius
/// `r0` around a vortex as long as no bump transition region meets that ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub r0: f64,
    pub pieces: Vec<AffineBump>,
}

impl TestFunction {
    pub fn value(&self, x: Point) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let s = distance(x, p.center);
                cutoff(s, p.inner, p.outer) * (p.coeffs[0] + p.coeffs[1] * x[0] + p.coeffs[2] * x[1])
            })
            .sum()
    }

    /// Gradient by sixth-order central differences.
    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let h = 1e-3 * self.scale();
        let mut g = [0.0; 2];
        for (c, gc) in g.iter_mut().enumerate() {
            let f = |t: f64| {
                let mut y = x;
                y[c] += t;
                self.value(y)
            };
            *gc = (45.0 * (f(h) - f(-h)) - 9.0 * (f(2.0 * h) - f(-2.0 * h)) + (f(3.0 * h) - f(-3.0 * h))) / (60.0 * h);
        }
        g
    }

    /// Hessian by central differences of the gradient.
    pub fn hessian(&self, x: Point) -> [[f64; 2]; 2] {
        let h = 1e-3 * self.scale();
        let mut m = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut p = x;
            let mut q = x;
            p[c] += h;
            q[c] -= h;
            let gp = self.gradient(p);
            let gq = self.gradient(q);
            for r in 0..2 {
                m[r][c] = (gp[r] - gq[r]) / (2.0 * h);
            }
        }
        let off = 0.5 * (m[0][1] + m[1][0]);
        m[0][1] = off;
        m[1][0] = off;
        m
    }

    fn scale(&self) -> f64 {
        self.pieces.iter().map(|p| p.outer - p.inner).fold(f64::INFINITY, f64::min).min(1.0)
    }

    /// `grad_perp phi = (-d2 phi, d1 phi)`.
    pub fn perp_gradient(&self, x: Point) -> [f64; 2] {
        let g = self.gradient(x);
        [-g[1], g[0]]
    }

    /// Contraction `(grad_perp grad phi) : T` for symmetric `T`.
    pub fn contract(&self, x: Point, t: [[f64; 2]; 2]) -> f64 {
        let h = self.hessian(x);
        h[0][1] * (t[1][1] - t[0][0]) + (h[0][0] - h[1][1]) * t[0][1]
    }

    /// Fails when a bump transition meets a vortex ball.
    pub fn check_flat(&self, v: &VortexSet) -> Result<()> {
        for (index, e) in v.entries.iter().enumerate() {
            for p in &self.pieces {
                let s = distance(e.position, p.center);
                let flat = s + self.r0 <= p.inner || s - self.r0 >= p.outer;
                if !flat {
                    return Err(VortexError::NotFlat {
                        index,
                        detail: format!("bump at {:?} is curved within {} of the vortex", p.center, self.r0),
                    });
                }
            }
        }
        Ok(())
    }

    fn support_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.pieces {
            for c in 0..2 {
                lo[c] = lo[c].min(p.center[c] - p.outer);
                hi[c] = hi[c].max(p.center[c] + p.outer);
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityResidual {
    /// `sum_n grad_perp phi(a_n) . dW/da_n`.
    pub lhs: f64,
    /// `-int grad_perp grad phi : (grad m_* (x) grad m_*)`.
    pub rhs: f64,
}

impl IdentityResidual {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Both sides of the stress-energy identity for the renormalized energy.
///
/// With `W` normalized as `-pi sum_{m != n} d_m d_n log|a_m - a_n| + ...` the
/// force side carries no extra factor of `pi`: the flux of the stress tensor
/// through a small circle around `a_n` is exactly `dW/da_n` rotated.
pub fn renorm_identity_residual(
    phi: &TestFunction,
    v: &VortexSet,
    model: &RenormalizedEnergyModel,
) -> Result<IdentityResidual> {
    check_distinct(v)?;
    phi.check_flat(v)?;
    if let Some(d) = model.domain() {
        for p in &phi.pieces {
            let c = [p.center[0] + p.outer, p.center[1]];
            if d.boundary_distance(p.center) < p.outer || !d.contains(c) {
                return Err(VortexError::config("test function support leaves the domain"));
            }
        }
    }
    let dw = grad_w(v, model)?;
    let lhs = v
        .entries
        .iter()
        .zip(&dw)
        .map(|(e, g)| {
            let p = phi.perp_gradient(e.position);
            p[0] * g[0] + p[1] * g[1]
        })
        .sum::<f64>();

    let cm = if model.has_boundary() {
        let grid = model.grid()?;
        Some(canonical_map_factored(&grid, v, &model.bc)?)
    } else {
        None
    };
    let charges: Vec<(Point, i32)> = v.entries.iter().map(|e| (e.position, e.degree)).collect();
    let grad_psi = |x: Point| match &cm {
        Some(c) => c.phase_gradient_at(x),
        None => phase_gradient(&charges, x),
    };
    let (lo, hi) = phi.support_box();
    let cells = 400usize;
    let hx = (hi[0] - lo[0]) / cells as f64;
    let hy = (hi[1] - lo[1]) / cells as f64;
    const G3: [(f64, f64); 3] =
        [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    let curved = |x: Point| {
        phi.pieces.iter().any(|p| {
            let s = distance(x, p.center);
            s > p.inner && s < p.outer
        })
    };
    let rows: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..cells {
                for (gx, wx) in G3 {
                    for (gy, wy) in G3 {
                        let x = [lo[0] + hx * (i as f64 + 0.5 + 0.5 * gx), lo[1] + hy * (j as f64 + 0.5 + 0.5 * gy)];
                        if !curved(x) {
                            continue;
                        }
                        let d = grad_psi(x);
                        let t = [[d[0] * d[0], d[0] * d[1]], [d[0] * d[1], d[1] * d[1]]];
                        acc += 0.25 * wx * wy * hx * hy * phi.contract(x, t);
                    }
                }
            }
            acc
        })
        .collect();
    let rhs = -rows.iter().sum::<f64>();
    Ok(IdentityResidual { lhs, rhs })
}
