//! Uniform tensor-product lattices with an embedded domain mask.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::vortex::{Point, Vortex, VortexSet};

const MASK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    Rectangle { min: Point, max: Point },
    UnitDisk,
}

impl Domain {
    pub fn unit_square() -> Self {
        Domain::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Domain::Rectangle { min, max } => {
                p[0] >= min[0] - MASK_TOL
                    && p[0] <= max[0] + MASK_TOL
                    && p[1] >= min[1] - MASK_TOL
                    && p[1] <= max[1] + MASK_TOL
            }
            Domain::UnitDisk => p[0] * p[0] + p[1] * p[1] <= 1.0 + MASK_TOL,
        }
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        match self {
            Domain::Rectangle { min, max } => (p[0] - min[0]).min(max[0] - p[0]).min(p[1] - min[1]).min(max[1] - p[1]),
            Domain::UnitDisk => 1.0 - p[0].hypot(p[1]),
        }
    }

    fn extent(&self) -> (Point, Point) {
        match self {
            Domain::Rectangle { min, max } => (*min, *max),
            Domain::UnitDisk => ([-1.0, -1.0], [1.0, 1.0]),
        }
    }
}

/// Source of the Dirichlet boundary map `g = prod ((x - b_k)/|x - b_k|)^{d_k}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryData {
    /// Use the vortices being seeded (their product map restricted to the boundary).
    #[default]
    FromVortices,
    /// Use a fixed reference configuration, e.g. a single vortex at the origin for `g = e^{i phi}`.
    Reference(Vec<Vortex>),
}

impl BoundaryData {
    pub fn origin_vortex() -> Self {
        BoundaryData::Reference(vec![Vortex::gl([0.0, 0.0], 1)])
    }

    /// The reference charges, resolving `FromVortices` against `v`.
    pub fn charges(&self, v: &VortexSet) -> Vec<(Point, i32)> {
        match self {
            BoundaryData::FromVortices => v.entries.iter().map(|e| (e.position, e.degree)).collect(),
            BoundaryData::Reference(r) => r.iter().map(|e| (e.position, e.degree)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryCondition {
    Dirichlet {
        #[serde(default)]
        g: BoundaryData,
    },
    Neumann,
}

impl BoundaryCondition {
    pub fn dirichlet(g: BoundaryData) -> Self {
        BoundaryCondition::Dirichlet { g }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryCondition::Dirichlet { .. })
    }

    /// Pins `FromVortices` data to the configuration `v`, so that `g` stays
    /// fixed while the vortices move.
    pub fn frozen(&self, v: &VortexSet) -> Self {
        match self {
            BoundaryCondition::Dirichlet { g: BoundaryData::FromVortices } => {
                BoundaryCondition::Dirichlet { g: BoundaryData::Reference(v.entries.clone()) }
            }
            other => other.clone(),
        }
    }
}

/// Unit-modulus product map `prod ((x - b)/|x - b|)^d` (identity when `x` hits a charge).
pub fn product_map(charges: &[(Point, i32)], x: Point) -> Complex64 {
    let mut z = Complex64::new(1.0, 0.0);
    for &(b, d) in charges {
        let w = Complex64::new(x[0] - b[0], x[1] - b[1]);
        let r = w.norm();
        if r == 0.0 {
            continue;
        }
        let w = w / r;
        z *= if d >= 0 { w.powi(d) } else { w.conj().powi(-d) };
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Outside,
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
    pub domain: Domain,
    pub bc: BoundaryCondition,
    kind: Vec<NodeKind>,
    weight: Vec<f64>,
}

/// Builds a lattice covering `domain` with `h = extent / (n - 1)`.
pub fn make_grid(nx: usize, ny: usize, domain: Domain, bc: BoundaryCondition) -> Result<Arc<Grid2D>> {
    if nx < 16 || ny < 16 {
        return Err(VortexError::GridTooCoarse { nx, ny });
    }
    if matches!(domain, Domain::UnitDisk) && nx != ny {
        return Err(VortexError::DiskNotSquare { nx, ny });
    }
    let (min, max) = domain.extent();
    let wx = max[0] - min[0];
    let wy = max[1] - min[1];
    if !(wx > 0.0 && wy > 0.0) {
        return Err(VortexError::Geometry(format!("empty extent {min:?}..{max:?}")));
    }
    let h = wx / (nx - 1) as f64;
    let hy = wy / (ny - 1) as f64;
    if (h - hy).abs() > 1e-9 * h {
        return Err(VortexError::Geometry(format!("non-uniform spacing: hx = {h}, hy = {hy}")));
    }

    let mut g = Grid2D {
        nx,
        ny,
        h,
        origin: min,
        domain,
        bc,
        kind: vec![NodeKind::Outside; nx * ny],
        weight: vec![0.0; nx * ny],
    };
    let inside: Vec<bool> = (0..nx * ny).map(|k| g.domain.contains(g.pos_idx(k))).collect();
    let is_rect = matches!(g.domain, Domain::Rectangle { .. });
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if !inside[k] {
                continue;
            }
            let at_edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            let boundary = at_edge || !inside[k - 1] || !inside[k + 1] || !inside[k - nx] || !inside[k + nx];
            g.kind[k] = if boundary { NodeKind::Boundary } else { NodeKind::Interior };
            // Trapezoidal weights on rectangles; plain cell weights on masked domains.
            g.weight[k] = if is_rect {
                let wi = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                wi * wj
            } else {
                1.0
            };
        }
    }
    Ok(Arc::new(g))
}

impl Grid2D {
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> Point {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    #[inline]
    pub fn pos_idx(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        self.pos(i, j)
    }

    #[inline]
    pub fn kind(&self, k: usize) -> NodeKind {
        self.kind[k]
    }

    #[inline]
    pub fn in_mask(&self, k: usize) -> bool {
        self.kind[k] != NodeKind::Outside
    }

    #[inline]
    pub fn in_mask_ij(&self, i: isize, j: isize) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.nx
            && (j as usize) < self.ny
            && self.in_mask(j as usize * self.nx + i as usize)
    }

    #[inline]
    pub fn is_boundary(&self, k: usize) -> bool {
        self.kind[k] == NodeKind::Boundary
    }

    #[inline]
    pub fn is_interior(&self, k: usize) -> bool {
        self.kind[k] == NodeKind::Interior
    }

    /// Nodes updated by time stepping: interior nodes under Dirichlet data, every
    /// masked node under Neumann data.
    #[inline]
    pub fn evolves(&self, k: usize) -> bool {
        match self.bc {
            BoundaryCondition::Dirichlet { .. } => self.is_interior(k),
            BoundaryCondition::Neumann => self.in_mask(k),
        }
    }

    /// Quadrature weight of a node (multiplies `h^2`).
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.weight[k]
    }

    pub fn is_rectangle(&self) -> bool {
        matches!(self.domain, Domain::Rectangle { .. })
    }

    /// Weight of the lattice edge from `(i, j)` to `(i + 1, j)`; zero when it leaves the mask.
    pub fn edge_weight_x(&self, i: usize, j: usize) -> f64 {
        if i + 1 >= self.nx || !self.in_mask(self.idx(i, j)) || !self.in_mask(self.idx(i + 1, j)) {
            return 0.0;
        }
        if self.is_rectangle() && (j == 0 || j == self.ny - 1) {
            0.5
        } else {
            1.0
        }
    }

    /// Weight of the lattice edge from `(i, j)` to `(i, j + 1)`.
    pub fn edge_weight_y(&self, i: usize, j: usize) -> f64 {
        if j + 1 >= self.ny || !self.in_mask(self.idx(i, j)) || !self.in_mask(self.idx(i, j + 1)) {
            return 0.0;
        }
        if self.is_rectangle() && (i == 0 || i == self.nx - 1) {
            0.5
        } else {
            1.0
        }
    }

    pub fn mask_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.in_mask(k))
    }

    pub fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_boundary(k))
    }

    pub fn interior_count(&self) -> usize {
        self.kind.iter().filter(|&&k| k == NodeKind::Interior).count()
    }

    pub fn mask_count(&self) -> usize {
        self.kind.iter().filter(|&&k| k != NodeKind::Outside).count()
    }

    /// Continuous lattice coordinates of a point.
    pub fn lattice_coords(&self, p: Point) -> (f64, f64) {
        ((p[0] - self.origin[0]) / self.h, (p[1] - self.origin[1]) / self.h)
    }

    /// Outward unit normal of the continuous domain at the point nearest to `p`.
    pub fn outward_normal(&self, p: Point) -> Point {
        match &self.domain {
            Domain::UnitDisk => {
                let r = p[0].hypot(p[1]);
                if r == 0.0 {
                    [1.0, 0.0]
                } else {
                    [p[0] / r, p[1] / r]
                }
            }
            Domain::Rectangle { min, max } => {
                let d = [p[0] - min[0], max[0] - p[0], p[1] - min[1], max[1] - p[1]];
                let (arg, _) =
                    d.iter().enumerate().fold((0, f64::INFINITY), |acc, (n, &v)| if v < acc.1 { (n, v) } else { acc });
                [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]][arg]
            }
        }
    }

    /// Projection of a point onto the continuous boundary.
    pub fn project_to_boundary(&self, p: Point) -> Point {
        match &self.domain {
            Domain::UnitDisk => self.outward_normal(p),
            Domain::Rectangle { min, max } => {
                let n = self.outward_normal(p);
                match n {
                    [x, _] if x < 0.0 => [min[0], p[1]],
                    [x, _] if x > 0.0 => [max[0], p[1]],
                    [_, y] if y < 0.0 => [p[0], min[1]],
                    _ => [p[0], max[1]],
                }
            }
        }
    }

    /// Same lattice with a different boundary condition.
    pub fn with_bc(&self, bc: BoundaryCondition) -> Arc<Grid2D> {
        let mut g = self.clone();
        g.bc = bc;
        Arc::new(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_spacing() {
        let g = make_grid(64, 64, Domain::unit_square(), BoundaryCondition::Neumann).unwrap();
        assert!((g.h - 1.0 / 63.0).abs() < 1e-15);
        assert_eq!(g.mask_count(), 64 * 64);
        assert_eq!(g.interior_count(), 62 * 62);
    }

    #[test]
    fn disk_mask_counts_nodes_inside() {
        let g = make_grid(65, 65, Domain::UnitDisk, BoundaryCondition::dirichlet(BoundaryData::FromVortices)).unwrap();
        let h = 2.0 / 64.0;
        let mut expected = 0;
        for j in 0..65 {
            for i in 0..65 {
                let x = -1.0 + i as f64 * h;
                let y = -1.0 + j as f64 * h;
                if x * x + y * y <= 1.0 + 1e-12 {
                    expected += 1;
                }
            }
        }
        assert_eq!(g.mask_count(), expected);
        // Boundary nodes: masked with an unmasked 4-neighbour.
        for k in g.boundary_indices() {
            let p = g.pos_idx(k);
            assert!(p[0].hypot(p[1]) > 1.0 - 2.0 * h);
        }
        assert!(g.is_boundary(g.idx(64, 32)));
        assert!(g.is_interior(g.idx(32, 32)));
    }

    #[test]
    fn coarse_grid_rejected() {
        let e = make_grid(8, 8, Domain::unit_square(), BoundaryCondition::Neumann).unwrap_err();
        assert!(e.to_string().contains("grid too coarse"));
    }

    #[test]
    fn disk_requires_square() {
        assert!(matches!(
            make_grid(33, 65, Domain::UnitDisk, BoundaryCondition::Neumann),
            Err(VortexError::DiskNotSquare { .. })
        ));
    }

    #[test]
    fn rectangle_requires_uniform_spacing() {
        let d = Domain::Rectangle { min: [0.0, 0.0], max: [2.0, 1.0] };
        assert!(make_grid(33, 33, d.clone(), BoundaryCondition::Neumann).is_err());
        assert!(make_grid(33, 17, d, BoundaryCondition::Neumann).is_ok());
    }

    #[test]
    fn product_map_winds_once() {
        let c = [([0.1, 0.0], 1)];
        let mut total = 0.0;
        let n = 64;
        let mut prev = product_map(&c, [0.6, 0.0]).arg();
        for s in 1..=n {
            let t = 2.0 * std::f64::consts::PI * s as f64 / n as f64;
            let a = product_map(&c, [0.1 + 0.5 * t.cos(), 0.5 * t.sin()]).arg();
            let mut d = a - prev;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d <= -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
            prev = a;
        }
        assert!((total / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-12);
    }
}
