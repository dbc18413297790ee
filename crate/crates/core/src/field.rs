//! Field storage on a [`Grid2D`] and the `.fld` snapshot format.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::grid::{make_grid, BoundaryCondition, Domain, Grid2D};
use crate::vec3::Vec3;
use crate::vortex::Point;

/// Where the values of a derived field live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Staggering {
    /// On lattice nodes.
    Node,
    /// On plaquette centres; value `(i, j)` belongs to the cell with lower-left node `(i, j)`.
    Cell,
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid2D>,
    pub values: Vec<f64>,
    pub staggering: Staggering,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid2D>, staggering: Staggering) -> Self {
        let n = grid.len();
        ScalarField { grid, values: vec![0.0; n], staggering }
    }

    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| if grid.in_mask(k) { f(grid.pos_idx(k)) } else { 0.0 }).collect();
        ScalarField { grid, values, staggering: Staggering::Node }
    }

    /// Whether entry `k` carries a value inside the domain.
    pub fn defined(&self, k: usize) -> bool {
        match self.staggering {
            Staggering::Node => self.grid.in_mask(k),
            Staggering::Cell => cell_in_mask(&self.grid, k),
        }
    }

    /// Physical position of entry `k`.
    pub fn position(&self, k: usize) -> Point {
        let p = self.grid.pos_idx(k);
        match self.staggering {
            Staggering::Node => p,
            Staggering::Cell => [p[0] + 0.5 * self.grid.h, p[1] + 0.5 * self.grid.h],
        }
    }

    /// Quadrature weight (including `h^2`) of entry `k`.
    pub fn quad_weight(&self, k: usize) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        match self.staggering {
            Staggering::Node => self.grid.weight(k) * h2,
            Staggering::Cell => {
                if cell_in_mask(&self.grid, k) {
                    h2
                } else {
                    0.0
                }
            }
        }
    }

    /// `h^2`-weighted sum over the domain.
    pub fn total(&self) -> f64 {
        (0..self.values.len()).map(|k| self.quad_weight(k) * self.values[k]).sum()
    }

    /// `h^2`-weighted sum of absolute values.
    pub fn l1(&self) -> f64 {
        (0..self.values.len()).map(|k| self.quad_weight(k) * self.values[k].abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.values.len()).filter(|&k| self.defined(k)).map(|k| self.values[k].abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn cell_in_mask(g: &Grid2D, k: usize) -> bool {
    let (i, j) = g.ij(k);
    i + 1 < g.nx && j + 1 < g.ny && g.in_mask(k) && g.in_mask(k + 1) && g.in_mask(k + g.nx) && g.in_mask(k + g.nx + 1)
}

#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Arc<Grid2D>,
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct TensorField {
    pub grid: Arc<Grid2D>,
    pub values: Vec<[[f64; 2]; 2]>,
}

impl TensorField {
    pub fn trace(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|t| t[0][0] + t[1][1]).collect(),
            staggering: Staggering::Node,
        }
    }
}

/// S^2-valued magnetization on grid nodes.
#[derive(Debug, Clone)]
pub struct DirectorField {
    pub grid: Arc<Grid2D>,
    pub m: Vec<Vec3>,
}

impl DirectorField {
    pub fn uniform(grid: Arc<Grid2D>, v: Vec3) -> Self {
        let m = vec![v; grid.len()];
        DirectorField { grid, m }
    }

    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(Point) -> Vec3) -> Self {
        let m = (0..grid.len()).map(|k| f(grid.pos_idx(k))).collect();
        DirectorField { grid, m }
    }

    /// Largest `| |m| - 1 |` over masked nodes.
    pub fn max_norm_deviation(&self) -> f64 {
        self.grid.mask_indices().map(|k| (self.m[k].norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// In-plane part `m1 + i m2` as a complex field.
    pub fn planar(&self) -> ComplexField {
        ComplexField { grid: self.grid.clone(), u: self.m.iter().map(|v| Complex64::new(v.x(), v.y())).collect() }
    }

    pub fn third_component(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.m.iter().map(|v| v.z()).collect(),
            staggering: Staggering::Node,
        }
    }
}

/// Divides every masked node by its norm. Nodes outside the mask are left untouched.
pub fn project_unit(mut f: DirectorField) -> Result<DirectorField> {
    project_unit_in_place(&mut f)?;
    Ok(f)
}

pub fn project_unit_in_place(f: &mut DirectorField) -> Result<()> {
    let grid = f.grid.clone();
    let bad =
        f.m.par_iter_mut()
            .enumerate()
            .filter_map(|(k, v)| {
                if !grid.in_mask(k) {
                    return None;
                }
                let n = v.norm();
                if !(n >= 1e-8) {
                    return Some((k, n));
                }
                *v = *v * (1.0 / n);
                None
            })
            .min_by_key(|(k, _)| *k);
    match bad {
        Some((index, norm)) => Err(VortexError::DegenerateDirector { index, norm }),
        None => Ok(()),
    }
}

/// Complex order parameter on grid nodes.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: Arc<Grid2D>,
    pub u: Vec<Complex64>,
}

impl ComplexField {
    pub fn from_fn(grid: Arc<Grid2D>, f: impl Fn(Point) -> Complex64) -> Self {
        let u = (0..grid.len()).map(|k| f(grid.pos_idx(k))).collect();
        ComplexField { grid, u }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_modulus(&self) -> f64 {
        self.grid.mask_indices().map(|k| self.u[k].norm()).fold(0.0, f64::max)
    }
}

/// JSON sidecar of a `.fld` snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub domain: Domain,
    pub bc: BoundaryCondition,
    pub components: usize,
    pub time: f64,
    pub epsilon: f64,
}

/// Row-major, component-interleaved little-endian f64 data plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub meta: SnapshotMeta,
    pub data: Vec<f64>,
}

impl FieldSnapshot {
    pub fn from_director(f: &DirectorField, time: f64, epsilon: f64) -> Self {
        FieldSnapshot { meta: meta_for(&f.grid, 3, time, epsilon), data: f.m.iter().flat_map(|v| v.0).collect() }
    }

    pub fn from_complex(f: &ComplexField, time: f64, epsilon: f64) -> Self {
        FieldSnapshot {
            meta: meta_for(&f.grid, 2, time, epsilon),
            data: f.u.iter().flat_map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid2D>> {
        make_grid(self.meta.nx, self.meta.ny, self.meta.domain.clone(), self.meta.bc.clone())
    }

    pub fn to_director(&self) -> Result<DirectorField> {
        if self.meta.components != 3 {
            return Err(VortexError::config("snapshot is not a director field"));
        }
        Ok(DirectorField {
            grid: self.grid()?,
            m: self.data.chunks_exact(3).map(|c| Vec3([c[0], c[1], c[2]])).collect(),
        })
    }

    pub fn to_complex(&self) -> Result<ComplexField> {
        if self.meta.components != 2 {
            return Err(VortexError::config("snapshot is not a complex field"));
        }
        Ok(ComplexField {
            grid: self.grid()?,
            u: self.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        })
    }

    /// Writes `<base>.fld` and `<base>.fld.json`; `base` may already end in `.fld`.
    pub fn write(&self, base: &Path) -> Result<PathBuf> {
        let fld = fld_path(base);
        let mut w = BufWriter::new(fs::File::create(&fld)?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = sidecar_path(&fld);
        fs::write(&sidecar, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(fld)
    }

    pub fn read(base: &Path) -> Result<Self> {
        let fld = fld_path(base);
        let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(&fld))?)?;
        let mut bytes = Vec::new();
        fs::File::open(&fld)?.read_to_end(&mut bytes)?;
        let expected = meta.nx * meta.ny * meta.components * 8;
        if bytes.len() != expected {
            return Err(VortexError::config(format!(
                "{}: expected {expected} bytes, found {}",
                fld.display(),
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(FieldSnapshot { meta, data })
    }
}

fn meta_for(g: &Grid2D, components: usize, time: f64, epsilon: f64) -> SnapshotMeta {
    SnapshotMeta { nx: g.nx, ny: g.ny, h: g.h, domain: g.domain.clone(), bc: g.bc.clone(), components, time, epsilon }
}

fn fld_path(base: &Path) -> PathBuf {
    if base.extension().is_some_and(|e| e == "fld") {
        base.to_path_buf()
    } else {
        let mut s = base.as_os_str().to_owned();
        s.push(".fld");
        PathBuf::from(s)
    }
}

fn sidecar_path(fld: &Path) -> PathBuf {
    let mut s = fld.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryData;

    fn square() -> Arc<Grid2D> {
        make_grid(17, 17, Domain::unit_square(), BoundaryCondition::Neumann).unwrap()
    }

    #[test]
    fn projection_normalises() {
        let f = DirectorField::uniform(square(), Vec3::new(0.0, 0.0, 2.0));
        let f = project_unit(f).unwrap();
        assert!(f.m.iter().all(|v| *v == Vec3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn projection_is_idempotent() {
        let f = DirectorField::from_fn(square(), |p| {
            let v = Vec3::new(p[0].cos(), p[1].sin(), 0.5);
            v * (1.0 / v.norm())
        });
        let g = project_unit(f.clone()).unwrap();
        for (a, b) in f.m.iter().zip(&g.m) {
            assert!((*a - *b).norm() < 1e-15);
        }
    }

    #[test]
    fn projection_rejects_zero() {
        let mut f = DirectorField::uniform(square(), Vec3::new(1.0, 0.0, 0.0));
        f.m[40] = Vec3::ZERO;
        match project_unit(f) {
            Err(VortexError::DegenerateDirector { index, .. }) => assert_eq!(index, 40),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g =
            make_grid(17, 17, Domain::UnitDisk, BoundaryCondition::dirichlet(BoundaryData::origin_vortex())).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::new(p[0], -p[1]));
        let snap = FieldSnapshot::from_complex(&f, 0.25, 0.05);
        let path = snap.write(&dir.path().join("u")).unwrap();
        assert!(path.to_string_lossy().ends_with("u.fld"));
        assert_eq!(fs::metadata(&path).unwrap().len(), 17 * 17 * 2 * 8);
        let back = FieldSnapshot::read(&path).unwrap();
        assert_eq!(back, snap);
        let g2 = back.to_complex().unwrap();
        assert_eq!(g2.u, f.u);
        // First value is little-endian re(u(0,0)).
        let bytes = fs::read(&path).unwrap();
        assert_eq!(f64::from_le_bytes(bytes[..8].try_into().unwrap()), -1.0);
    }
}
