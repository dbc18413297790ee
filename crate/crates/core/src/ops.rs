//! Mask-aware finite differences for analysis: central differences in the
//! interior, second-order one-sided stencils where the mask ends.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::field::{ScalarField, Staggering, VectorField};
use crate::grid::Grid2D;
use crate::vec3::Vec3;

/// Values that can be differenced.
pub trait Lin:
    Copy + Send + Sync + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}
impl Lin for f64 {}
impl Lin for Vec3 {}
impl Lin for Complex64 {}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

#[inline]
fn neighbor(g: &Grid2D, i: usize, j: usize, axis: Axis, off: isize) -> Option<usize> {
    let (ii, jj) = match axis {
        Axis::X => (i as isize + off, j as isize),
        Axis::Y => (i as isize, j as isize + off),
    };
    if g.in_mask_ij(ii, jj) {
        Some(g.idx(ii as usize, jj as usize))
    } else {
        None
    }
}

#[inline]
fn d1<T: Lin>(g: &Grid2D, f: &[T], i: usize, j: usize, axis: Axis) -> T {
    let k = g.idx(i, j);
    let inv = 1.0 / g.h;
    let p1 = neighbor(g, i, j, axis, 1);
    let m1 = neighbor(g, i, j, axis, -1);
    match (m1, p1) {
        (Some(a), Some(b)) => (f[b] - f[a]) * (0.5 * inv),
        (None, Some(b)) => match neighbor(g, i, j, axis, 2) {
            Some(c) => (f[b] * 4.0 - f[k] * 3.0 - f[c]) * (0.5 * inv),
            None => (f[b] - f[k]) * inv,
        },
        (Some(a), None) => match neighbor(g, i, j, axis, -2) {
            Some(c) => (f[k] * 3.0 - f[a] * 4.0 + f[c]) * (0.5 * inv),
            None => (f[k] - f[a]) * inv,
        },
        (None, None) => T::default(),
    }
}

#[inline]
fn d2<T: Lin>(g: &Grid2D, f: &[T], i: usize, j: usize, axis: Axis) -> T {
    let k = g.idx(i, j);
    let inv2 = 1.0 / (g.h * g.h);
    let p1 = neighbor(g, i, j, axis, 1);
    let m1 = neighbor(g, i, j, axis, -1);
    let one_sided = |dir: isize| -> Option<T> {
        let a = neighbor(g, i, j, axis, dir)?;
        let b = neighbor(g, i, j, axis, 2 * dir)?;
        let c = neighbor(g, i, j, axis, 3 * dir)?;
        Some((f[k] * 2.0 - f[a] * 5.0 + f[b] * 4.0 - f[c]) * inv2)
    };
    match (m1, p1) {
        (Some(a), Some(b)) => (f[a] + f[b] - f[k] * 2.0) * inv2,
        (None, Some(_)) => one_sided(1).unwrap_or_default(),
        (Some(_), None) => one_sided(-1).unwrap_or_default(),
        (None, None) => T::default(),
    }
}

/// Partial derivatives `(d/dx, d/dy)` at every masked node.
pub fn gradient<T: Lin>(g: &Grid2D, f: &[T]) -> Vec<[T; 2]> {
    let mut out = vec![[T::default(); 2]; g.len()];
    out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            if g.in_mask(g.idx(i, j)) {
                *o = [d1(g, f, i, j, Axis::X), d1(g, f, i, j, Axis::Y)];
            }
        }
    });
    out
}

/// Analysis Laplacian (not the time-stepping operator, see [`crate::stencil`]).
pub fn laplacian<T: Lin>(g: &Grid2D, f: &[T]) -> Vec<T> {
    let mut out = vec![T::default(); g.len()];
    out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            if g.in_mask(g.idx(i, j)) {
                *o = d2(g, f, i, j, Axis::X) + d2(g, f, i, j, Axis::Y);
            }
        }
    });
    out
}

pub fn gradient_field(g: &std::sync::Arc<Grid2D>, f: &ScalarField) -> VectorField {
    VectorField { grid: g.clone(), values: gradient(g, &f.values) }
}

/// Scalar curl `d1 F2 - d2 F1` of a node-based vector field.
pub fn curl(g: &Grid2D, v: &[[f64; 2]]) -> Vec<f64> {
    let f1: Vec<f64> = v.iter().map(|a| a[0]).collect();
    let f2: Vec<f64> = v.iter().map(|a| a[1]).collect();
    let g1 = gradient(g, &f1);
    let g2 = gradient(g, &f2);
    g2.iter().zip(&g1).map(|(a, b)| a[0] - b[1]).collect()
}

/// Divergence `d1 F1 + d2 F2`.
pub fn divergence(g: &Grid2D, v: &[[f64; 2]]) -> Vec<f64> {
    let f1: Vec<f64> = v.iter().map(|a| a[0]).collect();
    let f2: Vec<f64> = v.iter().map(|a| a[1]).collect();
    let g1 = gradient(g, &f1);
    let g2 = gradient(g, &f2);
    g1.iter().zip(&g2).map(|(a, b)| a[0] + b[1]).collect()
}

pub fn node_field(g: &std::sync::Arc<Grid2D>, values: Vec<f64>) -> ScalarField {
    ScalarField { grid: g.clone(), values, staggering: Staggering::Node }
}

/// Wraps an angle difference into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(mut d: f64) -> f64 {
    use std::f64::consts::PI;
    if d > PI || d <= -PI {
        d -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
        if d <= -PI {
            d += 2.0 * PI;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, BoundaryCondition, Domain};
    use std::f64::consts::PI;

    fn lap_error(n: usize) -> f64 {
        let g = make_grid(n, n, Domain::unit_square(), BoundaryCondition::Neumann).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let p = g.pos_idx(k);
                (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
            })
            .collect();
        let l = laplacian(&g, &f);
        (0..g.len()).map(|k| (l[k] + 8.0 * PI * PI * f[k]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_is_second_order_including_boundary() {
        let e1 = lap_error(33);
        let e2 = lap_error(65);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn gradient_is_second_order_at_edges() {
        let err = |n: usize| {
            let g = make_grid(n, n, Domain::unit_square(), BoundaryCondition::Neumann).unwrap();
            let f: Vec<f64> = (0..g.len()).map(|k| (3.0 * g.pos_idx(k)[0]).exp()).collect();
            let d = gradient(&g, &f);
            (0..g.len()).map(|k| (d[k][0] - 3.0 * f[k]).abs() + d[k][1].abs()).fold(0.0, f64::max)
        };
        let r = err(33) / err(65);
        assert!(r > 3.2 && r < 4.8, "ratio {r}");
    }

    #[test]
    fn curl_of_gradient_vanishes_for_linear() {
        let g = make_grid(17, 17, Domain::unit_square(), BoundaryCondition::Neumann).unwrap();
        let v: Vec<[f64; 2]> = (0..g.len())
            .map(|k| {
                let p = g.pos_idx(k);
                [-p[1], p[0]]
            })
            .collect();
        let c = curl(&g, &v);
        let d = divergence(&g, &v);
        for k in 0..g.len() {
            assert!((c[k] - 2.0).abs() < 1e-12);
            assert!(d[k].abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-10.0, -PI, -1.0, 0.0, 1.0, PI, 3.5, 12.0] {
            let w = wrap_angle(x);
            assert!(w > -PI - 1e-15 && w <= PI + 1e-15);
            let k = (x - w) / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }
}
