//! Poisson/Laplace solves on masked lattices.
//!
//! The operator is the weighted graph Laplacian `(A x)_i = sum_e w_e (x_i - x_j)`
//! over lattice edges inside the mask, restricted to the free nodes (fixed
//! nodes are eliminated into the right-hand side by the caller). It is solved
//! with Jacobi-preconditioned conjugate gradients; rectangles with every
//! boundary node fixed take a sine-transform fast path.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, VortexError};
use crate::grid::Grid2D;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GraphLaplacian<'g> {
    grid: &'g Grid2D,
    free: Vec<bool>,
    diag: Vec<f64>,
    singular: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

impl<'g> GraphLaplacian<'g> {
    /// `free[k]` selects unknowns; every other masked node is treated as fixed.
    pub fn new(grid: &'g Grid2D, free: Vec<bool>) -> Self {
        let mut diag = vec![0.0; grid.len()];
        for (k, d) in diag.iter_mut().enumerate() {
            if free[k] {
                let (i, j) = grid.ij(k);
                let mut s = grid.edge_weight_x(i, j) + grid.edge_weight_y(i, j);
                if i > 0 {
                    s += grid.edge_weight_x(i - 1, j);
                }
                if j > 0 {
                    s += grid.edge_weight_y(i, j - 1);
                }
                *d = s;
            }
        }
        let singular = grid.mask_indices().all(|k| free[k]);
        GraphLaplacian { grid, free, diag, singular }
    }

    pub fn is_free(&self, k: usize) -> bool {
        self.free[k]
    }

    /// Whether constants lie in the kernel (no fixed nodes).
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Visits the lattice edges of node `k` as `(neighbour, weight)`.
    pub fn for_each_edge(&self, k: usize, mut f: impl FnMut(usize, f64)) {
        let g = self.grid;
        let (i, j) = g.ij(k);
        let w = g.edge_weight_x(i, j);
        if w > 0.0 {
            f(k + 1, w);
        }
        if i > 0 {
            let w = g.edge_weight_x(i - 1, j);
            if w > 0.0 {
                f(k - 1, w);
            }
        }
        let w = g.edge_weight_y(i, j);
        if w > 0.0 {
            f(k + g.nx, w);
        }
        if j > 0 {
            let w = g.edge_weight_y(i, j - 1);
            if w > 0.0 {
                f(k - g.nx, w);
            }
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..x.len() {
            if !self.free[k] {
                y[k] = 0.0;
                continue;
            }
            let mut acc = self.diag[k] * x[k];
            self.for_each_edge(k, |n, w| {
                if self.free[n] {
                    acc -= w * x[n];
                }
            });
            y[k] = acc;
        }
    }

    fn project_mean(&self, v: &mut [f64]) {
        let (s, c) =
            v.iter().enumerate().filter(|(k, _)| self.free[*k]).fold((0.0, 0usize), |(s, c), (_, x)| (s + x, c + 1));
        let m = s / c.max(1) as f64;
        for (k, x) in v.iter_mut().enumerate() {
            if self.free[k] {
                *x -= m;
            }
        }
    }

    /// Preconditioned conjugate gradients to relative residual `tol`.
    pub fn solve_cg(
        &self,
        rhs: &[f64],
        x0: Option<&[f64]>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let n = rhs.len();
        let mut b: Vec<f64> = (0..n).map(|k| if self.free[k] { rhs[k] } else { 0.0 }).collect();
        if self.singular {
            self.project_mean(&mut b);
        }
        let bnorm = dot(&b, &b).sqrt();
        let mut x: Vec<f64> = match x0 {
            Some(x0) => (0..n).map(|k| if self.free[k] { x0[k] } else { 0.0 }).collect(),
            None => vec![0.0; n],
        };
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
        }
        let mut r = vec![0.0; n];
        self.apply(&x, &mut r);
        for k in 0..n {
            r[k] = b[k] - r[k];
        }
        let precond = |r: &[f64], z: &mut [f64]| {
            for k in 0..n {
                z[k] = if self.free[k] && self.diag[k] > 0.0 { r[k] / self.diag[k] } else { 0.0 };
            }
        };
        let mut z = vec![0.0; n];
        precond(&r, &mut z);
        if self.singular {
            self.project_mean(&mut z);
        }
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut rel = dot(&r, &r).sqrt() / bnorm;
        let mut it = 0;
        while rel > tol {
            if it >= max_iter {
                return Err(VortexError::SolverDiverged { iterations: it, residual: rel });
            }
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(VortexError::SolverDiverged { iterations: it, residual: rel });
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            precond(&r, &mut z);
            if self.singular {
                self.project_mean(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            rel = dot(&r, &r).sqrt() / bnorm;
            it += 1;
        }
        if self.singular {
            self.project_mean(&mut x);
        }
        Ok((x, SolveStats { iterations: it, residual: rel }))
    }

    /// Uses the sine-transform path when it applies, CG otherwise.
    pub fn solve(&self, rhs: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        if self.grid.is_rectangle() && self.free_is_interior() {
            let x = dst_poisson(self.grid, rhs);
            let mut ax = vec![0.0; x.len()];
            self.apply(&x, &mut ax);
            let num: f64 = (0..x.len()).filter(|&k| self.free[k]).map(|k| (ax[k] - rhs[k]).powi(2)).sum();
            let den: f64 = (0..x.len()).filter(|&k| self.free[k]).map(|k| rhs[k].powi(2)).sum();
            let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
            if residual <= 1e3 * DEFAULT_TOL {
                return Ok((x, SolveStats { iterations: 0, residual }));
            }
        }
        let cap = 50 * (self.grid.nx + self.grid.ny) + 1000;
        self.solve_cg(rhs, x0, DEFAULT_TOL, cap)
    }

    fn free_is_interior(&self) -> bool {
        (0..self.grid.len()).all(|k| self.free[k] == self.grid.is_interior(k))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place DST-I of each length-`n` chunk: `X_k = sum_m x_m sin(pi (k+1)(m+1)/(n+1))`.
fn dst1_rows(data: &mut [f64], n: usize, planner: &mut FftPlanner<f64>) {
    let len = 2 * (n + 1);
    let fft = planner.plan_fft_forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for row in data.chunks_exact_mut(n) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for m in 0..n {
            buf[m + 1] = Complex64::new(row[m], 0.0);
            buf[len - 1 - m] = Complex64::new(-row[m], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n {
            row[k] = -0.5 * buf[k + 1].im;
        }
    }
}

fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Solves the interior five-point system `(4 x_i - sum x_j) = b_i` with zero
/// boundary values on a full rectangle.
pub fn dst_poisson(g: &Grid2D, rhs: &[f64]) -> Vec<f64> {
    let mx = g.nx - 2;
    let my = g.ny - 2;
    let mut b = vec![0.0; mx * my];
    for j in 0..my {
        for i in 0..mx {
            b[j * mx + i] = rhs[g.idx(i + 1, j + 1)];
        }
    }
    let mut planner = FftPlanner::new();
    dst1_rows(&mut b, mx, &mut planner);
    let mut t = transpose(&b, my, mx);
    dst1_rows(&mut t, my, &mut planner);
    // t is indexed [p * my + q] with p along x, q along y.
    for p in 0..mx {
        let lx = 2.0 - 2.0 * (std::f64::consts::PI * (p + 1) as f64 / (mx + 1) as f64).cos();
        for q in 0..my {
            let ly = 2.0 - 2.0 * (std::f64::consts::PI * (q + 1) as f64 / (my + 1) as f64).cos();
            t[p * my + q] /= lx + ly;
        }
    }
    dst1_rows(&mut t, my, &mut planner);
    let mut b = transpose(&t, mx, my);
    dst1_rows(&mut b, mx, &mut planner);
    let scale = 4.0 / ((mx + 1) * (my + 1)) as f64;
    let mut x = vec![0.0; g.len()];
    for j in 0..my {
        for i in 0..mx {
            x[g.idx(i + 1, j + 1)] = b[j * mx + i] * scale;
        }
    }
    x
}
