//! Time-stepping Laplacian and the matching lattice energy.
//!
//! The five-point operator here is the exact variational derivative of the
//! edge energy `sum_e w_e |f_j - f_i|^2 / 2`, divided by the node weights.
//! That pairing makes semi-discrete energy balances hold identically.
//! Neumann data use mirror ghosts on rectangles and zero-flux faces on
//! masked domains; Dirichlet boundary nodes are frozen.

use rayon::prelude::*;

use crate::grid::Grid2D;
use crate::ops::Lin;

#[derive(Debug, Clone, Default)]
struct RowPlan {
    /// Half-open index ranges of nodes whose four neighbours are all masked.
    runs: Vec<(usize, usize)>,
    /// Remaining active nodes with substituted neighbours.
    irregular: Vec<(usize, [usize; 4])>,
}

#[derive(Debug, Clone)]
pub struct DynStencil {
    nx: usize,
    inv_h2: f64,
    rows: Vec<RowPlan>,
    active: Vec<bool>,
}

impl DynStencil {
    pub fn new(g: &Grid2D) -> Self {
        let nx = g.nx;
        let mut rows = vec![RowPlan::default(); g.ny];
        let mut active = vec![false; g.len()];
        for (j, plan) in rows.iter_mut().enumerate() {
            let mut run_start: Option<usize> = None;
            for i in 0..nx {
                let k = g.idx(i, j);
                let act = g.evolves(k);
                active[k] = act;
                let regular = act
                    && i > 0
                    && j > 0
                    && i + 1 < nx
                    && j + 1 < g.ny
                    && g.in_mask(k - 1)
                    && g.in_mask(k + 1)
                    && g.in_mask(k - nx)
                    && g.in_mask(k + nx);
                if regular {
                    run_start.get_or_insert(k);
                } else {
                    if let Some(s) = run_start.take() {
                        plan.runs.push((s, k));
                    }
                    if act {
                        plan.irregular.push((k, substitute_neighbors(g, i, j)));
                    }
                }
            }
            if let Some(s) = run_start.take() {
                plan.runs.push((s, g.idx(nx - 1, j) + 1));
            }
        }
        DynStencil { nx, inv_h2: 1.0 / (g.h * g.h), rows, active }
    }

    #[inline]
    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Writes `op(k, f[k], lap f[k])` into `out[k]` for every active node; other
    /// entries of `out` are not touched.
    pub fn map_active<T, U, F>(&self, f: &[T], out: &mut [U], op: F)
    where
        T: Lin,
        U: Send,
        F: Fn(usize, T, T) -> U + Sync,
    {
        let nx = self.nx;
        let s = self.inv_h2;
        out.par_chunks_mut(nx).zip(self.rows.par_iter()).enumerate().for_each(|(j, (row, plan))| {
            let base = j * nx;
            for &(a, b) in &plan.runs {
                let n = b - a;
                let (up, down) = (&f[a - nx..b - nx], &f[a + nx..b + nx]);
                let mid = &f[a - 1..b + 1];
                let dst = &mut row[a - base..b - base];
                for i in 0..n {
                    let c = mid[i + 1];
                    let lap = (mid[i] + mid[i + 2] + up[i] + down[i] - c * 4.0) * s;
                    dst[i] = op(a + i, c, lap);
                }
            }
            for &(k, nb) in &plan.irregular {
                let c = f[k];
                let lap = (f[nb[0]] + f[nb[1]] + f[nb[2]] + f[nb[3]] - c * 4.0) * s;
                row[k - base] = op(k, c, lap);
            }
        });
    }

    pub fn laplacian<T: Lin>(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); f.len()];
        self.map_active(f, &mut out, |_, _, l| l);
        out
    }
}

fn substitute_neighbors(g: &Grid2D, i: usize, j: usize) -> [usize; 4] {
    let k = g.idx(i, j);
    let ii = i as isize;
    let jj = j as isize;
    let offs = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
    let mut nb = [k; 4];
    for (n, &(di, dj)) in offs.iter().enumerate() {
        if g.in_mask_ij(ii + di, jj + dj) {
            nb[n] = g.idx((ii + di) as usize, (jj + dj) as usize);
        } else if g.is_rectangle() && g.in_mask_ij(ii - di, jj - dj) {
            nb[n] = g.idx((ii - di) as usize, (jj - dj) as usize);
        }
    }
    nb
}

/// Gradient part `1/2 |grad f|^2` of the lattice energy density, per node, such
/// that `h^2 sum_k w_k e_k` equals the edge energy.
pub fn gradient_energy_density<T, N>(g: &Grid2D, f: &[T], norm_sq: N) -> Vec<f64>
where
    T: Lin,
    N: Fn(T) -> f64 + Sync,
{
    let nx = g.nx;
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = g.idx(i, j);
            if !g.in_mask(k) {
                continue;
            }
            let mut acc = 0.0;
            if i + 1 < nx {
                acc += g.edge_weight_x(i, j) * norm_sq(f[k + 1] - f[k]);
            }
            if i > 0 {
                acc += g.edge_weight_x(i - 1, j) * norm_sq(f[k] - f[k - 1]);
            }
            if j + 1 < g.ny {
                acc += g.edge_weight_y(i, j) * norm_sq(f[k + nx] - f[k]);
            }
            if j > 0 {
                acc += g.edge_weight_y(i, j - 1) * norm_sq(f[k] - f[k - nx]);
            }
            *o = 0.25 * acc * inv_h2 / g.weight(k);
        }
    });
    out
}

/// Edge energy `sum_e w_e |f_j - f_i|^2 / 2` (already includes the `h^2 / h^2`).
pub fn gradient_energy<T, N>(g: &Grid2D, f: &[T], norm_sq: N) -> f64
where
    T: Lin,
    N: Fn(T) -> f64 + Sync,
{
    let nx = g.nx;
    let rows: Vec<f64> = (0..g.ny)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..nx {
                let k = g.idx(i, j);
                let wx = g.edge_weight_x(i, j);
                if wx > 0.0 {
                    acc += wx * norm_sq(f[k + 1] - f[k]);
                }
                let wy = g.edge_weight_y(i, j);
                if wy > 0.0 {
                    acc += wy * norm_sq(f[k + nx] - f[k]);
                }
            }
            acc
        })
        .collect();
    0.5 * rows.iter().sum::<f64>()
}

/// Deterministic `h^2`-weighted node sum of `term(k)` over the mask.
pub fn node_sum<F: Fn(usize) -> f64 + Sync>(g: &Grid2D, term: F) -> f64 {
    let h2 = g.h * g.h;
    let rows: Vec<f64> = (0..g.ny)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..g.nx {
                let k = g.idx(i, j);
                if g.in_mask(k) {
                    acc += g.weight(k) * term(k);
                }
            }
            acc
        })
        .collect();
    h2 * rows.iter().sum::<f64>()
}
