//! Time-stepping chassis shared by the director and order-parameter flows.
//!
//! A [`Dynamics`] supplies the right-hand side (zero at frozen nodes), an
//! optional projection and the exact flow of its stiff local part. The
//! [`integrate`] driver advances with RK4 or with a Strang split around the
//! local flow, accumulates the dissipation `alpha h^2 sum_k w_k |d_t u_k|^2`
//! in time, checks the energy at checkpoints and rolls back with a halved
//! step when the energy rises or the balance breaks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::field::FieldSnapshot;
use crate::grid::Grid2D;
use crate::ops::Lin;

const CHUNK: usize = 4096;
/// Usable fraction of the RK4 stability interval (about 2.78 on both axes).
pub const RK4_REACH: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Classical RK4 on the full right-hand side, projecting after every stage.
    #[default]
    ExplicitLlRk4,
    /// Strang split: exact local stiff flow for half steps around an RK4 step
    /// of the remaining terms.
    Imex,
}

pub(crate) trait Dynamics: Sync {
    type T: Lin;

    fn grid(&self) -> &Grid2D;
    /// Gilbert damping `alpha_eps` multiplying `|d_t u|^2` in the energy balance.
    fn alpha(&self) -> f64;
    fn norm_sq(v: Self::T) -> f64;
    /// Full right-hand side. Entries at frozen nodes must be exactly zero.
    fn rhs(&self, u: &[Self::T], out: &mut [Self::T]);
    /// Right-hand side without the stiff local part.
    fn rhs_split(&self, u: &[Self::T], out: &mut [Self::T]);
    /// Exact flow of the stiff local part over `dt`, in place.
    fn local_flow(&self, u: &mut [Self::T], dt: f64);
    fn project(&self, _u: &mut [Self::T]) {}
    fn energy(&self, u: &[Self::T]) -> f64;
    fn snapshot(&self, u: &[Self::T], t: f64) -> FieldSnapshot;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub snapshot_stride: usize,
    pub check_stride: usize,
    /// Allowed relative energy increase per step.
    pub increase_tol: f64,
    /// Allowed relative energy-balance defect per step.
    pub balance_tol: f64,
    pub max_reductions: u32,
}

pub(crate) struct Sample<'a, T> {
    pub t: f64,
    pub u: &'a [T],
    pub energy: f64,
    pub dissipated: f64,
    pub dt: f64,
}

pub(crate) enum Flow {
    Continue,
    Stop,
}

pub(crate) struct Outcome<T> {
    #[allow(dead_code)]
    pub u: Vec<T>,
    pub t: f64,
    pub steps: usize,
    pub reductions: u32,
}

struct Buffers<T> {
    k: Vec<T>,
    acc: Vec<T>,
    stage: Vec<T>,
}

/// `h^2 w_k`, zero outside the mask.
fn node_weights(g: &Grid2D) -> Vec<f64> {
    let h2 = g.h * g.h;
    (0..g.len()).map(|k| if g.in_mask(k) { h2 * g.weight(k) } else { 0.0 }).collect()
}

fn weighted_norm<T: Lin, N: Fn(T) -> f64 + Sync>(v: &[T], w: &[f64], norm_sq: N) -> f64 {
    let parts: Vec<f64> = v
        .par_chunks(CHUNK)
        .zip(w.par_chunks(CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(x, wk)| wk * norm_sq(*x)).sum::<f64>())
        .collect();
    parts.iter().sum()
}

/// `stage = u + s k`, `acc += b k` (`acc = b k` on the first stage); returns
/// `sum_k w_k |k|^2`.
#[allow(clippy::too_many_arguments)]
fn stage_update<T: Lin, N: Fn(T) -> f64 + Sync>(
    u: &[T],
    k: &[T],
    stage: &mut [T],
    acc: &mut [T],
    s: f64,
    b: f64,
    first: bool,
    w: &[f64],
    norm_sq: N,
) -> f64 {
    let parts: Vec<f64> = stage
        .par_chunks_mut(CHUNK)
        .zip(acc.par_chunks_mut(CHUNK))
        .zip(u.par_chunks(CHUNK).zip(k.par_chunks(CHUNK)).zip(w.par_chunks(CHUNK)))
        .map(|((st, ac), ((uu, kk), ww))| {
            let mut r = 0.0;
            for i in 0..st.len() {
                let kv = kk[i];
                st[i] = uu[i] + kv * s;
                ac[i] = if first { kv * b } else { ac[i] + kv * b };
                r += ww[i] * norm_sq(kv);
            }
            r
        })
        .collect();
    parts.iter().sum()
}

/// One RK4 step of `rhs` with projection after each stage. Returns the RK4
/// quadrature of `int sum_k w_k |d_t u|^2 dt` over the step.
fn rk4<D: Dynamics>(dy: &D, u: &mut [D::T], dt: f64, split: bool, buf: &mut Buffers<D::T>, w: &[f64]) -> f64 {
    let eval = |x: &[D::T], out: &mut [D::T]| if split { dy.rhs_split(x, out) } else { dy.rhs(x, out) };
    let ns = D::norm_sq;
    eval(u, &mut buf.k);
    let mut r = stage_update(u, &buf.k, &mut buf.stage, &mut buf.acc, 0.5 * dt, 1.0, true, w, ns);
    dy.project(&mut buf.stage);
    eval(&buf.stage, &mut buf.k);
    r += 2.0 * stage_update(u, &buf.k, &mut buf.stage, &mut buf.acc, 0.5 * dt, 2.0, false, w, ns);
    dy.project(&mut buf.stage);
    eval(&buf.stage, &mut buf.k);
    r += 2.0 * stage_update(u, &buf.k, &mut buf.stage, &mut buf.acc, dt, 2.0, false, w, ns);
    dy.project(&mut buf.stage);
    eval(&buf.stage, &mut buf.k);
    let s = dt / 6.0;
    let parts: Vec<f64> = u
        .par_chunks_mut(CHUNK)
        .zip(buf.acc.par_chunks(CHUNK).zip(buf.k.par_chunks(CHUNK)).zip(w.par_chunks(CHUNK)))
        .map(|(uu, ((ac, kk), ww))| {
            let mut r4 = 0.0;
            for i in 0..uu.len() {
                uu[i] = uu[i] + (ac[i] + kk[i]) * s;
                r4 += ww[i] * ns(kk[i]);
            }
            r4
        })
        .collect();
    r += parts.iter().sum::<f64>();
    dy.project(u);
    r * s
}

fn full_rate<D: Dynamics>(dy: &D, u: &[D::T], k: &mut [D::T], w: &[f64]) -> f64 {
    dy.rhs(u, k);
    weighted_norm(k, w, D::norm_sq)
}

/// Advances `u0` to `settings.t_end`, calling `observe` at `t = 0`, every
/// `snapshot_stride` steps and at the end. Observed samples have always
/// passed the energy check.
pub(crate) fn integrate<D: Dynamics>(
    dy: &D,
    u0: Vec<D::T>,
    settings: Settings,
    mut observe: impl FnMut(&Sample<D::T>) -> Result<Flow>,
) -> Result<Outcome<D::T>> {
    let g = dy.grid();
    let n = g.len();
    let w = node_weights(g);
    let alpha = dy.alpha();
    let mut buf =
        Buffers { k: vec![D::T::default(); n], acc: vec![D::T::default(); n], stage: vec![D::T::default(); n] };
    let mut u = u0;
    let mut t = 0.0;
    let mut dt = settings.dt;
    let mut diss = 0.0;
    let mut steps = 0usize;
    let mut reductions = 0u32;
    let mut energy = dy.energy(&u);
    if !energy.is_finite() {
        return Err(VortexError::Numerical { time: 0.0, detail: "non-finite initial energy".into() });
    }
    let snap_stride = settings.snapshot_stride.max(1);
    let check_stride = settings.check_stride.max(1).min(snap_stride);
    if let Flow::Stop = observe(&Sample { t, u: &u, energy, dissipated: diss, dt })? {
        return Ok(Outcome { u, t, steps, reductions });
    }
    // Checkpoint: last state that passed the energy check.
    let mut ck_u = u.clone();
    let (mut ck_t, mut ck_e, mut ck_d, mut ck_steps) = (t, energy, diss, steps);
    let mut last_good = dy.snapshot(&u, t);
    let mut rate_prev = if settings.scheme == Scheme::Imex { full_rate(dy, &u, &mut buf.k, &w) } else { 0.0 };
    while t < settings.t_end * (1.0 - 1e-12) {
        let factor = 1usize << reductions;
        let h = dt.min(settings.t_end - t);
        match settings.scheme {
            Scheme::ExplicitLlRk4 => {
                diss += alpha * rk4(dy, &mut u, h, false, &mut buf, &w);
            }
            Scheme::Imex => {
                dy.local_flow(&mut u, 0.5 * h);
                dy.project(&mut u);
                rk4(dy, &mut u, h, true, &mut buf, &w);
                dy.local_flow(&mut u, 0.5 * h);
                dy.project(&mut u);
                let rate = full_rate(dy, &u, &mut buf.k, &w);
                diss += alpha * 0.5 * h * (rate_prev + rate);
                rate_prev = rate;
            }
        }
        t += h;
        steps += 1;
        let at_end = t >= settings.t_end * (1.0 - 1e-12);
        let since = steps - ck_steps;
        let snap_due = steps % (snap_stride * factor) == 0 || at_end;
        if !(snap_due || since >= check_stride * factor) {
            continue;
        }
        energy = dy.energy(&u);
        if !energy.is_finite() || u.iter().any(|x| !D::norm_sq(*x).is_finite()) {
            return Err(VortexError::Blowup { time: t, last_good: Box::new(last_good) });
        }
        let scale_e = ck_e.abs().max(1e-300);
        let increase = energy - ck_e;
        let defect = (energy + (diss - ck_d) - ck_e).abs();
        let nsteps = since as f64;
        let rising = alpha > 0.0 && increase > settings.increase_tol * nsteps * scale_e;
        // E + D is the conserved quantity, so its size sets the roundoff floor
        // once the energy has all but dissipated.
        let unbalanced = defect > settings.balance_tol * nsteps * (scale_e + ck_d.abs());
        if rising || unbalanced {
            reductions += 1;
            log::warn!(
                "energy check failed at t = {t:.6} (increase {increase:e}, defect {defect:e}); halving dt to {:e}",
                dt * 0.5
            );
            if reductions > settings.max_reductions {
                return Err(VortexError::Numerical {
                    time: t,
                    detail: format!("energy balance still violated after {} step reductions", settings.max_reductions),
                });
            }
            u.clone_from(&ck_u);
            t = ck_t;
            diss = ck_d;
            steps = ck_steps;
            dt *= 0.5;
            // Keep snapshot times on the original grid after the reduction.
            steps *= 2;
            ck_steps = steps;
            if settings.scheme == Scheme::Imex {
                rate_prev = full_rate(dy, &u, &mut buf.k, &w);
            }
            continue;
        }
        ck_u.clone_from(&u);
        ck_t = t;
        ck_e = energy;
        ck_d = diss;
        ck_steps = steps;
        if snap_due {
            last_good = dy.snapshot(&u, t);
            if let Flow::Stop = observe(&Sample { t, u: &u, energy, dissipated: diss, dt })? {
                break;
            }
        }
    }
    Ok(Outcome { u, t, steps, reductions })
}
