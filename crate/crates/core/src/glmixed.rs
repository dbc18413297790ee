//! Ginzburg-Landau flow with mixed dynamics `(alpha + i) u_t = lap u + u (1 - |u|^2) / eps^2`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{planar_jacobian, read_vortices};
use crate::error::{Result, VortexError};
use crate::field::{ComplexField, FieldSnapshot, ScalarField, Staggering};
use crate::grid::Grid2D;
use crate::llg::{self, stable_dt, TrackState, Tracker, R_MIN_EPS};
use crate::stencil::{gradient_energy, node_sum, DynStencil};
use crate::stepper::{self, Dynamics, Flow, Scheme};
use crate::trajectory::{self, RunStatus, Trajectory};
use crate::vortex::EpsilonSchedule;

fn default_scale() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

/// Parameters of a Ginzburg-Landau run; the boundary condition is carried by
/// the grid of the initial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GLConfig {
    pub epsilon: f64,
    pub alpha0: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_scale")]
    pub dt_scale: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub snapshot_stride: usize,
    #[serde(default = "default_stride")]
    pub check_stride: usize,
    #[serde(default)]
    pub r_min: Option<f64>,
    /// Diagnostic mode: drop the Schroedinger part, `alpha u_t = lap u + ...`.
    #[serde(default)]
    pub dissipative_only: bool,
    /// Record the three conservation-law residuals between consecutive snapshots.
    #[serde(default)]
    pub record_residuals: bool,
}

impl GLConfig {
    pub fn new(epsilon: f64, alpha0: f64, t_end: f64) -> Self {
        GLConfig {
            epsilon,
            alpha0,
            dt: None,
            dt_scale: 1.0,
            t_end,
            scheme: Scheme::ExplicitLlRk4,
            snapshot_stride: 100,
            check_stride: 1,
            r_min: None,
            dissipative_only: false,
            record_residuals: false,
        }
    }

    pub fn schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.epsilon, self.alpha0)
    }

    pub fn r_min(&self) -> f64 {
        self.r_min.unwrap_or(R_MIN_EPS * self.epsilon)
    }

    /// The complex factor `c` in `u_t = c (lap u + u (1 - |u|^2) / eps^2)`.
    pub fn coefficient(&self) -> Result<Complex64> {
        let a = self.schedule()?.alpha();
        if self.dissipative_only {
            if a == 0.0 {
                return Err(VortexError::config("the dissipative mode needs alpha0 > 0"));
            }
            return Ok(Complex64::new(1.0 / a, 0.0));
        }
        Ok(mixed_coefficient(a))
    }

    fn validate(&self) -> Result<()> {
        self.schedule()?;
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(VortexError::config(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(VortexError::config("dt must be positive"));
        }
        if !(self.dt_scale > 0.0 && self.dt_scale <= 1.0) {
            return Err(VortexError::config("dt_scale must lie in (0, 1]"));
        }
        if self.snapshot_stride == 0 {
            return Err(VortexError::config("snapshot_stride must be at least 1"));
        }
        if self.record_residuals && self.dissipative_only {
            return Err(VortexError::config("conservation residuals are defined for the mixed flow only"));
        }
        Ok(())
    }
}

/// `(alpha - i) / (1 + alpha^2)`, the inverse of `alpha + i`.
pub fn mixed_coefficient(alpha: f64) -> Complex64 {
    Complex64::new(alpha, -1.0) / (1.0 + alpha * alpha)
}

/// RK4-stable step for the factor `c`: spectral radius `|c| (8/h^2 + 2/eps^2)`.
pub fn dt_auto(h: f64, eps: f64, c: Complex64, scheme: Scheme) -> f64 {
    stable_dt(h, eps, c.norm(), 2.0, scheme)
}

struct GlDynamics {
    grid: Arc<Grid2D>,
    stencil: DynStencil,
    eps: f64,
    c: Complex64,
    alpha: f64,
}

impl Dynamics for GlDynamics {
    type T = Complex64;

    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn norm_sq(v: Complex64) -> f64 {
        v.norm_sqr()
    }

    fn rhs(&self, u: &[Complex64], out: &mut [Complex64]) {
        let (c, ie2) = (self.c, 1.0 / (self.eps * self.eps));
        self.stencil.map_active(u, out, |_, z, lap| c * (lap + z * ((1.0 - z.norm_sqr()) * ie2)));
    }

    fn rhs_split(&self, u: &[Complex64], out: &mut [Complex64]) {
        let c = self.c;
        self.stencil.map_active(u, out, |_, _, lap| c * lap);
    }

    fn local_flow(&self, u: &mut [Complex64], dt: f64) {
        let st = &self.stencil;
        let (c, eps) = (self.c, self.eps);
        u.par_iter_mut().enumerate().for_each(|(k, z)| {
            if st.is_active(k) {
                *z = reaction_flow(*z, c, eps, dt);
            }
        });
    }

    fn energy(&self, u: &[Complex64]) -> f64 {
        let ie2 = 0.25 / (self.eps * self.eps);
        gradient_energy(&self.grid, u, |z: Complex64| z.norm_sqr())
            + node_sum(&self.grid, |k| {
                let w = 1.0 - u[k].norm_sqr();
                w * w * ie2
            })
    }

    fn snapshot(&self, u: &[Complex64], t: f64) -> FieldSnapshot {
        FieldSnapshot::from_complex(&ComplexField { grid: self.grid.clone(), u: u.to_vec() }, t, self.eps)
    }
}

/// Exact flow of `z_t = c z (1 - |z|^2) / eps^2`: `|z|^2` follows a logistic
/// law with rate `2 Re c / eps^2` and the phase advances by
/// `Im c / eps^2 * int (1 - |z|^2)`.
fn reaction_flow(z: Complex64, c: Complex64, eps: f64, dt: f64) -> Complex64 {
    let s0 = z.norm_sqr();
    if s0 == 0.0 {
        return z;
    }
    let ie2 = 1.0 / (eps * eps);
    let a = 2.0 * c.re * ie2;
    let (s, int_w) = if a == 0.0 {
        (s0, (1.0 - s0) * dt)
    } else {
        let e = (a * dt).exp();
        let s = s0 * e / (1.0 - s0 + s0 * e);
        (s, (s / s0).ln() / a)
    };
    z * (s / s0).sqrt() * Complex64::from_polar(1.0, c.im * ie2 * int_w)
}

/// `c (lap u + u (1 - |u|^2) / eps^2)` with `c = (alpha - i) / (1 + alpha^2)`;
/// zero at frozen nodes.
pub fn gl_rhs(u: &ComplexField, eps: f64, alpha: f64) -> ComplexField {
    let dy =
        GlDynamics { grid: u.grid.clone(), stencil: DynStencil::new(&u.grid), eps, c: mixed_coefficient(alpha), alpha };
    let mut out = vec![Complex64::default(); u.u.len()];
    dy.rhs(&u.u, &mut out);
    ComplexField { grid: u.grid.clone(), u: out }
}

pub fn gl_run(config: &GLConfig, u0: &ComplexField) -> Result<Trajectory> {
    gl_run_with(config, u0, |_| Ok(()))
}

/// As [`gl_run`], handing every recorded snapshot to `sink`.
pub fn gl_run_with(
    config: &GLConfig,
    u0: &ComplexField,
    mut sink: impl FnMut(&FieldSnapshot) -> Result<()>,
) -> Result<Trajectory> {
    config.validate()?;
    if !u0.is_finite() {
        return Err(VortexError::config("initial field is not finite"));
    }
    let alpha = config.schedule()?.alpha();
    let c = config.coefficient()?;
    let g = u0.grid.clone();
    let dy = GlDynamics { grid: g.clone(), stencil: DynStencil::new(&g), eps: config.epsilon, c, alpha };
    let dt = config.dt.unwrap_or_else(|| config.dt_scale * dt_auto(g.h, config.epsilon, c, config.scheme));
    let mut tracker = Tracker::new(&g, config.epsilon, config.r_min());
    let mut traj = Trajectory::default();
    let set = llg::settings(config.t_end, dt, config.scheme, config.snapshot_stride, config.check_stride);
    let mut status = RunStatus::Completed;
    let mut prev: Option<(f64, ComplexField)> = None;
    log::info!("gl run: eps {} alpha {alpha:.4} dt {dt:.3e} t_end {}", config.epsilon, config.t_end);
    let out = stepper::integrate(&dy, u0.u.clone(), set, |s| {
        let u = ComplexField { grid: g.clone(), u: s.u.to_vec() };
        let readings = read_vortices(&u, tracker.options());
        let (tagged, stop) = match tracker.update(&g, readings) {
            TrackState::Ok(t) => (t, None),
            TrackState::Stop(t, st) => (t, Some(st)),
        };
        let max_mod = u.max_modulus();
        if max_mod > 1.0 + 1e-6 {
            log::warn!("|u| reached {max_mod} at t = {}", s.t);
        }
        let mut scalars = vec![
            (trajectory::ENERGY, s.energy),
            (trajectory::DISSIPATED, s.dissipated),
            (trajectory::JACOBIAN_TOTAL, planar_jacobian(&u).total()),
            (trajectory::MAX_MODULUS, max_mod),
            (trajectory::TIME_STEP, s.dt),
        ];
        if config.record_residuals {
            if let Some((t0, u_prev)) = &prev {
                let r = conservation_residuals(u_prev, *t0, &u, s.t, config.epsilon, alpha)?;
                scalars.push((trajectory::RESIDUAL_MASS, r.mass));
                scalars.push((trajectory::RESIDUAL_JACOBIAN, r.jacobian));
                scalars.push((trajectory::RESIDUAL_ENERGY, r.energy));
            }
        }
        traj.push(s.t, llg::tracked(&tagged, false), &scalars);
        sink(&dy.snapshot(s.u, s.t))?;
        if config.record_residuals {
            prev = Some((s.t, u));
        }
        match stop {
            Some(st) => {
                log::info!("gl run stopped at t = {}: {st:?}", s.t);
                status = st;
                Ok(Flow::Stop)
            }
            None => Ok(Flow::Continue),
        }
    })?;
    log::info!("gl run: {} steps to t = {:.4}, {} step reductions", out.steps, out.t, out.reductions);
    traj.status = status;
    Ok(traj)
}

/// L1 norms of the pointwise residuals of the mass, Jacobian and energy laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationResiduals {
    pub mass: f64,
    pub jacobian: f64,
    pub energy: f64,
}

/// Pointwise residuals: mass and energy on nodes, Jacobian on cells.
#[derive(Debug, Clone)]
pub struct ResidualFields {
    pub mass: ScalarField,
    pub jacobian: ScalarField,
    pub energy: ScalarField,
}

#[inline]
fn dot(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// Pointwise forward time differences between `u1` (at `t1`) and `u2` (at `t2`) minus
/// the spatial sides of the three conservation laws evaluated at `u1`:
///
/// * `d_t |u|^2 / 2 = div j - alpha (iu, u_t)`
/// * `d_t J = curl div (grad u x grad u) - alpha curl (u_t, grad u)`
/// * `d_t e = -alpha |u_t|^2 + div (grad u, u_t)`
///
/// All spatial terms are the lattice forms for which the semi-discrete flow
/// satisfies the laws exactly, so the residuals measure the time
/// discretization alone and shrink linearly with `t2 - t1`. Nodes and cells
/// touching the boundary are excluded (their entries are zero).
pub fn residual_fields(
    u1: &ComplexField,
    t1: f64,
    u2: &ComplexField,
    t2: f64,
    eps: f64,
    alpha: f64,
) -> Result<ResidualFields> {
    if !(t2 > t1) {
        return Err(VortexError::config("residual window needs t2 > t1"));
    }
    let g = &u1.grid;
    let (nx, ny) = (g.nx, g.ny);
    let h2 = g.h * g.h;
    let ie2 = 1.0 / (eps * eps);
    let inv_dt = 1.0 / (t2 - t1);
    let st = DynStencil::new(g);
    let a = &u1.u;
    let b = &u2.u;
    let c = mixed_coefficient(alpha);
    // F = lap u + u (1 - |u|^2) / eps^2 and u_t = c F at evolving nodes.
    let mut f = vec![Complex64::default(); a.len()];
    st.map_active(a, &mut f, |_, z, lap| lap + z * ((1.0 - z.norm_sqr()) * ie2));
    let ut: Vec<Complex64> = f.iter().map(|&x| c * x).collect();
    let window = |k: usize| {
        let (i, j) = g.ij(k);
        i > 0
            && j > 0
            && i + 1 < nx
            && j + 1 < ny
            && g.is_interior(k)
            && [k - 1, k + 1, k - nx, k + nx].iter().all(|&q| g.in_mask(q))
    };
    let lattice_e = |u: &[Complex64], k: usize| {
        let grad: f64 = [k - 1, k + 1, k - nx, k + nx].iter().map(|&q| (u[q] - u[k]).norm_sqr()).sum();
        let w = 1.0 - u[k].norm_sqr();
        0.25 * grad / h2 + 0.25 * w * w * ie2
    };
    let iu = |z: Complex64| Complex64::new(-z.im, z.re);
    let mut mass = vec![0.0; a.len()];
    let mut jac = vec![0.0; a.len()];
    let mut energy = vec![0.0; a.len()];
    mass.par_chunks_mut(nx).zip(jac.par_chunks_mut(nx)).zip(energy.par_chunks_mut(nx)).enumerate().for_each(
        |(j, ((rm, rj), re))| {
            for i in 0..nx {
                let k = g.idx(i, j);
                if window(k) {
                    let lap = f[k] - a[k] * ((1.0 - a[k].norm_sqr()) * ie2);
                    let m = 0.5 * (b[k].norm_sqr() - a[k].norm_sqr()) * inv_dt
                        - (dot(iu(a[k]), lap) - alpha * dot(iu(a[k]), ut[k]));
                    rm[i] = m;
                    let flux: f64 =
                        [k - 1, k + 1, k - nx, k + nx].iter().map(|&q| dot(a[q] - a[k], ut[q] + ut[k])).sum::<f64>()
                            * 0.5
                            / h2;
                    re[i] = (lattice_e(b, k) - lattice_e(a, k)) * inv_dt - (-alpha * ut[k].norm_sqr() + flux);
                }
                if i + 1 < nx && j + 1 < ny {
                    let corners = [k, k + 1, k + nx + 1, k + nx];
                    if corners.iter().all(|&q| st.is_active(q)) {
                        let cell_j = |u: &[Complex64]| -> f64 {
                            (0..4).map(|e| dot(iu(u[corners[e]]), u[corners[(e + 1) % 4]])).sum::<f64>() * 0.5 / h2
                        };
                        let stress: f64 = (0..4)
                            .map(|e| {
                                let (p, q) = (corners[e], corners[(e + 1) % 4]);
                                dot(f[p], a[q]) - dot(a[p], f[q]) - alpha * (dot(ut[p], a[q]) - dot(a[p], ut[q]))
                            })
                            .sum::<f64>()
                            * 0.5
                            / h2;
                        rj[i] = (cell_j(b) - cell_j(a)) * inv_dt - stress;
                    }
                }
            }
        },
    );
    let field = |values, staggering| ScalarField { grid: g.clone(), values, staggering };
    Ok(ResidualFields {
        mass: field(mass, Staggering::Node),
        jacobian: field(jac, Staggering::Cell),
        energy: field(energy, Staggering::Node),
    })
}

/// `h^2`-weighted L1 norms of the [`residual_fields`].
pub fn conservation_residuals(
    u1: &ComplexField,
    t1: f64,
    u2: &ComplexField,
    t2: f64,
    eps: f64,
    alpha: f64,
) -> Result<ConservationResiduals> {
    let r = residual_fields(u1, t1, u2, t2, eps, alpha)?;
    Ok(ConservationResiduals { mass: r.mass.l1(), jacobian: r.jacobian.l1(), energy: r.energy.l1() })
}
