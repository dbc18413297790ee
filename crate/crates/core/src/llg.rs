//! Landau-Lifshitz-Gilbert flow of the thin-film director energy.
//!
//! The equation is integrated in its explicit Landau-Lifshitz form
//! `(1 + alpha^2) m_t = -m x f - alpha m x (m x f)` with the effective field
//! `f = lap m + |grad m|^2 m - (m3 e3 - m3^2 m) / eps^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{planar_jacobian, read_vortices, TrackOptions, VortexReading};
use crate::error::{Result, VortexError};
use crate::field::{DirectorField, FieldSnapshot};
use crate::grid::Grid2D;
use crate::stencil::{gradient_energy, node_sum, DynStencil};
use crate::stepper::{self, Dynamics, Flow, Scheme, Settings, RK4_REACH};
use crate::trajectory::{self, match_nearest, Event, EventKind, RunStatus, TrackedVortex, Trajectory};
use crate::vec3::{Vec3, E3};
use crate::vortex::{distance, EpsilonSchedule, Point};

/// Bubbling fires when a vorticity mass departs from its reference by this
/// fraction of `4 pi`, and re-arms once it is back within `BUBBLE_REARM`.
pub const BUBBLE_FIRE: f64 = 0.8;
pub const BUBBLE_REARM: f64 = 0.2;
/// Default collision / boundary-escape distance in units of epsilon.
pub const R_MIN_EPS: f64 = 8.0;

fn default_scale() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

/// Parameters of a PDE run. The boundary condition is the one carried by the
/// grid of the initial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLGConfig {
    pub epsilon: f64,
    /// `alpha_eps = alpha0 / log(1/eps)`.
    pub alpha0: f64,
    /// Fixed step; `None` selects [`dt_auto`] times `dt_scale`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_scale")]
    pub dt_scale: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub snapshot_stride: usize,
    /// Steps between energy checks (clamped to the snapshot stride).
    #[serde(default = "default_stride")]
    pub check_stride: usize,
    /// Collision and boundary-escape distance; default `8 eps`.
    #[serde(default)]
    pub r_min: Option<f64>,
}

impl LLGConfig {
    pub fn new(epsilon: f64, alpha0: f64, t_end: f64) -> Self {
        LLGConfig {
            epsilon,
            alpha0,
            dt: None,
            dt_scale: 1.0,
            t_end,
            scheme: Scheme::ExplicitLlRk4,
            snapshot_stride: 100,
            check_stride: 1,
            r_min: None,
        }
    }

    pub fn schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.epsilon, self.alpha0)
    }

    pub fn r_min(&self) -> f64 {
        self.r_min.unwrap_or(R_MIN_EPS * self.epsilon)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.schedule()?;
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(VortexError::config(format!("t_end = {} must be positive", self.t_end)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(VortexError::config(format!("dt = {dt} must be positive")));
            }
        }
        if !(self.dt_scale > 0.0 && self.dt_scale <= 1.0) {
            return Err(VortexError::config("dt_scale must lie in (0, 1]"));
        }
        if self.snapshot_stride == 0 {
            return Err(VortexError::config("snapshot_stride must be at least 1"));
        }
        Ok(())
    }
}

/// RK4-stable step for a right-hand side of size `gain (lap + kappa / eps^2)`.
/// The split scheme integrates the local term exactly, so `kappa` drops out.
pub(crate) fn stable_dt(h: f64, eps: f64, gain: f64, kappa: f64, scheme: Scheme) -> f64 {
    let local = match scheme {
        Scheme::ExplicitLlRk4 => kappa / (eps * eps),
        Scheme::Imex => 0.0,
    };
    RK4_REACH / (gain * (8.0 / (h * h) + local))
}

/// Automatic step: inside the RK4 stability region of the linearized
/// operator, whose spectral radius is `(8/h^2 + 1/eps^2) / sqrt(1 + alpha^2)`.
pub fn dt_auto(h: f64, eps: f64, alpha: f64, scheme: Scheme) -> f64 {
    stable_dt(h, eps, 1.0 / (1.0 + alpha * alpha).sqrt(), 1.0, scheme)
}

/// `(-m x f - alpha m x (m x f)) / (1 + alpha^2)` for an arbitrary `f`.
#[inline]
fn ll(m: Vec3, f: Vec3, alpha: f64) -> Vec3 {
    let mf = m.cross(f);
    let mmf = m * m.dot(f) - f * m.norm_sq();
    (mf * -1.0 - mmf * alpha) * (1.0 / (1.0 + alpha * alpha))
}

struct LlgDynamics {
    grid: Arc<Grid2D>,
    stencil: DynStencil,
    eps: f64,
    alpha: f64,
}

impl LlgDynamics {
    fn new(grid: &Arc<Grid2D>, eps: f64, alpha: f64) -> Self {
        LlgDynamics { grid: grid.clone(), stencil: DynStencil::new(grid), eps, alpha }
    }
}

impl Dynamics for LlgDynamics {
    type T = Vec3;

    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn norm_sq(v: Vec3) -> f64 {
        v.norm_sq()
    }

    fn rhs(&self, u: &[Vec3], out: &mut [Vec3]) {
        let (alpha, ie2) = (self.alpha, 1.0 / (self.eps * self.eps));
        self.stencil.map_active(u, out, |_, m, lap| ll(m, lap - E3 * (m.z() * ie2), alpha));
    }

    fn rhs_split(&self, u: &[Vec3], out: &mut [Vec3]) {
        let alpha = self.alpha;
        self.stencil.map_active(u, out, |_, m, lap| ll(m, lap, alpha));
    }

    fn local_flow(&self, u: &mut [Vec3], dt: f64) {
        let st = &self.stencil;
        let (alpha, eps) = (self.alpha, self.eps);
        u.par_iter_mut().enumerate().for_each(|(k, m)| {
            if st.is_active(k) {
                *m = anisotropy_flow(*m, eps, alpha, dt);
            }
        });
    }

    fn project(&self, u: &mut [Vec3]) {
        let st = &self.stencil;
        u.par_iter_mut().enumerate().for_each(|(k, m)| {
            if st.is_active(k) {
                *m = *m * (1.0 / m.norm());
            }
        });
    }

    fn energy(&self, u: &[Vec3]) -> f64 {
        let ie2 = 0.5 / (self.eps * self.eps);
        gradient_energy(&self.grid, u, |v: Vec3| v.norm_sq()) + node_sum(&self.grid, |k| u[k].z() * u[k].z() * ie2)
    }

    fn snapshot(&self, u: &[Vec3], t: f64) -> FieldSnapshot {
        FieldSnapshot::from_director(&DirectorField { grid: self.grid.clone(), m: u.to_vec() }, t, self.eps)
    }
}

/// Exact flow of `m_t = LL(m, -m3 e3 / eps^2)` for a unit vector: the polar
/// angle obeys `tan th(t) = tan th(0) e^{k t}` with `k = alpha / (eps^2 (1 + alpha^2))`
/// and the azimuth turns at rate `-cos th / (eps^2 (1 + alpha^2))`.
pub(crate) fn anisotropy_flow(m: Vec3, eps: f64, alpha: f64, dt: f64) -> Vec3 {
    let c = m.z();
    let s = m.x().hypot(m.y());
    if s == 0.0 {
        return m;
    }
    let rate = 1.0 / (eps * eps * (1.0 + alpha * alpha));
    let k = alpha * rate;
    let grow = (k * dt).exp();
    let norm = (s * s * grow * grow + c * c).sqrt();
    // int_0^dt cos th(tau) dtau
    let int_cos = if c == 0.0 {
        0.0
    } else if k == 0.0 {
        c * dt
    } else {
        let x = s / c.abs();
        c.signum() * ((1.0 / x).asinh() - (1.0 / (x * grow)).asinh()) / k
    };
    let phi = -rate * int_cos;
    let (sp, cp) = phi.sin_cos();
    let scale = grow / norm;
    Vec3::new(scale * (cp * m.x() - sp * m.y()), scale * (sp * m.x() + cp * m.y()), c / norm)
}

/// Tangential effective field `f_eps(m)` at evolving nodes (zero elsewhere).
/// The lattice `|grad m|^2` is taken as `-<lap_h m, m>`, which makes `f` exactly
/// tangent for unit `m`.
pub fn effective_field(m: &DirectorField, eps: f64) -> Vec<Vec3> {
    let st = DynStencil::new(&m.grid);
    let ie2 = 1.0 / (eps * eps);
    let mut out = vec![Vec3::ZERO; m.m.len()];
    st.map_active(&m.m, &mut out, |_, v, lap| {
        let z = v.z();
        lap - v * lap.dot(v) - (E3 * z - v * (z * z)) * ie2
    });
    out
}

/// Explicit Landau-Lifshitz right-hand side; zero at frozen nodes.
pub fn llg_rhs(m: &DirectorField, eps: f64, alpha: f64) -> Vec<Vec3> {
    let f = effective_field(m, eps);
    m.m.iter().zip(&f).map(|(&v, &fv)| if fv == Vec3::ZERO { Vec3::ZERO } else { ll(v, fv, alpha) }).collect()
}

/// Identity-stable vortex tracking across snapshots.
pub(crate) struct Tracker {
    opts: TrackOptions,
    prev: Vec<(usize, Point)>,
    initial: Option<usize>,
    r_min: f64,
}

pub(crate) enum TrackState {
    Ok(Vec<(usize, VortexReading)>),
    Stop(Vec<(usize, VortexReading)>, RunStatus),
}

impl Tracker {
    pub(crate) fn new(g: &Grid2D, eps: f64, r_min: f64) -> Self {
        Tracker { opts: TrackOptions::for_grid(g, eps), prev: Vec::new(), initial: None, r_min }
    }

    pub(crate) fn update(&mut self, g: &Grid2D, readings: Vec<VortexReading>) -> TrackState {
        let positions: Vec<Point> = readings.iter().map(|r| r.position).collect();
        let Some(initial) = self.initial else {
            self.initial = Some(readings.len());
            self.prev = positions.iter().copied().enumerate().collect();
            return self.classify(g, readings.into_iter().enumerate().collect());
        };
        let prev_pos: Vec<Point> = self.prev.iter().map(|p| p.1).collect();
        match match_nearest(&prev_pos, &positions).filter(|_| readings.len() == initial) {
            Some(assign) => {
                let tagged: Vec<(usize, VortexReading)> =
                    readings.into_iter().zip(assign).map(|(r, i)| (self.prev[i].0, r)).collect();
                self.prev = tagged.iter().map(|(id, r)| (*id, r.position)).collect();
                self.classify(g, tagged)
            }
            None => {
                let tagged = readings.into_iter().enumerate().map(|(i, r)| (initial + i, r)).collect();
                TrackState::Stop(tagged, RunStatus::TrackLost)
            }
        }
    }

    fn classify(&self, g: &Grid2D, tagged: Vec<(usize, VortexReading)>) -> TrackState {
        if tagged.iter().any(|(_, r)| g.domain.boundary_distance(r.position) <= self.r_min) {
            return TrackState::Stop(tagged, RunStatus::BoundaryEscape);
        }
        for a in 0..tagged.len() {
            for b in a + 1..tagged.len() {
                if distance(tagged[a].1.position, tagged[b].1.position) <= self.r_min {
                    return TrackState::Stop(tagged, RunStatus::Collision);
                }
            }
        }
        TrackState::Ok(tagged)
    }

    pub(crate) fn options(&self) -> TrackOptions {
        self.opts
    }
}

pub(crate) fn tracked(tagged: &[(usize, VortexReading)], director: bool) -> Vec<TrackedVortex> {
    let mut out: Vec<TrackedVortex> = tagged
        .iter()
        .map(|(id, r)| TrackedVortex {
            id: *id,
            position: r.position,
            degree: r.degree,
            q: if director { r.q_hat.unwrap_or(0.5 * r.degree as f64) } else { 0.5 * r.degree as f64 },
            velocity: None,
            jacobian_mass: Some(r.jacobian_mass),
            vorticity_mass: r.vorticity_mass,
            window_radius: Some(r.window_radius),
        })
        .collect();
    out.sort_by_key(|v| v.id);
    out
}

pub(crate) fn settings(t_end: f64, dt: f64, scheme: Scheme, snapshot_stride: usize, check_stride: usize) -> Settings {
    Settings {
        t_end,
        dt,
        scheme,
        snapshot_stride,
        check_stride,
        increase_tol: 1e-6,
        balance_tol: 1e-6,
        max_reductions: 5,
    }
}

pub fn llg_run(config: &LLGConfig, m0: &DirectorField) -> Result<Trajectory> {
    llg_run_with(config, m0, |_| Ok(()))
}

/// As [`llg_run`], handing every recorded snapshot to `sink`.
pub fn llg_run_with(
    config: &LLGConfig,
    m0: &DirectorField,
    mut sink: impl FnMut(&FieldSnapshot) -> Result<()>,
) -> Result<Trajectory> {
    config.validate()?;
    let dev = m0.max_norm_deviation();
    if dev > 1e-10 {
        return Err(VortexError::config(format!("initial field is not unit (max deviation {dev:e})")));
    }
    let sched = config.schedule()?;
    let alpha = sched.alpha();
    let g = m0.grid.clone();
    let dy = LlgDynamics::new(&g, config.epsilon, alpha);
    let dt = config.dt.unwrap_or_else(|| config.dt_scale * dt_auto(g.h, config.epsilon, alpha, config.scheme));
    let mut tracker = Tracker::new(&g, config.epsilon, config.r_min());
    let mut traj = Trajectory::default();
    let set = settings(config.t_end, dt, config.scheme, config.snapshot_stride, config.check_stride);
    let mut status = RunStatus::Completed;
    log::info!("llg run: eps {} alpha {alpha:.4} dt {dt:.3e} t_end {}", config.epsilon, config.t_end);
    let out = stepper::integrate(&dy, m0.m.clone(), set, |s| {
        let m = DirectorField { grid: g.clone(), m: s.u.to_vec() };
        let readings = read_vortices(&m, tracker.options());
        let (tagged, stop) = match tracker.update(&g, readings) {
            TrackState::Ok(t) => (t, None),
            TrackState::Stop(t, st) => (t, Some(st)),
        };
        let jac = planar_jacobian(&m.planar()).total();
        traj.push(
            s.t,
            tracked(&tagged, true),
            &[
                (trajectory::ENERGY, s.energy),
                (trajectory::DISSIPATED, s.dissipated),
                (trajectory::JACOBIAN_TOTAL, jac),
                (trajectory::UNIT_DEVIATION, m.max_norm_deviation()),
                (trajectory::TIME_STEP, s.dt),
            ],
        );
        sink(&dy.snapshot(s.u, s.t))?;
        match stop {
            Some(st) => {
                log::info!("llg run stopped at t = {}: {st:?}", s.t);
                status = st;
                Ok(Flow::Stop)
            }
            _ => Ok(Flow::Continue),
        }
    })?;
    log::info!("llg run: {} steps to t = {:.4}, {} step reductions", out.steps, out.t, out.reductions);
    traj.status = status;
    traj.events = detect_bubbling(&traj);
    Ok(traj)
}

/// Vorticity-mass jumps of at least `0.8 * 4 pi` along a continuous track.
///
/// Each vortex keeps a reference mass; an event fires once the window mass
/// departs from it by `BUBBLE_FIRE * 4 pi` and the reference then moves by the
/// rounded multiple of `4 pi`. The bracket starts at the last sample within
/// `BUBBLE_REARM * 4 pi` of the old reference.
pub fn detect_bubbling(traj: &Trajectory) -> Vec<Event> {
    let quantum = 4.0 * PI;
    let energy = traj.series(trajectory::ENERGY);
    let mut events = Vec::new();
    for id in traj.ids() {
        let samples: Vec<(usize, &TrackedVortex)> = traj
            .vortices
            .iter()
            .enumerate()
            .filter_map(|(n, vs)| vs.iter().find(|v| v.id == id).map(|v| (n, v)))
            .filter(|(_, v)| v.vorticity_mass.is_some())
            .collect();
        let Some(&(_, first)) = samples.first() else { continue };
        let mut reference = first.vorticity_mass.unwrap_or(0.0);
        let mut calm = samples[0].0;
        let mut calm_pos = first.position;
        for &(n, v) in &samples {
            let w = v.vorticity_mass.unwrap_or(reference);
            let dev = w - reference;
            if dev.abs() < BUBBLE_REARM * quantum {
                calm = n;
                calm_pos = v.position;
                continue;
            }
            if dev.abs() < BUBBLE_FIRE * quantum {
                continue;
            }
            let jumps = (dev / quantum).round();
            let radius = v.window_radius.unwrap_or(f64::INFINITY);
            if distance(v.position, calm_pos) < radius {
                let de = energy.map(|e| e[n] - e[calm]).unwrap_or(f64::NAN);
                events.push(Event {
                    kind: EventKind::Bubbling,
                    t_start: traj.times[calm],
                    t_end: traj.times[n],
                    vortex: id,
                    center: v.position,
                    window_radius: radius,
                    delta_q: jumps,
                    delta_omega: dev,
                    delta_energy: de,
                });
            }
            reference += jumps * quantum;
            calm = n;
            calm_pos = v.position;
        }
    }
    events.sort_by(|a, b| a.t_end.total_cmp(&b.t_end));
    events
}
