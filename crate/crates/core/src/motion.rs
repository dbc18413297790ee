//! Limiting point-vortex laws
//!
//! * director flow: `4 pi q_n i a_n' + pi alpha0 a_n' + dW/da_n = 0`
//! * order-parameter flow: `2 pi d_n i a_n' + pi alpha0 a_n' + dW/da_n = 0`
//!
//! The plane is identified with C by `[x, y] <-> x + i y`, so multiplication
//! by `i` is a counterclockwise quarter turn. Along any solution
//! `dW/dt = -pi alpha0 sum |a_n'|^2`; the gyro term does no work.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, VortexError};
use crate::renorm::{grad_w, renormalized_energy, RenormalizedEnergyModel};
use crate::trajectory::{self, Event, EventKind, RunStatus, TrackedVortex, Trajectory};
use crate::vortex::{distance, rho_domain, Point, VortexSet};

pub const DEFAULT_R_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    /// Gyro coefficient `4 pi q_n`.
    Llg,
    /// Gyro coefficient `2 pi d_n`.
    Gl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    /// Positions, degrees and (for [`MotionKind::Llg`]) gyro charges `q_n`.
    pub vortices: VortexSet,
    pub alpha0: f64,
    pub model: RenormalizedEnergyModel,
    pub kind: MotionKind,
}

impl OdeState {
    pub fn new(vortices: VortexSet, alpha0: f64, model: RenormalizedEnergyModel, kind: MotionKind) -> Self {
        OdeState { vortices, alpha0, model, kind }
    }

    /// `pi (alpha0 + i gyro_n)`.
    fn coefficients(&self) -> Result<Vec<Complex64>> {
        self.vortices
            .entries
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let gyro = match self.kind {
                    MotionKind::Llg => 4.0 * v.q,
                    MotionKind::Gl => 2.0 * v.degree as f64,
                };
                let c = Complex64::new(PI * self.alpha0, PI * gyro);
                if c.norm_sqr() == 0.0 {
                    return Err(VortexError::DegenerateCoefficient(n));
                }
                Ok(c)
            })
            .collect()
    }

    pub fn rho(&self) -> Result<f64> {
        rho_domain(&self.vortices, self.model.domain().as_ref())
    }

    pub fn energy(&self) -> Result<f64> {
        renormalized_energy(&self.vortices, &self.model)
    }
}

/// Velocities `a_n' = -(dW/da_n) / (pi (alpha0 + i gyro_n))`.
pub fn ode_rhs(s: &OdeState) -> Result<Vec<Point>> {
    velocities(s, DEFAULT_R_MIN)
}

fn velocities(s: &OdeState, r_min: f64) -> Result<Vec<Point>> {
    let rho = s.rho()?;
    if rho <= r_min {
        return Err(VortexError::Collision { rho, r_min });
    }
    let coef = s.coefficients()?;
    let g = grad_w(&s.vortices, &s.model)?;
    Ok(g.iter()
        .zip(&coef)
        .map(|(g, c)| {
            let v = -Complex64::new(g[0], g[1]) / c;
            [v.re, v.im]
        })
        .collect())
}

/// Replacement of `q_n` for one vortex at a prescribed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QJump {
    pub time: f64,
    pub vortex: usize,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub t_end: f64,
    pub tol: f64,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    /// Upper bound on accepted steps, so that recorded tracks are finely sampled.
    #[serde(default)]
    pub max_step: Option<f64>,
    #[serde(default)]
    pub jumps: Vec<QJump>,
}

fn default_r_min() -> f64 {
    DEFAULT_R_MIN
}

impl OdeOptions {
    pub fn new(t_end: f64, tol: f64) -> Self {
        OdeOptions { t_end, tol, r_min: DEFAULT_R_MIN, max_step: None, jumps: Vec::new() }
    }
}

pub fn ode_integrate(s0: &OdeState, t_end: f64, tol: f64) -> Result<Trajectory> {
    ode_integrate_with(s0, &OdeOptions::new(t_end, tol))
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Packed state: positions followed by the dissipated amount
/// `D = pi alpha0 int sum |a_n'|^2`.
struct System {
    state: OdeState,
    r_min: f64,
}

impl System {
    fn eval(&mut self, y: &[f64]) -> Result<Vec<f64>> {
        for (n, e) in self.state.vortices.entries.iter_mut().enumerate() {
            e.position = [y[2 * n], y[2 * n + 1]];
        }
        let v = velocities(&self.state, self.r_min)?;
        let mut out: Vec<f64> = v.iter().flat_map(|p| [p[0], p[1]]).collect();
        out.push(PI * self.state.alpha0 * v.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>());
        Ok(out)
    }
}

fn record(traj: &mut Trajectory, s: &OdeState, t: f64, vel: &[Point], dissipated: f64) -> Result<()> {
    let w = s.energy()?;
    let tracked = s
        .vortices
        .entries
        .iter()
        .zip(vel)
        .enumerate()
        .map(|(n, (e, v))| TrackedVortex {
            id: n,
            position: e.position,
            degree: e.degree,
            q: e.q,
            velocity: Some(*v),
            jacobian_mass: None,
            vorticity_mass: None,
            window_radius: None,
        })
        .collect();
    traj.push(t, tracked, &[(trajectory::RENORMALIZED_ENERGY, w), (trajectory::DISSIPATED, dissipated)]);
    Ok(())
}

/// Adaptive Dormand-Prince integration from `s0`. Every accepted step is
/// recorded. At each jump time the integration restarts with the new `q`;
/// positions stay continuous. Reaching `rho <= r_min` ends the run with
/// status `Collision` (pairs) or `BoundaryEscape` (boundary).
pub fn ode_integrate_with(s0: &OdeState, opts: &OdeOptions) -> Result<Trajectory> {
    if !(1e-12..=1e-4).contains(&opts.tol) {
        return Err(VortexError::config(format!("tol = {:e} outside [1e-12, 1e-4]", opts.tol)));
    }
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() {
        return Err(VortexError::config("t_end must be positive"));
    }
    if !(s0.alpha0 >= 0.0) {
        return Err(VortexError::config("alpha0 must be non-negative"));
    }
    s0.vortices.validate()?;
    let mut jumps = opts.jumps.clone();
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    if let Some(j) = jumps.iter().find(|j| j.vortex >= s0.vortices.len()) {
        return Err(VortexError::config(format!("jump refers to missing vortex {}", j.vortex)));
    }
    let mut state = s0.clone();
    // A boundary map given by the vortices is pinned to the initial configuration.
    state.model.bc = state.model.bc.frozen(&s0.vortices);
    let n = state.vortices.len();
    let mut sys = System { state, r_min: opts.r_min };
    let mut y: Vec<f64> = s0.vortices.entries.iter().flat_map(|e| e.position).collect();
    y.push(0.0);
    let mut traj = Trajectory::default();
    let mut k1 = sys.eval(&y)?;
    let vel = |k: &[f64]| -> Vec<Point> { (0..n).map(|i| [k[2 * i], k[2 * i + 1]]).collect() };
    record(&mut traj, &sys.state, 0.0, &vel(&k1), 0.0)?;
    let mut t = 0.0;
    let h_max = opts.max_step.unwrap_or(f64::INFINITY).min(opts.t_end);
    let mut h = (0.01 * (opts.tol / 1e-6).powf(0.2)).min(h_max);
    let mut next_jump = 0;
    let scale = |a: f64, b: f64| opts.tol * a.abs().max(b.abs()).max(1.0);
    let mut k = vec![vec![0.0; y.len()]; 7];
    let mut stage = vec![0.0; y.len()];
    while t < opts.t_end * (1.0 - 1e-14) {
        let stop_at = jumps.get(next_jump).map_or(opts.t_end, |j| j.time.min(opts.t_end));
        let step = h.min(stop_at - t);
        let hits_stop = step >= stop_at - t;
        if step < 1e-13 * t.abs().max(1.0) && !hits_stop {
            traj.status = RunStatus::Collision;
            log::info!("ode step underflow at t = {t}");
            return Ok(traj);
        }
        k[0].clone_from(&k1);
        let mut failed = false;
        for s in 1..7 {
            for i in 0..y.len() {
                stage[i] = y[i] + step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            match sys.eval(&stage) {
                Ok(v) => k[s] = v,
                Err(VortexError::Collision { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let err = if failed {
            f64::INFINITY
        } else {
            (0..y.len())
                .map(|i| {
                    let e = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                    (e / scale(y[i], stage[i])).abs()
                })
                .fold(0.0, f64::max)
        };
        if !(err <= 1.0) {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h = step * fac;
            if h < 1e-13 * t.abs().max(1.0) {
                traj.status = RunStatus::Collision;
                log::info!("ode step underflow at t = {t}");
                return Ok(traj);
            }
            continue;
        }
        // FSAL: the last stage is the new state and its derivative.
        y.clone_from(&stage);
        k1.clone_from(&k[6]);
        t = if hits_stop { stop_at } else { t + step };
        let fac = if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = (step * fac).min(h_max);
        for (i, e) in sys.state.vortices.entries.iter_mut().enumerate() {
            e.position = [y[2 * i], y[2 * i + 1]];
        }
        record(&mut traj, &sys.state, t, &vel(&k1), y[2 * n])?;
        if let Some(status) = proximity(&sys.state, opts.r_min)? {
            traj.status = status;
            return Ok(traj);
        }
        while hits_stop && jumps.get(next_jump).is_some_and(|j| j.time <= t) {
            let j = jumps[next_jump];
            next_jump += 1;
            let e = &mut sys.state.vortices.entries[j.vortex];
            let dq = j.q - e.q;
            e.q = j.q;
            traj.events.push(Event {
                kind: EventKind::QJump,
                t_start: t,
                t_end: t,
                vortex: j.vortex,
                center: e.position,
                window_radius: 0.0,
                delta_q: dq,
                delta_omega: 4.0 * PI * dq,
                delta_energy: 0.0,
            });
            k1 = sys.eval(&y)?;
        }
    }
    traj.status = RunStatus::Completed;
    Ok(traj)
}

/// `Collision` or `BoundaryEscape` once `rho <= r_min`.
fn proximity(s: &OdeState, r_min: f64) -> Result<Option<RunStatus>> {
    let e = &s.vortices.entries;
    for (m, a) in e.iter().enumerate() {
        for b in &e[m + 1..] {
            if 0.5 * distance(a.position, b.position) <= r_min {
                return Ok(Some(RunStatus::Collision));
            }
        }
    }
    if s.rho()? <= r_min {
        return Ok(Some(RunStatus::BoundaryEscape));
    }
    Ok(None)
}

/// `max |dW/dt + pi alpha0 sum |a'|^2| / max(1, |dW/dt|)` over consecutive
/// recorded samples, using the integrated dissipation.
pub fn energy_decay_check(traj: &Trajectory) -> f64 {
    let (Some(w), Some(d)) = (traj.series(trajectory::RENORMALIZED_ENERGY), traj.series(trajectory::DISSIPATED)) else {
        return f64::NAN;
    };
    let mut worst: f64 = 0.0;
    for i in 1..traj.len() {
        let dt = traj.times[i] - traj.times[i - 1];
        if dt <= 0.0 {
            continue;
        }
        let dw = (w[i] - w[i - 1]) / dt;
        let dd = (d[i] - d[i - 1]) / dt;
        worst = worst.max((dw + dd).abs() / dw.abs().max(1.0));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryCondition, BoundaryData};
    use crate::renorm::WMethod;
    use crate::vortex::Vortex;

    fn disk_model() -> RenormalizedEnergyModel {
        RenormalizedEnergyModel::unit_disk(
            BoundaryCondition::dirichlet(BoundaryData::origin_vortex()),
            WMethod::ClosedForm,
        )
    }

    #[test]
    fn centered_vortex_is_at_rest() {
        let s = OdeState::new(VortexSet::new(vec![Vortex::gl([0.0, 0.0], 1)]), 1.0, disk_model(), MotionKind::Gl);
        let v = ode_rhs(&s).unwrap();
        assert!(v[0][0].abs() < 1e-15 && v[0][1].abs() < 1e-15);
    }

    #[test]
    fn dipole_translates_at_unit_over_r() {
        let r = 0.3;
        let v = VortexSet::new(vec![Vortex::gl([0.0, 0.0], 1), Vortex::gl([-r, 0.0], -1)]);
        let s = OdeState::new(v, 0.0, RenormalizedEnergyModel::free_plane(), MotionKind::Gl);
        let vel = ode_rhs(&s).unwrap();
        for p in vel {
            assert!(p[0].abs() < 1e-12);
            assert!((p[1] - 1.0 / r).abs() < 1e-6 / r);
        }
    }

    #[test]
    fn gl_and_llg_agree_bitwise_for_half_charges() {
        let v = VortexSet::new(vec![Vortex::new([0.2, 0.1], 1, 0.5), Vortex::new([-0.3, 0.25], -1, -0.5)]);
        let m = RenormalizedEnergyModel::unit_disk(BoundaryCondition::Neumann, WMethod::ClosedForm);
        let a = ode_rhs(&OdeState::new(v.clone(), 0.7, m.clone(), MotionKind::Llg)).unwrap();
        let b = ode_rhs(&OdeState::new(v, 0.7, m, MotionKind::Gl)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p[0].to_bits(), q[0].to_bits());
            assert_eq!(p[1].to_bits(), q[1].to_bits());
        }
    }

    #[test]
    fn degenerate_coefficient_is_rejected() {
        let v = VortexSet::new(vec![Vortex::new([0.2, 0.0], 1, 0.0)]);
        let s = OdeState::new(v, 0.0, disk_model(), MotionKind::Llg);
        assert!(matches!(ode_rhs(&s), Err(VortexError::DegenerateCoefficient(0))));
    }

    #[test]
    fn conservative_disk_vortex_keeps_its_radius() {
        let v = VortexSet::new(vec![Vortex::new([0.3, 0.0], 1, 0.5)]);
        let s = OdeState::new(v, 0.0, disk_model(), MotionKind::Llg);
        let g = grad_w(&s.vortices, &s.model).unwrap()[0];
        let vel = ode_rhs(&s).unwrap()[0];
        assert!((g[0] * vel[0] + g[1] * vel[1]).abs() < 1e-14);
        let tr = ode_integrate(&s, 1.0, 1e-10).unwrap();
        for vs in &tr.vortices {
            let p = vs[0].position;
            assert!((p[0].hypot(p[1]) - 0.3).abs() < 1e-8);
        }
    }

    #[test]
    fn jump_restarts_with_new_charge() {
        let v = VortexSet::new(vec![Vortex::new([0.3, 0.0], 1, 0.5)]);
        let s = OdeState::new(v, 0.5, disk_model(), MotionKind::Llg);
        let mut o = OdeOptions::new(0.4, 1e-9);
        o.jumps.push(QJump { time: 0.2, vortex: 0, q: -0.5 });
        let tr = ode_integrate_with(&s, &o).unwrap();
        assert!(tr.times.iter().any(|&t| t == 0.2));
        assert_eq!(tr.events.len(), 1);
        assert_eq!(tr.events[0].delta_q, -1.0);
        let last = &tr.vortices.last().unwrap()[0];
        assert_eq!(last.q, -0.5);
        assert!(tr.status.is_completed());
    }

    #[test]
    fn collision_ends_the_run() {
        let v = VortexSet::new(vec![Vortex::gl([0.05, 0.0], 1), Vortex::gl([-0.05, 0.0], -1)]);
        let s = OdeState::new(v, 1.0, RenormalizedEnergyModel::free_plane(), MotionKind::Gl);
        let mut o = OdeOptions::new(1.0, 1e-8);
        o.r_min = 0.01;
        let tr = ode_integrate_with(&s, &o).unwrap();
        assert_eq!(tr.status, RunStatus::Collision);
        assert!(tr.end_time() < 1.0);
        assert!(energy_decay_check(&tr) < 1e-5);
    }

    #[test]
    fn tolerance_out_of_range() {
        let s = OdeState::new(VortexSet::new(vec![Vortex::gl([0.1, 0.0], 1)]), 1.0, disk_model(), MotionKind::Gl);
        assert!(ode_integrate(&s, 1.0, 1e-3).is_err());
    }
}
