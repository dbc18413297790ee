//! Scenarios: seed, simulate, track, integrate the matching point-vortex law
//! and compare, for every epsilon of a sweep.
//!
//! Output layout under the scenario directory:
//!
//! ```text
//! scenario.json
//! report.json
//! eps_<k>/pde_tracks.csv  pde_series.csv  pde_events.json
//! eps_<k>/ode_tracks.csv  ode_series.csv  ode_events.json
//! eps_<k>/fields/t_<n>.fld (+ .fld.json)      when save_fields is set
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use std::{f64::consts::PI, fs};

use serde::{Deserialize, Serialize};

use crate::diagnostics::OrderParameter;
use crate::error::{Result, VortexError};
use crate::field::FieldSnapshot;
use crate::glmixed::{self, gl_run_with, GLConfig};
use crate::grid::{make_grid, BoundaryCondition, BoundaryData, Domain, Grid2D};
use crate::llg::{self, llg_run_with, LLGConfig};
use crate::motion::{ode_integrate_with, MotionKind, OdeOptions, OdeState, QJump};
use crate::radial::{self, RadialKind};
use crate::renorm::{renormalized_energy, RenormalizedEnergyModel, WMethod};
use crate::seed::{perturb_gl, perturb_llg, seed_gl_field, seed_vortex_field_with, CoreProfile, Perturbation};
use crate::stepper::Scheme;
use crate::trajectory::{self, interpolate, match_nearest, Event, EventKind, RunStatus, Trajectory};
use crate::vortex::{distance, EpsilonSchedule, Point, Vortex, VortexSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Llg,
    Gl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVortex {
    pub position: Point,
    pub degree: i32,
    /// Sign of `m_3` at the core; ignored for the order-parameter flow.
    #[serde(default = "default_polarity")]
    pub polarity: i32,
    #[serde(default)]
    pub core: CoreProfile,
}

fn default_polarity() -> i32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub model: Model,
    pub domain: Domain,
    pub bc: BoundaryCondition,
    pub vortices: Vec<ScenarioVortex>,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    /// Nodes per side, one per epsilon.
    pub grid_sizes: Vec<usize>,
    pub alpha0: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Time between recorded snapshots; `None` means every 100 steps.
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    /// Snapshot interval in units of `eps^2`, overriding `snapshot_interval`.
    #[serde(default)]
    pub snapshot_eps2: Option<f64>,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
    #[serde(default)]
    pub save_fields: bool,
}

fn default_ode_tol() -> f64 {
    1e-10
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(VortexError::config(format!(
                "scenario schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.vortices.is_empty() {
            return Err(VortexError::EmptyVortexSet);
        }
        if self.epsilons.is_empty() || self.epsilons.len() != self.grid_sizes.len() {
            return Err(VortexError::config("need one grid size per epsilon"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(VortexError::config("epsilon list must be strictly decreasing"));
        }
        for (&eps, &n) in self.epsilons.iter().zip(&self.grid_sizes) {
            EpsilonSchedule::new(eps, self.alpha0)?;
            let h = self.grid(n)?.h;
            if h > 0.25 * eps * (1.0 + 1e-9) {
                return Err(VortexError::config(format!("grid {n} has h = {h:.5} > eps/4 = {:.5}", 0.25 * eps)));
            }
        }
        if !(self.t_end > 0.0) {
            return Err(VortexError::config("t_end must be positive"));
        }
        if self.vortices.iter().any(|v| v.polarity.abs() != 1) {
            return Err(VortexError::config("polarity must be +1 or -1"));
        }
        Ok(())
    }

    pub fn vortex_set(&self) -> VortexSet {
        VortexSet::new(
            self.vortices
                .iter()
                .map(|v| {
                    let q = match self.model {
                        Model::Llg => 0.5 * (v.polarity * v.degree) as f64,
                        Model::Gl => 0.5 * v.degree as f64,
                    };
                    Vortex::new(v.position, v.degree, q)
                })
                .collect(),
        )
    }

    /// Boundary condition with `FromVortices` data pinned to the initial configuration.
    pub fn frozen_bc(&self) -> BoundaryCondition {
        self.bc.frozen(&self.vortex_set())
    }

    fn grid(&self, n: usize) -> Result<Arc<Grid2D>> {
        make_grid(n, n, self.domain.clone(), self.frozen_bc())
    }

    pub fn energy_model(&self) -> Result<RenormalizedEnergyModel> {
        match self.domain {
            Domain::UnitDisk => Ok(RenormalizedEnergyModel::unit_disk(self.frozen_bc(), WMethod::ClosedForm)),
            Domain::Rectangle { min, max } => Ok(RenormalizedEnergyModel {
                domain: crate::renorm::ModelDomain::Rectangle { min, max },
                bc: self.frozen_bc(),
                method: WMethod::NumericLimit,
                resolution: 129,
            }),
        }
    }

    fn stride(&self, eps: f64, dt: f64) -> usize {
        let interval = self.snapshot_eps2.map(|c| c * eps * eps).or(self.snapshot_interval);
        match interval {
            Some(t) => ((t / dt).round() as usize).max(1),
            None => 100,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(&fs::read_to_string(path)?)?;
        sc.validate()?;
        Ok(sc)
    }
}

fn disk_vortex(position: Point, polarity: i32, core: CoreProfile) -> ScenarioVortex {
    ScenarioVortex { position, degree: 1, polarity, core }
}

/// Built-in reference scenarios, all on the unit disk with `g = e^{i phi}`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let base = Scenario {
        schema_version: SCHEMA_VERSION,
        name: "gl-disk-motion".into(),
        model: Model::Gl,
        domain: Domain::UnitDisk,
        bc: BoundaryCondition::dirichlet(BoundaryData::origin_vortex()),
        vortices: vec![disk_vortex([0.24, 0.0], 1, CoreProfile::Cap)],
        epsilons: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        grid_sizes: vec![129, 257, 513],
        alpha0: 1.0,
        t_end: 0.1,
        scheme: Scheme::ExplicitLlRk4,
        snapshot_interval: Some(0.002),
        snapshot_eps2: None,
        perturbation: None,
        seed: 7,
        ode_tol: 1e-10,
        save_fields: false,
    };
    let excess = Scenario {
        name: "gl-disk-motion-excess".into(),
        perturbation: Some(Perturbation { target: 1.0, wavenumber: 2.0 * PI }),
        ..base.clone()
    };
    let gyro = |name: &str, polarity: i32| Scenario {
        name: name.into(),
        model: Model::Llg,
        vortices: vec![disk_vortex([0.24, 0.0], polarity, CoreProfile::Cap)],
        epsilons: vec![1.0 / 16.0],
        grid_sizes: vec![129],
        t_end: 0.25,
        snapshot_interval: Some(0.005),
        ..base.clone()
    };
    let bubbling = Scenario {
        name: "llg-bubbling".into(),
        vortices: vec![disk_vortex([0.24, 0.0], 1, CoreProfile::Bubble)],
        snapshot_interval: None,
        snapshot_eps2: Some(1.0),
        ..gyro("", 1)
    };
    vec![base.clone(), excess, gyro("llg-gyro-plus", 1), gyro("llg-gyro-minus", -1), bubbling]
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

/// Distances between matched PDE and ODE tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexDistance {
    pub pde_id: usize,
    pub ode_id: usize,
    pub sup: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackComparison {
    pub per_vortex: Vec<VortexDistance>,
    /// Largest per-vortex sup distance.
    pub sup: f64,
    /// Root of the summed squared per-vortex L2 distances.
    pub l2: f64,
    /// Time interval on which both tracks exist.
    pub overlap: (f64, f64),
    /// Two PDE tracks came within `2 r_min`, so identities may have swapped.
    pub swap_suspected: bool,
}

/// Matches vortices by nearest neighbour at `t = 0` and measures the sup and
/// L2 time distances on the common interval. The coarser trajectory is
/// interpolated linearly onto the sample times of the finer one.
pub fn compare_tracks(pde: &Trajectory, ode: &Trajectory, r_min: f64) -> Result<TrackComparison> {
    let (Some(p0), Some(o0)) = (pde.vortices.first(), ode.vortices.first()) else {
        return Err(VortexError::config("both trajectories need samples"));
    };
    if p0.len() != o0.len() || p0.is_empty() {
        return Err(VortexError::config(format!("vortex counts differ at t = 0: {} vs {}", p0.len(), o0.len())));
    }
    let o_pos: Vec<Point> = o0.iter().map(|v| v.position).collect();
    let p_pos: Vec<Point> = p0.iter().map(|v| v.position).collect();
    let assign = match_nearest(&o_pos, &p_pos).ok_or_else(|| VortexError::config("cannot match vortices at t = 0"))?;
    let t0 = pde.times[0].max(ode.times[0]);
    let t1 = pde.end_time().min(ode.end_time());
    let fine = if count_in(&pde.times, t0, t1) >= count_in(&ode.times, t0, t1) { &pde.times } else { &ode.times };
    let times: Vec<f64> = fine.iter().copied().filter(|&t| t >= t0 && t <= t1).collect();
    let mut per_vortex = Vec::new();
    for (j, pv) in p0.iter().enumerate() {
        let ov = &o0[assign[j]];
        let pt = pde.track(pv.id);
        let ot = ode.track(ov.id);
        let mut sup: f64 = 0.0;
        let mut sq = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for &t in &times {
            let (Some(a), Some(b)) = (interpolate(&pt, t), interpolate(&ot, t)) else { continue };
            let d = distance(a, b);
            sup = sup.max(d);
            if let Some((tp, dp)) = prev {
                sq += 0.5 * (t - tp) * (dp * dp + d * d);
            }
            prev = Some((t, d));
        }
        per_vortex.push(VortexDistance { pde_id: pv.id, ode_id: ov.id, sup, l2: sq.sqrt() });
    }
    let mut swap = false;
    for vs in &pde.vortices {
        for a in 0..vs.len() {
            for b in a + 1..vs.len() {
                swap |= distance(vs[a].position, vs[b].position) < 2.0 * r_min;
            }
        }
    }
    Ok(TrackComparison {
        sup: per_vortex.iter().map(|d| d.sup).fold(0.0, f64::max),
        l2: per_vortex.iter().map(|d| d.l2 * d.l2).sum::<f64>().sqrt(),
        per_vortex,
        overlap: (t0, t1),
        swap_suspected: swap,
    })
}

fn count_in(times: &[f64], t0: f64, t1: f64) -> usize {
    times.iter().filter(|&&t| t >= t0 && t <= t1).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAlignment {
    pub pde_event: Event,
    pub ode_jump: Option<QJump>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub grid: usize,
    pub h: f64,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Injected energy surplus and the resulting amplitude, if perturbed.
    pub injected: Option<(f64, f64)>,
    pub comparison: Option<TrackComparison>,
    /// Comparison against the ODE without the q-jumps, when events occurred.
    pub comparison_without_jumps: Option<TrackComparison>,
    /// `(t, E - N (pi log(1/eps) + gamma) - W(a_PDE(t)))` per snapshot.
    pub excess_energy: Vec<(f64, f64)>,
    pub events: Vec<EventAlignment>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub results: Vec<EpsilonResult>,
    /// Sup distances strictly decrease along the epsilon list; `None` unless
    /// at least two runs produced comparisons.
    pub monotone: Option<bool>,
}

impl ComparisonReport {
    pub fn sup_distances(&self) -> Vec<Option<f64>> {
        self.results.iter().map(|r| r.comparison.as_ref().map(|c| c.sup)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.results.iter().all(|r| r.error.is_none())
    }
}

pub fn eps_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("eps_{index}"))
}

/// Runs every epsilon of the sweep. Sub-run failures are recorded in the
/// report; only configuration errors abort.
pub fn run_scenario(sc: &Scenario, out: Option<&Path>) -> Result<ComparisonReport> {
    sc.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(sc)?)?;
    }
    let mut results = Vec::new();
    for (i, (&eps, &n)) in sc.epsilons.iter().zip(&sc.grid_sizes).enumerate() {
        let dir = out.map(|d| eps_dir(d, i));
        let start = Instant::now();
        let h = sc.grid(n)?.h;
        let mut res = match run_one(sc, eps, n, dir.as_deref()) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{} at eps = {eps}: {e}", sc.name);
                EpsilonResult {
                    epsilon: eps,
                    grid: n,
                    h,
                    status: RunStatus::Failed(e.to_string()),
                    error: Some(e.to_string()),
                    injected: None,
                    comparison: None,
                    comparison_without_jumps: None,
                    excess_energy: Vec::new(),
                    events: Vec::new(),
                    runtime_seconds: 0.0,
                }
            }
        };
        res.runtime_seconds = start.elapsed().as_secs_f64();
        log::info!(
            "{} eps = {eps}: sup distance {:?} in {:.1} s",
            sc.name,
            res.comparison.as_ref().map(|c| c.sup),
            res.runtime_seconds
        );
        results.push(res);
    }
    let sups: Vec<f64> = results.iter().filter_map(|r| r.comparison.as_ref().map(|c| c.sup)).collect();
    let monotone = (sups.len() >= 2 && sups.len() == results.len()).then(|| sups.windows(2).all(|w| w[1] < w[0]));
    let report = ComparisonReport { scenario: sc.name.clone(), results, monotone };
    if let Some(dir) = out {
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Writes each snapshot to `dir/fields/t_NNNNNN.fld` when `save` is set.
pub fn field_sink(dir: Option<&Path>, save: bool) -> Result<impl FnMut(&FieldSnapshot) -> Result<()>> {
    let fields = match dir {
        Some(d) if save => {
            let f = d.join("fields");
            fs::create_dir_all(&f)?;
            Some(f)
        }
        _ => None,
    };
    let mut count = 0usize;
    Ok(move |s: &FieldSnapshot| {
        if let Some(f) = &fields {
            s.write(&f.join(format!("t_{count:06}")))?;
        }
        count += 1;
        Ok(())
    })
}

fn run_one(sc: &Scenario, eps: f64, n: usize, dir: Option<&Path>) -> Result<EpsilonResult> {
    let grid = sc.grid(n)?;
    let v0 = sc.vortex_set();
    let model = sc.energy_model()?;
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let sink = field_sink(dir, sc.save_fields)?;
    let (pde, injected, kind, radial_kind) = match sc.model {
        Model::Gl => {
            let mut u = seed_gl_field(&grid, &v0, eps)?;
            let mut injected = None;
            if let Some(p) = &sc.perturbation {
                let (pu, amp) = perturb_gl(&u, eps, p, sc.seed)?;
                u = pu;
                injected = Some((p.target, amp));
            }
            let mut cfg = GLConfig::new(eps, sc.alpha0, sc.t_end);
            cfg.scheme = sc.scheme;
            let c = cfg.coefficient()?;
            let stride = sc.stride(eps, glmixed::dt_auto(grid.h, eps, c, sc.scheme));
            cfg.snapshot_stride = stride;
            cfg.check_stride = stride;
            (gl_run_with(&cfg, &u, sink)?, injected, MotionKind::Gl, u.radial_kind())
        }
        Model::Llg => {
            let polarity: Vec<i32> = sc.vortices.iter().map(|v| v.polarity).collect();
            let cores: Vec<CoreProfile> = sc.vortices.iter().map(|v| v.core).collect();
            let mut m = seed_vortex_field_with(&grid, &v0, eps, &polarity, &cores)?;
            let mut injected = None;
            if let Some(p) = &sc.perturbation {
                let (pm, amp) = perturb_llg(&m, eps, p, sc.seed)?;
                m = pm;
                injected = Some((p.target, amp));
            }
            let mut cfg = LLGConfig::new(eps, sc.alpha0, sc.t_end);
            cfg.scheme = sc.scheme;
            let alpha = cfg.schedule()?.alpha();
            let stride = sc.stride(eps, llg::dt_auto(grid.h, eps, alpha, sc.scheme));
            cfg.snapshot_stride = stride;
            cfg.check_stride = stride;
            (llg_run_with(&cfg, &m, sink)?, injected, MotionKind::Llg, m.radial_kind())
        }
    };
    if pde.is_empty() || pde.vortices[0].is_empty() {
        return Err(VortexError::Numerical { time: 0.0, detail: "no vortex found in the initial field".into() });
    }
    // ODE from the seeded positions; jumps at the bracket midpoints of the PDE events.
    let state = OdeState::new(v0.clone(), sc.alpha0, model.clone(), kind);
    let mut opts = OdeOptions::new(sc.t_end, sc.ode_tol);
    opts.max_step = Some(sc.t_end / 200.0);
    let p_pos: Vec<Point> = pde.vortices[0].iter().map(|v| v.position).collect();
    let assign =
        match_nearest(&p_pos, &v0.positions()).ok_or_else(|| VortexError::config("cannot match seeded vortices"))?;
    let mut jumps = Vec::new();
    let mut q_now: Vec<f64> = v0.entries.iter().map(|e| e.q).collect();
    for ev in pde.events.iter().filter(|e| e.kind == EventKind::Bubbling) {
        let Some(pde_index) = pde.vortices[0].iter().position(|v| v.id == ev.vortex) else { continue };
        let Some(ode_index) = assign.iter().position(|&a| a == pde_index) else { continue };
        q_now[ode_index] += ev.delta_q;
        jumps.push(QJump { time: 0.5 * (ev.t_start + ev.t_end), vortex: ode_index, q: q_now[ode_index] });
    }
    let r_min = opts.r_min;
    let no_jump = if jumps.is_empty() { None } else { Some(ode_integrate_with(&state, &opts)?) };
    opts.jumps = jumps.clone();
    let ode = ode_integrate_with(&state, &opts)?;
    let comparison = compare_tracks(&pde, &ode, r_min)?;
    let comparison_without_jumps = no_jump.as_ref().map(|o| compare_tracks(&pde, o, r_min)).transpose()?;
    let events = pde
        .events
        .iter()
        .map(|e| {
            let jump = jumps.iter().find(|j| j.time >= e.t_start && j.time <= e.t_end).copied();
            EventAlignment { pde_event: e.clone(), matched: jump.is_some(), ode_jump: jump }
        })
        .collect();
    let excess = excess_series(&pde, eps, &model, radial_kind)?;
    if let Some(d) = dir {
        pde.write(d, "pde_")?;
        ode.write(d, "ode_")?;
    }
    Ok(EpsilonResult {
        epsilon: eps,
        grid: n,
        h: grid.h,
        status: pde.status.clone(),
        error: None,
        injected,
        comparison: Some(comparison),
        comparison_without_jumps,
        excess_energy: excess,
        events,
        runtime_seconds: 0.0,
    })
}

fn excess_series(
    pde: &Trajectory,
    eps: f64,
    model: &RenormalizedEnergyModel,
    kind: RadialKind,
) -> Result<Vec<(f64, f64)>> {
    let Some(energy) = pde.series(trajectory::ENERGY) else { return Ok(Vec::new()) };
    let gamma = radial::gamma(kind, eps)?;
    let mut out = Vec::new();
    for (i, vs) in pde.vortices.iter().enumerate() {
        if vs.is_empty() {
            continue;
        }
        let v = VortexSet::new(vs.iter().map(|t| Vortex::new(t.position, t.degree, t.q)).collect());
        let Ok(w) = renormalized_energy(&v, model) else { continue };
        let core = v.len() as f64 * (PI * (1.0 / eps).ln() + gamma);
        out.push((pde.times[i], energy[i] - core - w));
    }
    Ok(out)
}
