//! Vortex tracks, scalar time series and event logs shared by PDE and ODE runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::vortex::{distance, Point};

pub const ENERGY: &str = "energy";
/// Cumulative `alpha int int |d_t u|^2` (PDE) or `pi alpha0 int sum |a'|^2` (ODE).
pub const DISSIPATED: &str = "dissipated";
pub const JACOBIAN_TOTAL: &str = "jacobian_total";
pub const MAX_MODULUS: &str = "max_modulus";
pub const UNIT_DEVIATION: &str = "unit_deviation";
pub const TIME_STEP: &str = "dt";
pub const RENORMALIZED_ENERGY: &str = "w";
pub const RESIDUAL_MASS: &str = "residual_mass";
pub const RESIDUAL_JACOBIAN: &str = "residual_jacobian";
pub const RESIDUAL_ENERGY: &str = "residual_energy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedVortex {
    /// Identity, stable across samples.
    pub id: usize,
    pub position: Point,
    pub degree: i32,
    /// Gyro-coefficient: read from the vorticity for director fields, `d / 2` otherwise.
    pub q: f64,
    #[serde(default)]
    pub velocity: Option<Point>,
    #[serde(default)]
    pub jacobian_mass: Option<f64>,
    #[serde(default)]
    pub vorticity_mass: Option<f64>,
    #[serde(default)]
    pub window_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Bubbling,
    QJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Bracket `[t_start, t_end]`; equal for externally imposed jumps.
    pub t_start: f64,
    pub t_end: f64,
    pub vortex: usize,
    pub center: Point,
    pub window_radius: f64,
    /// Jump of `q` (for bubbling: rounded vorticity jump over `4 pi`).
    pub delta_q: f64,
    pub delta_omega: f64,
    pub delta_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Collision,
    BoundaryEscape,
    TrackLost,
    Failed(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub vortices: Vec<Vec<TrackedVortex>>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub events: Vec<Event>,
    pub status: RunStatus,
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory {
            times: Vec::new(),
            vortices: Vec::new(),
            series: BTreeMap::new(),
            events: Vec::new(),
            status: RunStatus::Completed,
        }
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a sample. Every series must receive a value at every sample.
    pub fn push(&mut self, time: f64, vortices: Vec<TrackedVortex>, scalars: &[(&str, f64)]) {
        debug_assert!(self.times.last().map_or(true, |&t| time > t), "times must increase");
        let n = self.times.len();
        for &(name, value) in scalars {
            let s = self.series.entry(name.to_string()).or_default();
            s.resize(n, f64::NAN);
            s.push(value);
        }
        self.times.push(time);
        self.vortices.push(vortices);
        for s in self.series.values_mut() {
            s.resize(n + 1, f64::NAN);
        }
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(|v| v.as_slice())
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Sorted identities seen anywhere in the trajectory.
    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.vortices.iter().flatten().map(|v| v.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// `(t, position)` samples of one vortex.
    pub fn track(&self, id: usize) -> Vec<(f64, Point)> {
        self.times
            .iter()
            .zip(&self.vortices)
            .filter_map(|(&t, vs)| vs.iter().find(|v| v.id == id).map(|v| (t, v.position)))
            .collect()
    }

    /// Position of vortex `id` at time `t` by linear interpolation between samples.
    pub fn position_at(&self, id: usize, t: f64) -> Option<Point> {
        interpolate(&self.track(id), t)
    }

    /// Writes `tracks.csv`, `series.csv` and `events.json` under `dir` with the given prefix.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}tracks.csv"))).map_err(csv_err)?;
        for (t, vs) in self.times.iter().zip(&self.vortices) {
            for v in vs {
                w.serialize(TrackRow::new(*t, v)).map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}series.csv"))).map_err(csv_err)?;
        let mut header = vec!["time".to_string()];
        header.extend(self.series.keys().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (n, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.series.values().map(|s| s[n].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;

        let log = serde_json::json!({ "status": self.status, "events": self.events });
        fs::write(dir.join(format!("{prefix}events.json")), serde_json::to_string_pretty(&log)?)?;
        Ok(())
    }

    /// Reads back what [`Trajectory::write`] produced.
    pub fn read(dir: &Path, prefix: &str) -> Result<Self> {
        let mut traj = Trajectory::default();
        let mut rdr = csv::Reader::from_path(dir.join(format!("{prefix}series.csv"))).map_err(csv_err)?;
        let names: Vec<String> = rdr.headers().map_err(csv_err)?.iter().skip(1).map(str::to_string).collect();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec.iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)).collect();
            traj.times.push(vals[0]);
            for (name, v) in names.iter().zip(&vals[1..]) {
                traj.series.entry(name.clone()).or_default().push(*v);
            }
        }
        traj.vortices = vec![Vec::new(); traj.times.len()];
        let mut rdr = csv::Reader::from_path(dir.join(format!("{prefix}tracks.csv"))).map_err(csv_err)?;
        for row in rdr.deserialize::<TrackRow>() {
            let row = row.map_err(csv_err)?;
            let n = traj
                .times
                .iter()
                .position(|&t| t == row.time)
                .ok_or_else(|| VortexError::config(format!("track row at t = {} has no series row", row.time)))?;
            traj.vortices[n].push(row.into_vortex());
        }
        let log: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{prefix}events.json")))?)?;
        traj.status = serde_json::from_value(log["status"].clone())?;
        traj.events = serde_json::from_value(log["events"].clone())?;
        Ok(traj)
    }
}

fn csv_err(e: csv::Error) -> VortexError {
    VortexError::config(format!("csv: {e}"))
}

/// One row of `tracks.csv`; the layout is shared by PDE and ODE tracks.
#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    time: f64,
    id: usize,
    x: f64,
    y: f64,
    degree: i32,
    q: f64,
    vx: Option<f64>,
    vy: Option<f64>,
    jacobian_mass: Option<f64>,
    vorticity_mass: Option<f64>,
    window_radius: Option<f64>,
}

impl TrackRow {
    fn new(time: f64, v: &TrackedVortex) -> Self {
        TrackRow {
            time,
            id: v.id,
            x: v.position[0],
            y: v.position[1],
            degree: v.degree,
            q: v.q,
            vx: v.velocity.map(|p| p[0]),
            vy: v.velocity.map(|p| p[1]),
            jacobian_mass: v.jacobian_mass,
            vorticity_mass: v.vorticity_mass,
            window_radius: v.window_radius,
        }
    }

    fn into_vortex(self) -> TrackedVortex {
        TrackedVortex {
            id: self.id,
            position: [self.x, self.y],
            degree: self.degree,
            q: self.q,
            velocity: self.vx.zip(self.vy).map(|(a, b)| [a, b]),
            jacobian_mass: self.jacobian_mass,
            vorticity_mass: self.vorticity_mass,
            window_radius: self.window_radius,
        }
    }
}

/// Linear interpolation of a sampled track; `None` outside the sampled interval.
pub fn interpolate(track: &[(f64, Point)], t: f64) -> Option<Point> {
    let first = track.first()?;
    let last = track.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let n = track.partition_point(|s| s.0 < t);
    if n == 0 {
        return Some(first.1);
    }
    let (t0, p0) = track[n - 1];
    let (t1, p1) = track[n];
    let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
    Some([p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])])
}

/// Assigns each point of `next` to a distinct point of `prev` by repeatedly
/// pairing the closest remaining couple. Returns `assign[j] = i` for `next[j]`,
/// or `None` if the counts differ.
pub fn match_nearest(prev: &[Point], next: &[Point]) -> Option<Vec<usize>> {
    if prev.len() != next.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * next.len());
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push((distance(*p, *q), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assign = vec![usize::MAX; next.len()];
    let mut used = vec![false; prev.len()];
    for (_, i, j) in pairs {
        if !used[i] && assign[j] == usize::MAX {
            used[i] = true;
            assign[j] = i;
        }
    }
    Some(assign)
}
