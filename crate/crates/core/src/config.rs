//! Scene and vehicle configuration files.
//!
//! A scene names the track, the vehicle file and every planner setting:
//!
//! ```toml
//! track = "oval.csv"        # or "builtin:circle", "builtin:oval", "builtin:chicane"
//! closed = true
//! vehicle = "vehicle.toml"  # optional, defaults otherwise
//! variant = "flc"
//!
//! [grid]
//! N = 460
//! d = 3
//!
//! [noise]
//! H = 4
//! Q = [0.01, 0.01, 0.0016, 0.01, 0.01, 0.004]
//! P0 = [1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4]
//!
//! [backoff]
//! gamma = 3.0
//! ```
//!
//! Relative paths are resolved against the directory of the scene file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backoff::{BackoffConfig, Variant};
use crate::error::{Error, Result};
use crate::metrics::ReferenceFrame;
use crate::planner::transcription::{Limits, Weights};
use crate::planner::PlannerConfig;
use crate::track::{load_track, TrackGeometry};
use crate::tracks;
use crate::uncertainty::{MatrixSpec, NoiseModel};
use crate::vehicle::{AxleTireParams, Vehicle, VehicleParams};

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub track: String,
    #[serde(default = "default_true")]
    pub closed: bool,
    /// Width removed from both sides of the corridor [m].
    #[serde(default)]
    pub width_deduction: f64,
    pub vehicle: Option<String>,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub backoff: BackoffSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub export: ExportSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    /// Fixed initial state `[u, v, r, n, chi]` of an open track.
    pub initial: Option<[f64; 5]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let c = PlannerConfig::default();
        Self { n: c.intervals, d: c.degree }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "Q")]
    pub q: MatrixSpec,
    #[serde(rename = "P0")]
    pub p0: MatrixSpec,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseModel::default();
        Self { h: PlannerConfig::default().horizon, q: MatrixSpec::from_matrix(&n.q), p0: MatrixSpec::from_matrix(&n.p0) }
    }
}

/// Back-off settings. Giving `p_track` or `p_friction` without `gamma`
/// selects the Gaussian quantiles; `gamma` alone or nothing at all uses the
/// fixed multiplier.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackoffSection {
    pub gamma: Option<f64>,
    pub p_track: Option<f64>,
    pub p_friction: Option<f64>,
}

impl BackoffSection {
    fn resolve(&self, variant: Variant) -> BackoffConfig {
        let d = BackoffConfig::default();
        let quantiles = self.p_track.is_some() || self.p_friction.is_some();
        BackoffConfig {
            variant,
            p_track: self.p_track.unwrap_or(d.p_track),
            p_friction: self.p_friction.unwrap_or(d.p_friction),
            gamma: self.gamma.or(if quantiles { None } else { d.gamma }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub w_delta: f64,
    pub w_slack: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = Weights::default();
        Self { w_delta: w.w_delta, w_slack: w.w_slack }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = PlannerConfig::default();
        Self { tol: c.tol, max_iter: c.max_iter, max_sweeps: c.max_sweeps, sweep_tol: c.sweep_tol }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    /// Forward offset from the center of mass to the driver [m].
    #[serde(default)]
    pub driver_offset: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// `"com"` or `"ribbon"`.
    #[serde(default)]
    pub frame: Option<String>,
}

/// A loaded scene.
#[derive(Clone, Debug)]
pub struct Scene {
    pub file: SceneFile,
    pub track: TrackGeometry,
    pub vehicle: Vehicle,
    pub planner: PlannerConfig,
    pub variant: Variant,
    pub driver_offset: f64,
    pub frame: ReferenceFrame,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file, base)
    }

    pub fn from_file(file: SceneFile, base: &Path) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        };
        let mut track = match file.track.strip_prefix("builtin:") {
            Some(name) => builtin_track(name)?,
            None => load_track(resolve(&file.track), file.closed)?,
        };
        if file.width_deduction != 0.0 {
            track = track.with_width_deduction(file.width_deduction)?;
        }
        let vehicle = match &file.vehicle {
            Some(p) => load_vehicle(&resolve(p))?,
            None => Vehicle::default(),
        };
        let variant = match &file.variant {
            Some(v) => v.parse()?,
            None => Variant::Nom,
        };
        let noise = NoiseModel { q: file.noise.q.to_matrix()?, p0: file.noise.p0.to_matrix()? };
        noise.validate()?;
        let backoff = file.backoff.resolve(variant);
        backoff.validate()?;
        let planner = PlannerConfig {
            intervals: file.grid.n,
            degree: file.grid.d,
            horizon: file.noise.h,
            noise,
            backoff,
            weights: Weights { w_delta: file.weights.w_delta, w_slack: file.weights.w_slack },
            limits: Limits::default(),
            tol: file.solver.tol,
            max_iter: file.solver.max_iter,
            max_sweeps: file.solver.max_sweeps,
            sweep_tol: file.solver.sweep_tol,
            initial: file.initial,
        };
        let driver_offset = file.export.driver_offset;
        let frame = match file.metrics.frame.as_deref() {
            None | Some("com") => ReferenceFrame::Com,
            Some("ribbon") => ReferenceFrame::Ribbon { driver_offset },
            Some(f) => return Err(Error::Config(format!("unknown metrics frame {f:?} (com or ribbon)"))),
        };
        Ok(Self { file, track, vehicle, planner, variant, driver_offset, frame })
    }

    /// Canonical text of the resolved settings, used for hashing.
    pub fn canonical(&self) -> String {
        toml::to_string(&self.file).unwrap_or_default()
    }
}

pub fn builtin_track(name: &str) -> Result<TrackGeometry> {
    match name {
        "circle" => tracks::circle(50.0, 1.0, 5.0),
        "oval" => tracks::oval(),
        "chicane" => tracks::chicane(),
        _ => Err(Error::Config(format!("unknown builtin track {name:?} (circle, oval, chicane)"))),
    }
}

/// Reads a vehicle file: chassis keys at the top level, tire coefficients in
/// `[front]` and `[rear]`. Missing keys keep their defaults.
pub fn load_vehicle(path: &Path) -> Result<Vehicle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_vehicle(&text)
}

fn overlay<T: Serialize + serde::de::DeserializeOwned>(default: &T, table: toml::Table) -> Result<T> {
    let mut base = toml::Table::try_from(default).map_err(|e| Error::Config(e.to_string()))?;
    base.extend(table);
    base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

pub fn parse_vehicle(text: &str) -> Result<Vehicle> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let d = Vehicle::default();
    let mut axle = |key: &str, default: &AxleTireParams| -> Result<AxleTireParams> {
        match table.remove(key) {
            Some(toml::Value::Table(t)) => overlay(default, t),
            Some(_) => Err(Error::Config(format!("[{key}] must be a table"))),
            None => Ok(*default),
        }
    };
    let front = axle("front", &d.front)?;
    let rear = axle("rear", &d.rear)?;
    let chassis: VehicleParams = overlay(&d.chassis, table)?;
    let v = Vehicle { chassis, front, rear };
    v.validate()?;
    Ok(v)
}
