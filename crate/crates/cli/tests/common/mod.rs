//! Synthetic inputs shared by the CLI test suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lapline::planner::export::load_reference;
use lapline::telemetry::{write_telemetry, TelemetryLog, TelemetrySample, WheelChannels};
use lapline::vehicle::{magic_formula, AxleTireParams};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scene(name: &str) -> PathBuf {
    workspace_root().join("scenes").join(name)
}

pub fn lapline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapline")).args(args).output().expect("run lapline")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Noiseless per-wheel telemetry sweeping the slip angle at four loads.
pub fn write_tire_telemetry(path: &Path, front: &AxleTireParams, rear: &AxleTireParams) {
    let mut samples = Vec::new();
    let mut t = 0.0;
    for fz in [5000.0, 8000.0, 11000.0, 14000.0] {
        for i in 0..=40 {
            let alpha = -0.2 + 0.01 * i as f64;
            let ff = magic_formula(alpha, fz, &front.to_array());
            let fr = magic_formula(alpha, fz, &rear.to_array());
            samples.push(TelemetrySample {
                t,
                u: 20.0,
                wheels: Some(WheelChannels {
                    alpha: [alpha; 4],
                    fz: [fz / 2.0; 4],
                    fy: [ff / 2.0, ff / 2.0, fr / 2.0, fr / 2.0],
                }),
                ..Default::default()
            });
            t += 0.01;
        }
    }
    write_telemetry(path, &TelemetryLog::new(samples).unwrap()).unwrap();
}

/// Drives a closed reference for `laps` laps at `rate` Hz, with a lateral
/// weave of `weave` metres whose phase changes from lap to lap.
pub fn write_lap_telemetry(path: &Path, reference: &Path, laps: usize, rate: f64, weave: f64) {
    let r = load_reference(reference).unwrap();
    let nodes = &r.nodes;
    let period = nodes.last().unwrap().t;
    let total = laps as f64 * period + 0.5;
    let count = (total * rate) as usize;
    let mut j = 0;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        // start a little before the line so the first lap is complete
        let t = i as f64 / rate - 0.25;
        let lap = (t / period).floor();
        let tl = t - lap * period;
        j = if tl < nodes[j].t { 0 } else { j };
        while nodes[j + 1].t < tl {
            j += 1;
        }
        let (a, b) = (&nodes[j], &nodes[j + 1]);
        let w = (tl - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        let psi = lerp(a.psi, a.psi + (b.psi - a.psi + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI);
        let off = weave * (0.7 * t + lap).sin();
        samples.push(TelemetrySample {
            t: t + 0.25,
            u: lerp(a.u, b.u),
            v: lerp(a.v, b.v),
            r: lerp(a.r, b.r),
            x: lerp(a.x, b.x) - off * psi.sin(),
            y: lerp(a.y, b.y) + off * psi.cos(),
            psi,
            delta: lerp(a.delta, b.delta) + 0.002 * (3.0 * t).sin(),
            wheels: None,
        });
    }
    write_telemetry(path, &TelemetryLog::new(samples).unwrap()).unwrap();
}
