//! Browser bindings: tire curves, the noise tuning probe and a small
//! planning run on the oval. Every function returns flat `f64` arrays so the
//! page can draw them without a serialization layer.

use lapline::backoff::Variant;
use lapline::montecarlo::tuning_probe;
use lapline::planner::{Planner, PlannerConfig};
use lapline::tracks;
use lapline::uncertainty::NoiseModel;
use lapline::vehicle::{magic_formula, Axle, AxleTireParams, Vehicle};
use wasm_bindgen::prelude::*;

/// Slip range of the tire plot [rad].
pub const SLIP_RANGE: f64 = 0.3;
const CURVE_POINTS: usize = 121;
/// Intervals of the demo plan: 5 m on the 600 m oval keeps a solve under a few seconds.
pub const DEMO_INTERVALS: usize = 120;

fn axle_params(axle: &str) -> Result<AxleTireParams, String> {
    match axle {
        "front" => Ok(AxleTireParams::FRONT),
        "rear" => Ok(AxleTireParams::REAR),
        "start" => Ok(AxleTireParams::START),
        other => Err(format!("unknown axle {other:?} (front, rear, start)")),
    }
}

/// `[alpha_0, fy_0, alpha_1, fy_1, ...]` at axle load `fz`.
pub fn tire_curve_points(axle: &str, fz: f64) -> Result<Vec<f64>, String> {
    let p = axle_params(axle)?;
    if !(fz > 0.0) {
        return Err(format!("axle load {fz} must be positive"));
    }
    let mut out = Vec::with_capacity(2 * CURVE_POINTS);
    for i in 0..CURVE_POINTS {
        let a = -SLIP_RANGE + 2.0 * SLIP_RANGE * i as f64 / (CURVE_POINTS - 1) as f64;
        out.push(a);
        out.push(magic_formula(a, fz, &p.to_array()));
    }
    Ok(out)
}

/// `[max_beta, saturation_at_max, peak_saturation, axle]` for the default
/// noise scaled by `q_scale`; axle 0 is front, 1 rear.
pub fn probe_values(q_scale: f64, horizon: usize, gamma: f64) -> Result<Vec<f64>, String> {
    if !(q_scale >= 0.0) {
        return Err(format!("noise scale {q_scale} must be non-negative"));
    }
    let noise = NoiseModel::default().scale_q(q_scale);
    let rep = tuning_probe(&Vehicle::default(), &noise, horizon, gamma).map_err(|e| e.to_string())?;
    let axle = if rep.max_beta_axle == Axle::Front { 0.0 } else { 1.0 };
    Ok(vec![rep.max_beta, rep.saturation_at_max, rep.peak_saturation, axle])
}

/// Track edges of the oval, `[x_left, y_left, x_right, y_right]` per sample.
pub fn oval_edges() -> Result<Vec<f64>, String> {
    let track = tracks::oval().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for s in track.samples() {
        let p = track.at(s.s);
        let [nx, ny] = p.normal();
        out.extend([p.x + nx * p.w_left, p.y + ny * p.w_left, p.x - nx * p.w_right, p.y - ny * p.w_right]);
    }
    Ok(out)
}

/// `[lap_time, x_0, y_0, u_0, x_1, ...]` of one variant on the oval, with
/// the default noise scaled by `q_scale`.
pub fn plan_values(variant: &str, q_scale: f64) -> Result<Vec<f64>, String> {
    let variant: Variant = variant.parse().map_err(|e: lapline::Error| e.to_string())?;
    let track = tracks::oval().map_err(|e| e.to_string())?;
    let vehicle = Vehicle::default();
    let cfg = PlannerConfig {
        intervals: DEMO_INTERVALS,
        noise: NoiseModel::default().scale_q(q_scale),
        ..PlannerConfig::default()
    };
    let plan = Planner::new(&track, &vehicle, cfg)
        .and_then(|p| p.plan(variant))
        .and_then(|r| r.ensure_converged().map(|_| r))
        .map_err(|e| e.to_string())?;
    let mut out = vec![plan.lap_time];
    for q in &plan.nodes {
        out.extend([q.x, q.y, q.u]);
    }
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tire_curve(axle: &str, fz: f64) -> Result<Vec<f64>, JsError> {
    js(tire_curve_points(axle, fz))
}

#[wasm_bindgen]
pub fn probe(q_scale: f64, horizon: usize, gamma: f64) -> Result<Vec<f64>, JsError> {
    js(probe_values(q_scale, horizon, gamma))
}

#[wasm_bindgen]
pub fn track_edges() -> Result<Vec<f64>, JsError> {
    js(oval_edges())
}

#[wasm_bindgen]
pub fn plan(variant: &str, q_scale: f64) -> Result<Vec<f64>, JsError> {
    js(plan_values(variant, q_scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_odd_and_sized() {
        let c = tire_curve_points("front", 9000.0).unwrap();
        assert_eq!(c.len(), 2 * CURVE_POINTS);
        let n = CURVE_POINTS;
        assert!((c[0] + SLIP_RANGE).abs() < 1e-12);
        assert!((c[1] + c[2 * (n - 1) + 1]).abs() < 1e-9);
        assert!(tire_curve_points("middle", 9000.0).is_err());
        assert!(tire_curve_points("rear", 0.0).is_err());
    }

    #[test]
    fn probe_grows_with_noise() {
        let a = probe_values(1.0, 4, 3.0).unwrap();
        let b = probe_values(4.0, 4, 3.0).unwrap();
        // the initial covariance does not scale, so the growth is below sqrt(4)
        assert!(a[0] < b[0] && b[0] < 2.0 * a[0], "{} {}", a[0], b[0]);
        let z = probe_values(0.0, 4, 3.0).unwrap();
        assert!(z[0] > 0.0 && z[0] < a[0]);
        assert!(probe_values(-1.0, 4, 3.0).is_err());
    }

    #[test]
    fn demo_plan_is_slower_when_robust() {
        let nom = plan_values("nom", 1.0).unwrap();
        let flc = plan_values("flc", 1.0).unwrap();
        assert_eq!(nom.len(), 1 + 3 * (DEMO_INTERVALS + 1));
        assert!(flc[0] >= nom[0] - 1e-3);
        assert!(plan_values("noref", 1.0).is_err());
        assert_eq!(oval_edges().unwrap().len() % 4, 0);
    }
}
