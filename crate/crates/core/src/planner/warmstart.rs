//! Quasi-steady-state initial guess.

use crate::planner::transcription::{Transcription, NX};
use crate::track::SpatialGrid;
use crate::vehicle::{Input, Vehicle, GRAVITY};

const A_LAT: f64 = 0.8 * GRAVITY;
const A_BRAKE: f64 = 7.0;
const U_CAP: f64 = 60.0;

/// Speed profile limited by lateral acceleration on the centerline, then by
/// traction/power forwards and braking backwards.
pub fn speed_profile(grid: &SpatialGrid, vehicle: &Vehicle, u_start: Option<f64>) -> Vec<f64> {
    let n = grid.intervals;
    let c = &vehicle.chassis;
    let cap: Vec<f64> = grid
        .nodes
        .iter()
        .map(|p| if p.kappa.abs() > 1e-9 { (A_LAT / p.kappa.abs()).sqrt().min(U_CAP) } else { U_CAP })
        .collect();
    let mut u = cap.clone();
    if let Some(u0) = u_start {
        u[0] = u0;
    }
    let accel = |u: f64| 0.8 * c.x2a_max.min(c.p_max / u.max(1.0)) / c.m;
    let passes = if grid.closed { 3 } else { 1 };
    for _ in 0..passes {
        for k in 0..n {
            let reach = (u[k] * u[k] + 2.0 * accel(u[k]) * grid.ds).sqrt();
            u[k + 1] = u[k + 1].min(reach);
        }
        if grid.closed {
            u[0] = u[0].min(u[n]);
        }
    }
    for _ in 0..passes {
        for k in (0..n).rev() {
            let reach = (u[k + 1] * u[k + 1] + 2.0 * A_BRAKE * grid.ds).sqrt();
            if k > 0 || u_start.is_none() {
                u[k] = u[k].min(reach);
            }
        }
        if grid.closed {
            u[n] = u[n].min(u[0]);
            u[0] = u[n];
        }
    }
    u
}

/// Decision vector following the centerline at the quasi-steady speed.
pub fn initial_guess(tr: &Transcription, grid: &SpatialGrid, vehicle: &Vehicle) -> Vec<f64> {
    let n = grid.intervals;
    let speeds = speed_profile(grid, vehicle, tr.initial.map(|x| x[0]));
    let node = |k: usize| -> [f64; NX] {
        let u = speeds[k];
        [u, 0.0, u * grid.nodes[k].kappa, 0.0, 0.0]
    };
    let nodes: Vec<[f64; NX]> = (0..=n).map(node).collect();
    let colloc: Vec<Vec<[f64; NX]>> = (0..n)
        .map(|k| {
            tr.colloc
                .tau
                .iter()
                .map(|&t| std::array::from_fn(|i| nodes[k][i] + t * (nodes[k + 1][i] - nodes[k][i])))
                .collect()
        })
        .collect();
    let m = vehicle.chassis.m;
    let inputs: Vec<Input> = (0..n)
        .map(|k| {
            let a = (speeds[k + 1].powi(2) - speeds[k].powi(2)) / (2.0 * grid.ds);
            let kappa = 0.5 * (grid.nodes[k].kappa + grid.nodes[k + 1].kappa);
            Input {
                x2a: (m * a).max(0.0),
                x2b: (m * a).min(0.0),
                delta: (vehicle.chassis.wheelbase * kappa).clamp(-0.3, 0.3),
            }
        })
        .collect();
    tr.encode(&nodes, &colloc, &inputs)
}
