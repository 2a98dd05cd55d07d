//! Re-integration of a solved plan with an adaptive Dormand-Prince integrator.

use ode_solvers::{Dopri5, System, Vector6};

use crate::error::{Error, Result};
use crate::planner::transcription::{Transcription, NX, STATE_SCALE};

/// Floors of the per-component normalization in physical units
/// `(u, v, r, n, chi, t)`.
const FLOORS: [f64; 6] = [1.0, 0.1, 0.1, 0.1, 0.05, 0.01];

struct Spatial<'a> {
    tr: &'a Transcription,
    u: [f64; 3],
    s0: f64,
    kappa: &'a dyn Fn(f64) -> f64,
}

impl System<f64, Vector6<f64>> for Spatial<'_> {
    fn system(&self, s: f64, y: &Vector6<f64>, dy: &mut Vector6<f64>) {
        let x: [f64; NX] = std::array::from_fn(|i| y[i]);
        let (f, inv) = self.tr.spatial_rhs(&x, &self.u, (self.kappa)(self.s0 + s));
        for i in 0..NX {
            dy[i] = f[i];
        }
        dy[5] = inv;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FidelityReport {
    /// Largest normalized deviation over all nodes and collocation points.
    pub max_relative_error: f64,
    /// Interval and component where it occurs (component 5 is time).
    pub worst_interval: usize,
    pub worst_component: usize,
}

/// Integrates every interval from the planned node state with the planned
/// input and compares against the planned collocation states, the next node
/// and the interval time. Deviations are divided by the largest magnitude of
/// each component along the plan (with small floors).
pub fn reintegrate(tr: &Transcription, x: &[f64], kappa: &dyn Fn(f64) -> f64) -> Result<FidelityReport> {
    let n = tr.intervals;
    let mut scale = FLOORS;
    for k in 0..n {
        let xs = tr.node_state(x, k);
        for i in 0..NX {
            scale[i] = scale[i].max(xs[i].abs());
        }
        scale[5] = scale[5].max(tr.interval_time(x, k));
    }
    let mut rep = FidelityReport { max_relative_error: 0.0, worst_interval: 0, worst_component: 0 };
    for k in 0..n {
        let u0 = tr.interval_input(x, k);
        let sys_u = [u0.x2a / (tr.vehicle.chassis.m * crate::vehicle::GRAVITY), u0.x2b / (tr.vehicle.chassis.m * crate::vehicle::GRAVITY), u0.delta];
        let start = tr.node_state(x, k);
        let mut y = Vector6::zeros();
        for i in 0..NX {
            y[i] = start[i] / STATE_SCALE[i];
        }
        let mut targets: Vec<(f64, [f64; NX])> =
            tr.colloc.tau.iter().enumerate().map(|(l, &t)| (t, tr.colloc_state(x, k, l))).collect();
        targets.push((1.0, tr.node_state(x, k + 1)));
        let mut at = 0.0;
        for (ti, (t, target)) in targets.iter().enumerate() {
            let sys = Spatial { tr, u: sys_u, s0: tr.s0[k], kappa };
            let mut st = Dopri5::new(sys, at * tr.ds, t * tr.ds, (t - at) * tr.ds, y, 1e-10, 1e-12);
            st.integrate().map_err(|e| Error::Domain(format!("re-integration of interval {k}: {e:?}")))?;
            y = *st.y_out().last().expect("integrator output");
            at = *t;
            let mut errs = [0.0; 6];
            for i in 0..NX {
                errs[i] = (y[i] * STATE_SCALE[i] - target[i]).abs() / scale[i];
            }
            if ti + 1 == targets.len() {
                errs[5] = (y[5] - tr.interval_time(x, k)).abs() / scale[5];
            }
            for (c, e) in errs.iter().enumerate() {
                if *e > rep.max_relative_error {
                    rep = FidelityReport { max_relative_error: *e, worst_interval: k, worst_component: c };
                }
            }
        }
    }
    Ok(rep)
}
