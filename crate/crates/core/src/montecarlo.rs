//! Open-loop Monte Carlo validation of the constraint margins and the noise
//! tuning probe.

use std::path::Path;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::planner::PlanNode;
use crate::track::TrackGeometry;
use crate::uncertainty::{propagate_covariance, JacobianPath, NoiseModel};
use crate::vehicle::{Axle, Input, State, Vehicle};

/// Euler-Maruyama substeps per grid interval.
pub const SUBSTEPS: usize = 8;

/// Constraint family checked at the end of a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Track,
    Friction(Axle),
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Track, Family::Friction(Axle::Front), Family::Friction(Axle::Rear)];

    pub fn name(self) -> &'static str {
        match self {
            Family::Track => "track",
            Family::Friction(Axle::Front) => "friction_front",
            Family::Friction(Axle::Rear) => "friction_rear",
        }
    }

    fn index(self) -> usize {
        match self {
            Family::Track => 0,
            Family::Friction(a) => 1 + a.index(),
        }
    }
}

/// Reference trajectory the rollouts follow in open loop.
#[derive(Clone, Copy, Debug)]
pub struct OpenLoopPlan<'a> {
    /// `N + 1` nodes; the input of node `k` acts on interval `k`.
    pub nodes: &'a [PlanNode],
    pub closed: bool,
}

impl OpenLoopPlan<'_> {
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    fn wrap(&self, k: usize) -> usize {
        if self.closed {
            k % self.intervals()
        } else {
            k
        }
    }

    fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1].t - self.nodes[k].t
    }
}

#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub start: usize,
    /// Node at which the constraints are checked.
    pub end: usize,
    pub seed: u64,
    pub samples: usize,
    pub final_states: Vec<[f64; 6]>,
    /// Violations per family, diverged samples included.
    pub violations: [usize; 3],
    pub diverged: usize,
}

impl RolloutBatch {
    pub fn count(&self, f: Family) -> usize {
        self.violations[f.index()]
    }

    pub fn rate(&self, f: Family) -> f64 {
        self.count(f) as f64 / self.samples as f64
    }

    /// Sample mean and unbiased covariance of the final states.
    pub fn moments(&self) -> (Vector6<f64>, Matrix6<f64>) {
        let m = self.final_states.len() as f64;
        let mut mean = Vector6::zeros();
        for s in &self.final_states {
            mean += Vector6::from(*s);
        }
        mean /= m;
        let mut cov = Matrix6::zeros();
        for s in &self.final_states {
            let d = Vector6::from(*s) - mean;
            cov += d * d.transpose();
        }
        (mean, cov / (m - 1.0))
    }
}

/// Symmetric square root factor `L` with `L L^T = M` for a PSD matrix.
pub fn psd_factor(m: &Matrix6<f64>) -> Matrix6<f64> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let sq = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    e.eigenvectors * Matrix6::from_diagonal(&sq)
}

fn normal6(rng: &mut ChaCha8Rng) -> Vector6<f64> {
    Vector6::from_fn(|_, _| StandardNormal.sample(rng))
}

fn drift(vehicle: &Vehicle, x: &Vector6<f64>, input: &Input) -> Option<Vector6<f64>> {
    let st = State::from_array((*x).into());
    let f = vehicle.dynamics(&st, input).ok()?;
    let v = Vector6::from(f);
    v.iter().all(|a| a.is_finite()).then_some(v)
}

struct Outcome {
    state: [f64; 6],
    flags: [bool; 3],
    diverged: bool,
}

#[allow(clippy::too_many_arguments)]
fn one_sample(
    vehicle: &Vehicle,
    track: &TrackGeometry,
    plan: &OpenLoopPlan,
    start: usize,
    horizon: usize,
    l0: &Matrix6<f64>,
    lq: &Matrix6<f64>,
    seed: u64,
    index: u64,
) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut x = Vector6::from(plan.nodes[start].state().to_array()) + l0 * normal6(&mut rng);
    let mut diverged = false;
    'outer: for j in 0..horizon {
        let k = plan.wrap(start + j);
        let input = plan.nodes[k].input();
        let h = plan.dt(k) / SUBSTEPS as f64;
        let sh = h.sqrt();
        for _ in 0..SUBSTEPS {
            let Some(f) = drift(vehicle, &x, &input) else {
                diverged = true;
                break 'outer;
            };
            x += f * h + lq * normal6(&mut rng) * sh;
            if !(x[0] > 0.0) || x.iter().any(|a| !a.is_finite()) {
                diverged = true;
                break 'outer;
            }
        }
    }
    let state: [f64; 6] = x.into();
    if diverged {
        return Outcome { state, flags: [true; 3], diverged };
    }
    let end = plan.wrap(start + horizon);
    let node = &plan.nodes[end];
    let (s, n) = track.project(x[3], x[4], node.s);
    let p = track.at(s);
    let sat = vehicle.saturation_generic(x[0], x[1], x[2], node.input().to_array());
    Outcome { state, flags: [n > p.w_left || n < -p.w_right, sat[0] > 1.0, sat[1] > 1.0], diverged }
}

/// Simulates `samples` open-loop paths over `horizon` intervals from node
/// `start`, with initial states drawn around the planned state at `start`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_window(
    vehicle: &Vehicle,
    track: &TrackGeometry,
    plan: &OpenLoopPlan,
    start: usize,
    horizon: usize,
    noise: &NoiseModel,
    samples: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    noise.validate()?;
    let n = plan.intervals();
    if n < 1 || start >= n {
        return Err(Error::Config(format!("window start {start} outside the plan ({n} intervals)")));
    }
    if !plan.closed && start + horizon > n {
        return Err(Error::Config(format!("window {start}+{horizon} runs past the end of an open plan")));
    }
    if samples < 2 {
        return Err(Error::Config("at least two samples are needed".into()));
    }
    let l0 = psd_factor(&noise.p0);
    let lq = psd_factor(&noise.q);
    let run = |i: usize| one_sample(vehicle, track, plan, start, horizon, &l0, &lq, seed, i as u64);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Outcome> = {
        use rayon::prelude::*;
        (0..samples).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Outcome> = (0..samples).map(run).collect();
    let mut violations = [0; 3];
    let mut diverged = 0;
    let mut final_states = Vec::with_capacity(samples);
    for o in outcomes {
        for (v, f) in violations.iter_mut().zip(o.flags) {
            *v += f as usize;
        }
        diverged += o.diverged as usize;
        final_states.push(o.state);
    }
    Ok(RolloutBatch { start, end: plan.wrap(start + horizon), seed, samples, final_states, violations, diverged })
}

/// Wilson score interval at 95 % confidence.
pub fn binomial_ci(k: usize, m: usize) -> (f64, f64) {
    let z = 1.959963984540054;
    let m = m as f64;
    let p = k as f64 / m;
    let den = 1.0 + z * z / m;
    let c = (p + z * z / (2.0 * m)) / den;
    let h = z * (p * (1.0 - p) / m + z * z / (4.0 * m * m)).sqrt() / den;
    let lo = if k == 0 { 0.0 } else { (c - h).max(0.0) };
    let hi = if k as f64 == m { 1.0 } else { (c + h).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRow {
    pub k: usize,
    pub s: f64,
    pub family: Family,
    pub samples: usize,
    pub violations: usize,
    pub rate: f64,
    pub ci: (f64, f64),
}

impl ValidationRow {
    pub fn from_batch(batch: &RolloutBatch, s: f64, family: Family) -> Self {
        let v = batch.count(family);
        Self {
            k: batch.end,
            s,
            family,
            samples: batch.samples,
            violations: v,
            rate: batch.rate(family),
            ci: binomial_ci(v, batch.samples),
        }
    }
}

pub const VALIDATION_HEADER: [&str; 8] = ["k", "s", "family", "M", "violations", "rate", "ci_low", "ci_high"];

pub fn write_validation_csv(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(VALIDATION_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format!("{:.6}", r.s),
            r.family.name().to_string(),
            r.samples.to_string(),
            r.violations.to_string(),
            format!("{:.9e}", r.rate),
            format!("{:.9e}", r.ci.0),
            format!("{:.9e}", r.ci.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Node and axle whose friction row carries the largest multiplier among
/// tightened ones, i.e. the constraint the lap time is most sensitive to.
pub fn most_active_friction_node(nodes: &[PlanNode], closed: bool) -> Option<(usize, Axle)> {
    let last = if closed { nodes.len() - 1 } else { nodes.len() };
    let mut best: Option<(usize, Axle, f64)> = None;
    for (k, p) in nodes[..last].iter().enumerate() {
        let d = p.friction_dual;
        for a in Axle::BOTH {
            let j = a.index();
            if p.beta_friction[j] <= 0.0 {
                continue;
            }
            if best.is_none_or(|b| d[j] > b.2) {
                best = Some((k, a, d[j]));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

/// Node and axle with the largest nominal saturation among tightened ones.
pub fn most_saturated_friction_node(nodes: &[PlanNode], closed: bool) -> Option<(usize, Axle)> {
    let last = if closed { nodes.len() - 1 } else { nodes.len() };
    let mut best: Option<(usize, Axle, f64)> = None;
    for (k, p) in nodes[..last].iter().enumerate() {
        for a in Axle::BOTH {
            let j = a.index();
            if p.beta_friction[j] <= 0.0 {
                continue;
            }
            let s = p.saturation[j];
            if best.is_none_or(|b| s > b.2) {
                best = Some((k, a, s));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

// ---- tuning probe ----

/// Speed held during the probe [m/s].
pub const PROBE_SPEED: f64 = 25.0;
/// Steering ramp rate [rad/s].
pub const PROBE_STEER_RATE: f64 = 0.035;
/// Recording step: one 1.3 m grid interval at the probe speed.
pub const PROBE_DT: f64 = 1.3 / PROBE_SPEED;
const PROBE_SUBSTEPS: usize = 10;
const PROBE_TARGET: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    /// Largest friction back-off, in units of axle capacity.
    pub max_beta: f64,
    pub max_beta_axle: Axle,
    /// Saturation at the step where `max_beta` occurs.
    pub saturation_at_max: f64,
    pub peak_saturation: f64,
    pub steps: usize,
}

/// Ramp-steer at constant speed until an axle passes 90 % saturation, then
/// the friction back-offs along the maneuver.
pub fn tuning_probe(vehicle: &Vehicle, noise: &NoiseModel, horizon: usize, gamma: f64) -> Result<ProbeReport> {
    noise.validate()?;
    if horizon < 1 {
        return Err(Error::Config("probe horizon must be at least 1".into()));
    }
    let c = &vehicle.chassis;
    let mut x = State { u: PROBE_SPEED, ..State::default() };
    let mut path: Vec<(State, Input)> = Vec::new();
    let mut delta = 0.0;
    let h = PROBE_DT / PROBE_SUBSTEPS as f64;
    let peak = loop {
        // hold speed: cancel the drag of the steered front axle, plus a P term
        let coast = Input { x2a: 0.0, x2b: 0.0, delta };
        let du0 = vehicle.dynamics(&x, &coast)?[0];
        let x2a = (c.m * (2.0 * (PROBE_SPEED - x.u) - du0)).clamp(0.0, c.x2a_max);
        let input = Input { x2a, x2b: 0.0, delta };
        let sat = vehicle.saturation_generic(x.u, x.v, x.r, input.to_array());
        path.push((x, input));
        let smax = sat[0].max(sat[1]);
        if smax >= PROBE_TARGET {
            break smax;
        }
        if delta >= c.delta_max {
            return Err(Error::Probe(format!("saturation {smax:.3} below {PROBE_TARGET} at full steer")));
        }
        for _ in 0..PROBE_SUBSTEPS {
            let a = vehicle.dynamics(&x, &input)?.map(|v| v * h);
            let mid = State::from_array(std::array::from_fn(|i| x.to_array()[i] + 0.5 * a[i]));
            let b = vehicle.dynamics(&mid, &input)?.map(|v| v * h);
            let mid = State::from_array(std::array::from_fn(|i| x.to_array()[i] + 0.5 * b[i]));
            let cc = vehicle.dynamics(&mid, &input)?.map(|v| v * h);
            let end = State::from_array(std::array::from_fn(|i| x.to_array()[i] + cc[i]));
            let d = vehicle.dynamics(&end, &input)?.map(|v| v * h);
            x = State::from_array(std::array::from_fn(|i| {
                x.to_array()[i] + (a[i] + 2.0 * b[i] + 2.0 * cc[i] + d[i]) / 6.0
            }));
        }
        delta = (delta + PROBE_STEER_RATE * PROBE_DT).min(c.delta_max);
    };
    let mut rep = ProbeReport {
        max_beta: 0.0,
        max_beta_axle: Axle::Front,
        saturation_at_max: 0.0,
        peak_saturation: peak,
        steps: path.len(),
    };
    for k in horizon..path.len() {
        let mut p = noise.p0;
        for (st, inp) in &path[k - horizon..k] {
            let a = JacobianPath::constant(vehicle.jacobian_a(st, inp)?);
            p = propagate_covariance(&p, &a, &noise.q, PROBE_DT)?;
        }
        let (st, inp) = &path[k];
        for axle in Axle::BOTH {
            let g = Vector6::from(vehicle.saturation_gradient(st, inp, axle)?);
            let beta = gamma * (g.transpose() * p * g)[0].max(0.0).sqrt();
            if beta > rep.max_beta {
                rep.max_beta = beta;
                rep.max_beta_axle = axle;
                rep.saturation_at_max = vehicle.axle_saturation(st, inp, axle)?;
            }
        }
    }
    Ok(rep)
}
