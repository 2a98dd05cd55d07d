//! Collocation-based minimum-lap-time planner.

pub mod collocation;
pub mod export;
pub mod fidelity;
pub mod ipm;
pub mod ldl;
pub mod transcription;
pub mod warmstart;

use crate::backoff::{friction_backoff, track_backoff, BackoffConfig, BackoffValue, Constraint, Variant};
use crate::error::{Error, Result};
use crate::track::{make_grid, SpatialGrid, TrackGeometry};
use crate::uncertainty::{build_replicas, MeanInterval, MeanPath, NoiseModel};
use crate::vehicle::{Axle, Input, State, Vehicle};
use ipm::{IpmOptions, IpmSolution, WarmStart};
use transcription::{Limits, Tightening, Transcription, Weights, NX};

/// Everything the planner needs besides the track and the vehicle.
#[derive(Clone, Debug)]
pub struct PlannerConfig {
    pub intervals: usize,
    pub degree: usize,
    pub horizon: usize,
    pub noise: NoiseModel,
    pub backoff: BackoffConfig,
    pub weights: Weights,
    pub limits: Limits,
    pub tol: f64,
    pub max_iter: usize,
    /// Outer back-off sweeps after the nominal solve.
    pub max_sweeps: usize,
    /// Relative back-off change that ends the sweeps.
    pub sweep_tol: f64,
    /// Fixed initial state `(u, v, r, n, chi)` for open tracks.
    pub initial: Option<[f64; NX]>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            intervals: 200,
            degree: 3,
            horizon: 4,
            noise: NoiseModel::default(),
            backoff: BackoffConfig::default(),
            weights: Weights::default(),
            limits: Limits::default(),
            tol: 1e-6,
            max_iter: 3000,
            max_sweeps: 5,
            sweep_tol: 0.01,
            initial: None,
        }
    }
}

/// Reference quantities at one grid node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanNode {
    pub k: usize,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub n: f64,
    pub chi: f64,
    pub delta: f64,
    pub x2a: f64,
    pub x2b: f64,
    /// Planned sideslip `atan(v / u)`.
    pub sideslip: f64,
    pub saturation: [f64; 2],
    pub beta_track: f64,
    pub beta_friction: [f64; 2],
    /// Magnitudes of the friction-row multipliers `[front, rear]`.
    pub friction_dual: [f64; 2],
}

impl PlanNode {
    pub fn state(&self) -> State {
        State { u: self.u, v: self.v, r: self.r, x: self.x, y: self.y, psi: self.psi }
    }

    pub fn input(&self) -> Input {
        Input { x2a: self.x2a, x2b: self.x2b, delta: self.delta }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverStats {
    pub converged: bool,
    pub iterations: usize,
    pub kkt_error: f64,
    pub constraint_violation: f64,
    pub sweeps: usize,
    pub sweeps_converged: bool,
    /// Sum of the soft slacks at the solution.
    pub slack_mass: f64,
    /// Steering-regularizer value and its share of the cost.
    pub regularizer: f64,
    pub regularizer_share: f64,
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub variant: Variant,
    pub lap_time: f64,
    pub closed: bool,
    /// `N + 1` nodes; on a closed lap the last repeats the first at `s = L`.
    pub nodes: Vec<PlanNode>,
    /// Tightenings enforced in the final solve, one per node and active family.
    pub backoffs: Vec<BackoffValue>,
    pub w_delta: f64,
    pub stats: SolverStats,
    pub log: Vec<String>,
    /// Raw solver output, kept for warm starts.
    pub solution: IpmSolution,
    pub tightening: Tightening,
}

impl PlanResult {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.stats.converged {
            Ok(())
        } else {
            Err(Error::NotConverged { iterations: self.stats.iterations, kkt_error: self.stats.kkt_error })
        }
    }

    /// Time spent between nodes `k` and `k + 1`.
    pub fn interval_time(&self, k: usize) -> f64 {
        self.nodes[k + 1].t - self.nodes[k].t
    }
}

/// Planner bound to one track and vehicle.
pub struct Planner<'a> {
    pub track: &'a TrackGeometry,
    pub vehicle: &'a Vehicle,
    pub config: PlannerConfig,
    pub grid: SpatialGrid,
}

/// Cartesian state of a curvilinear point.
pub fn frenet_to_state(track: &TrackGeometry, s: f64, x: &[f64; NX]) -> State {
    let p = track.at(s);
    let nrm = p.normal();
    State {
        u: x[0],
        v: x[1],
        r: x[2],
        x: p.x + x[3] * nrm[0],
        y: p.y + x[3] * nrm[1],
        psi: p.theta + x[4],
    }
}

fn relative_change(old: &Tightening, new: &Tightening) -> f64 {
    let mut scale: f64 = 0.0;
    let mut diff: f64 = 0.0;
    for (a, b) in old.track.iter().zip(&new.track) {
        scale = scale.max(a.abs()).max(b.abs());
        diff = diff.max((a - b).abs());
    }
    let mut fscale: f64 = 0.0;
    let mut fdiff: f64 = 0.0;
    for (a, b) in old.friction.iter().zip(&new.friction) {
        for j in 0..2 {
            fscale = fscale.max(a[j].abs()).max(b[j].abs());
            fdiff = fdiff.max((a[j] - b[j]).abs());
        }
    }
    let rel = |d: f64, s: f64| if s > 0.0 { d / s } else { 0.0 };
    rel(diff, scale).max(rel(fdiff, fscale))
}

impl<'a> Planner<'a> {
    pub fn new(track: &'a TrackGeometry, vehicle: &'a Vehicle, config: PlannerConfig) -> Result<Self> {
        vehicle.validate()?;
        config.noise.validate()?;
        config.backoff.validate()?;
        if track.closed == config.initial.is_some() {
            return Err(Error::Config("an initial state is required for open tracks and not allowed for closed ones".into()));
        }
        let grid = make_grid(track, config.intervals)?;
        if config.horizon < 1 || config.horizon >= config.intervals {
            return Err(Error::Config(format!("horizon {} must lie in [1, {})", config.horizon, config.intervals)));
        }
        Ok(Self { track, vehicle, config, grid })
    }

    fn transcription(&self, tightening: Tightening) -> Result<Transcription> {
        Transcription::new(
            &self.grid,
            self.vehicle,
            self.config.degree,
            tightening,
            self.config.weights,
            self.config.limits,
            self.config.initial,
        )
    }

    fn run(&self, tr: &Transcription, x0: &[f64], warm: Option<&IpmSolution>) -> Result<IpmSolution> {
        let mut opts = IpmOptions { tol: self.config.tol, compl_tol: 1e-9, max_iter: self.config.max_iter, ..IpmOptions::default() };
        if let Some(w) = warm {
            opts.warm = Some(WarmStart { y: w.y.clone(), zl: w.zl.clone(), zu: w.zu.clone(), mu: 1e-4 });
            opts.bound_push = 1e-4;
        }
        ipm::solve(tr, x0, &opts)
    }

    /// Mean path in Cartesian coordinates for covariance propagation.
    pub fn mean_path(&self, tr: &Transcription, x: &[f64]) -> MeanPath {
        let ds = self.grid.ds;
        let intervals = (0..tr.intervals)
            .map(|k| {
                let s0 = self.grid.s(k);
                let mut samples = vec![(0.0, frenet_to_state(self.track, s0, &tr.node_state(x, k)))];
                for (l, &t) in tr.colloc.tau.iter().enumerate() {
                    samples.push((t, frenet_to_state(self.track, s0 + t * ds, &tr.colloc_state(x, k, l))));
                }
                samples.push((1.0, frenet_to_state(self.track, s0 + ds, &tr.node_state(x, k + 1))));
                MeanInterval { dt: tr.interval_time(x, k), input: tr.interval_input(x, k), samples }
            })
            .collect();
        MeanPath { intervals, closed: self.grid.closed }
    }

    /// Back-offs implied by a solution for `variant`.
    pub fn backoffs_at(
        &self,
        tr: &Transcription,
        x: &[f64],
        variant: Variant,
        log: &mut Vec<String>,
    ) -> Result<(Tightening, Vec<BackoffValue>)> {
        let n = tr.intervals;
        let mut tight = Tightening::zero(n + 1);
        let mut values = Vec::new();
        let cfg = BackoffConfig { variant, ..self.config.backoff };
        if variant == Variant::Nom {
            return Ok((tight, values));
        }
        let mean = self.mean_path(tr, x);
        let reps = build_replicas(self.vehicle, &mean, &self.config.noise, self.config.horizon)?;
        for k in 0..n {
            let p = reps.last(k);
            if cfg.active(Constraint::Track) {
                let mult = cfg.multiplier(Constraint::Track)?;
                let mut b = track_backoff(k, p, self.grid.nodes[k].theta, mult)?;
                let half = 0.5 * (self.grid.nodes[k].w_left + self.grid.nodes[k].w_right);
                if b.beta > half - 0.05 {
                    log.push(format!(
                        "warning: track back-off {:.3} m at node {k} exceeds the corridor, clamped",
                        b.beta
                    ));
                    b.beta = half - 0.05;
                }
                tight.track[k] = b.beta;
                values.push(b);
            }
            for axle in Axle::BOTH {
                let c = Constraint::Friction(axle);
                if cfg.active(c) {
                    let node = &mean.intervals[k].samples[0].1;
                    let input = mean.intervals[k].input;
                    let mut b = friction_backoff(k, self.vehicle, node, &input, p, axle, cfg.multiplier(c)?)?;
                    if b.beta > 0.95 {
                        log.push(format!("warning: friction back-off {:.3} at node {k} clamped", b.beta));
                        b.beta = 0.95;
                    }
                    tight.friction[k][axle.index()] = b.beta;
                    values.push(b);
                }
            }
        }
        if tr.closed {
            tight.track[n] = tight.track[0];
            tight.friction[n] = tight.friction[0];
        }
        Ok((tight, values))
    }

    /// Nominal solve from the quasi-steady initial guess.
    pub fn solve_nominal(&self) -> Result<PlanResult> {
        let tr = self.transcription(Tightening::zero(self.grid.intervals + 1))?;
        let x0 = warmstart::initial_guess(&tr, &self.grid, self.vehicle);
        let sol = self.run(&tr, &x0, None)?;
        let mut log = vec![format!("nominal solve: {} iterations", sol.iterations)];
        log.extend(sol.log.iter().cloned());
        self.assemble(Variant::Nom, &tr, sol, Vec::new(), 0, true, log)
    }

    /// Robust variant warm-started from a nominal plan.
    pub fn solve_robust(&self, variant: Variant, nominal: &PlanResult) -> Result<PlanResult> {
        if variant == Variant::Nom {
            return Ok(nominal.clone());
        }
        let mut log = vec![format!("{variant} homotopy from the nominal plan")];
        let tr0 = self.transcription(nominal.tightening.clone())?;
        let (mut tight, mut values) = self.backoffs_at(&tr0, &nominal.solution.x, variant, &mut log)?;
        let mut prev = nominal.solution.clone();
        let mut iterations = nominal.stats.iterations;
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let tr = self.transcription(tight.clone())?;
            let mut x0 = prev.x.clone();
            tr.fill_slacks(&mut x0);
            let sol = self.run(&tr, &x0, Some(&prev))?;
            iterations += sol.iterations;
            log.push(format!("sweep {sweeps}: {} iterations, converged {}", sol.iterations, sol.converged));
            log.extend(sol.log.iter().cloned());
            let mut sweep_log = Vec::new();
            let (next, next_values) = self.backoffs_at(&tr, &sol.x, variant, &mut sweep_log)?;
            let change = relative_change(&tight, &next);
            log.push(format!("sweep {sweeps}: relative back-off change {change:.3e}"));
            log.extend(sweep_log);
            if change < self.config.sweep_tol || sweeps >= self.config.max_sweeps || !sol.converged {
                let settled = change < self.config.sweep_tol;
                if !settled {
                    log.push("warning: back-off sweeps stopped before settling".into());
                }
                let mut res = self.assemble(variant, &tr, sol, values, sweeps, settled, log)?;
                res.stats.iterations = iterations;
                return Ok(res);
            }
            tight = next;
            values = next_values;
            prev = sol;
        }
    }

    /// Nominal solve followed, for robust variants, by the back-off sweeps.
    pub fn plan(&self, variant: Variant) -> Result<PlanResult> {
        let nom = self.solve_nominal()?;
        if variant == Variant::Nom || !nom.stats.converged {
            return Ok(nom);
        }
        self.solve_robust(variant, &nom)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        variant: Variant,
        tr: &Transcription,
        sol: IpmSolution,
        backoffs: Vec<BackoffValue>,
        sweeps: usize,
        sweeps_converged: bool,
        log: Vec<String>,
    ) -> Result<PlanResult> {
        let x = &sol.x;
        let n = tr.intervals;
        let (lap_time, regularizer) = tr.cost_split(x);
        let mut t = 0.0;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut slack_mass = 0.0;
        for k in 0..=n {
            let xs = tr.node_state(x, k);
            let ki = if k < n { k } else if tr.closed { 0 } else { n - 1 };
            let input = tr.interval_input(x, ki);
            let s = self.grid.s(k);
            let st = frenet_to_state(self.track, s, &xs);
            let sat = [
                self.vehicle.axle_saturation(&st, &input, Axle::Front).unwrap_or(f64::NAN),
                self.vehicle.axle_saturation(&st, &input, Axle::Rear).unwrap_or(f64::NAN),
            ];
            let kt = if k < n || !tr.closed { k.min(n) } else { 0 };
            nodes.push(PlanNode {
                k,
                s,
                t,
                x: st.x,
                y: st.y,
                psi: st.psi,
                u: xs[0],
                v: xs[1],
                r: xs[2],
                n: xs[3],
                chi: xs[4],
                delta: input.delta,
                x2a: input.x2a,
                x2b: input.x2b,
                sideslip: xs[1].atan2(xs[0]),
                saturation: sat,
                beta_track: tr.tightening.track[kt],
                beta_friction: tr.tightening.friction[kt],
                friction_dual: tr.friction_duals(&sol.y, ki),
            });
            if k < n {
                t += tr.interval_time(x, k);
                slack_mass += tr.soft_slacks(x, k).iter().sum::<f64>();
            }
        }
        let stats = SolverStats {
            converged: sol.converged,
            iterations: sol.iterations,
            kkt_error: sol.kkt_error,
            constraint_violation: sol.constraint_violation,
            sweeps,
            sweeps_converged,
            slack_mass,
            regularizer,
            regularizer_share: regularizer / (lap_time + regularizer),
            variables: tr.size().variables,
            constraints: tr.size().constraints,
        };
        Ok(PlanResult {
            variant,
            lap_time,
            closed: tr.closed,
            nodes,
            backoffs,
            w_delta: tr.weights.w_delta,
            stats,
            log,
            tightening: tr.tightening.clone(),
            solution: sol,
        })
    }
}
