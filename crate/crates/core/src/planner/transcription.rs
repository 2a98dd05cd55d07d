//! Spatial-domain direct collocation of the minimum-lap-time problem.
//!
//! Per interval `k` the decision vector holds the node state `X_k = (u, v, r,
//! n, chi)`, the piecewise-constant input `U_k = (X2a, X2b, delta)`, three soft
//! slacks (corridor, front and rear friction), `d` collocation states and one
//! slack per inequality. Time is eliminated: the lap time is the quadrature
//! of `1 / s_dot` over the collocation points.

use crate::ad::{Hyper, Scalar};
use crate::error::{Error, Result};
use crate::planner::collocation::CollocationGrid;
use crate::planner::ipm::Nlp;
use crate::track::SpatialGrid;
use crate::vehicle::{Input, Vehicle, GRAVITY};

pub const NX: usize = 5;
pub const NU: usize = 3;
const NSOFT: usize = 3;
const NINEQ: usize = 7;
/// Variable scaling of the node states.
pub const STATE_SCALE: [f64; NX] = [10.0, 1.0, 1.0, 1.0, 1.0];

/// Cost weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    /// Steering-smoothness weight on `sum (d delta)^2 / ds` [s m / rad^2].
    pub w_delta: f64,
    /// L1 weight on soft slacks [s per unit].
    pub w_slack: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w_delta: 0.5, w_slack: 1e3 }
    }
}

/// Bounds and limits that are not vehicle parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub u_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub r_max: f64,
    pub chi_max: f64,
    /// Allowed value of `X2a * |X2b|` in units of `(m g)^2`.
    pub complementarity: f64,
    /// Minimum axle load as a fraction of its static load.
    pub min_load_fraction: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            u_min: 2.0,
            u_max: 100.0,
            v_max: 20.0,
            r_max: 3.0,
            chi_max: 1.2,
            complementarity: 1e-4,
            min_load_fraction: 0.1,
        }
    }
}

/// Per-node constraint tightenings.
#[derive(Clone, Debug, PartialEq)]
pub struct Tightening {
    pub track: Vec<f64>,
    pub friction: Vec<[f64; 2]>,
}

impl Tightening {
    pub fn zero(nodes: usize) -> Self {
        Self { track: vec![0.0; nodes], friction: vec![[0.0; 2]; nodes] }
    }
}

/// The transcribed program.
#[derive(Clone, Debug)]
pub struct Transcription {
    pub vehicle: Vehicle,
    pub colloc: CollocationGrid,
    pub intervals: usize,
    pub closed: bool,
    pub ds: f64,
    pub s0: Vec<f64>,
    kappa_c: Vec<f64>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
    kappa_n: Vec<f64>,
    pub tightening: Tightening,
    pub weights: Weights,
    pub limits: Limits,
    /// Fixed initial state (physical units) for open problems.
    pub initial: Option<[f64; NX]>,
    mg: f64,
    stage_len: usize,
    cons_len: usize,
}

/// Counts reported by the assembler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProblemSize {
    pub variables: usize,
    pub constraints: usize,
    pub dynamics_residuals: usize,
    pub continuity: usize,
    pub inequalities: usize,
    pub boundary: usize,
}

impl Transcription {
    pub fn new(
        grid: &SpatialGrid,
        vehicle: &Vehicle,
        degree: usize,
        tightening: Tightening,
        weights: Weights,
        limits: Limits,
        initial: Option<[f64; NX]>,
    ) -> Result<Self> {
        let n = grid.intervals;
        let colloc = CollocationGrid::gauss_legendre(degree)?;
        if grid.nodes.len() != n + 1 {
            return Err(Error::Transcription(format!("grid has {} nodes for {n} intervals", grid.nodes.len())));
        }
        if tightening.track.len() < n || tightening.friction.len() < n {
            return Err(Error::Transcription("tightening shorter than the grid".into()));
        }
        if grid.closed == initial.is_some() {
            return Err(Error::Transcription(
                "closed grids are periodic; open grids need an initial state".into(),
            ));
        }
        let mut kappa_c = Vec::with_capacity(n * degree);
        for k in 0..n {
            for &t in &colloc.tau {
                kappa_c.push(grid.kappa_at(grid.s(k) + t * grid.ds));
            }
        }
        let stage_len = NX + NU + NSOFT + degree * NX + NINEQ;
        let cons_len = NX * degree + NINEQ + NX;
        Ok(Self {
            vehicle: *vehicle,
            intervals: n,
            closed: grid.closed,
            ds: grid.ds,
            s0: (0..=n).map(|k| grid.s(k)).collect(),
            kappa_c,
            w_left: grid.nodes.iter().map(|p| p.w_left).collect(),
            w_right: grid.nodes.iter().map(|p| p.w_right).collect(),
            kappa_n: grid.nodes.iter().map(|p| p.kappa).collect(),
            tightening,
            weights,
            limits,
            initial,
            mg: vehicle.chassis.m * GRAVITY,
            colloc,
            stage_len,
            cons_len,
        })
    }

    pub fn degree(&self) -> usize {
        self.colloc.degree
    }

    pub fn size(&self) -> ProblemSize {
        let (variables, constraints) = self.dims();
        let n = self.intervals;
        ProblemSize {
            variables,
            constraints,
            dynamics_residuals: n * NX * self.degree(),
            continuity: n * NX,
            inequalities: n * NINEQ,
            boundary: if self.closed { 0 } else { NX },
        }
    }

    // ---- index maps ----

    pub fn ix_x(&self, k: usize) -> usize {
        if k == self.intervals && self.closed {
            0
        } else {
            k * self.stage_len
        }
    }

    pub fn ix_u(&self, k: usize) -> usize {
        k * self.stage_len + NX
    }

    fn ix_soft(&self, k: usize) -> usize {
        k * self.stage_len + NX + NU
    }

    pub fn ix_xi(&self, k: usize, l: usize) -> usize {
        k * self.stage_len + NX + NU + NSOFT + l * NX
    }

    fn ix_s(&self, k: usize) -> usize {
        k * self.stage_len + NX + NU + NSOFT + self.degree() * NX
    }

    fn row_colloc(&self, k: usize, l: usize) -> usize {
        k * self.cons_len + l * NX
    }

    fn row_ineq(&self, k: usize) -> usize {
        k * self.cons_len + NX * self.degree()
    }

    /// Multipliers of the front and rear friction rows of interval `k`.
    pub fn friction_duals(&self, y: &[f64], k: usize) -> [f64; 2] {
        let row = self.row_ineq(k) + 2;
        [y[row].abs(), y[row + 1].abs()]
    }

    fn row_cont(&self, k: usize) -> usize {
        k * self.cons_len + NX * self.degree() + NINEQ
    }

    fn row_init(&self) -> usize {
        self.intervals * self.cons_len
    }

    // ---- model pieces, generic over the scalar type ----

    /// Spatial derivative of the scaled state and `1 / s_dot`.
    pub fn spatial_rhs<T: Scalar>(&self, x: &[T; NX], u: &[T; NU], kappa: f64) -> ([T; NX], T) {
        let uu = x[0] * STATE_SCALE[0];
        let (v, r, n, chi) = (x[1], x[2], x[3], x[4]);
        let input = [u[0] * self.mg, u[1] * self.mg, u[2]];
        let (sc, cc) = (chi.sin(), chi.cos());
        let inv = (-(n * kappa) + 1.0) / (uu * cc - v * sc);
        let rates = self.vehicle.body_rates_generic(uu, v, r, input);
        (
            [
                rates[0] * inv / STATE_SCALE[0],
                rates[1] * inv,
                rates[2] * inv,
                (uu * sc + v * cc) * inv,
                r * inv - kappa,
            ],
            inv,
        )
    }

    /// `[S_1, S_2, power ratio, traction-brake product]` at a node.
    pub fn node_functions<T: Scalar>(&self, x: &[T; NX], u: &[T; NU]) -> [T; 4] {
        let uu = x[0] * STATE_SCALE[0];
        let input = [u[0] * self.mg, u[1] * self.mg, u[2]];
        let sat = self.vehicle.saturation_generic(uu, x[1], x[2], input);
        [sat[0], sat[1], u[0] * uu * (self.mg / self.vehicle.chassis.p_max), -(u[0] * u[1])]
    }

    fn load_band(&self) -> (f64, f64) {
        let c = &self.vehicle.chassis;
        let [z1, z2] = self.vehicle.static_loads();
        let zmin = self.limits.min_load_fraction;
        let k = c.wheelbase / c.h_g / self.mg;
        (-(z2 * (1.0 - zmin)) * k, z1 * (1.0 - zmin) * k)
    }

    // ---- decoding ----

    fn arr<const N: usize>(x: &[f64], at: usize) -> [f64; N] {
        std::array::from_fn(|i| x[at + i])
    }

    /// Node state in physical units.
    pub fn node_state(&self, x: &[f64], k: usize) -> [f64; NX] {
        let s: [f64; NX] = Self::arr(x, self.ix_x(k));
        std::array::from_fn(|i| s[i] * STATE_SCALE[i])
    }

    pub fn colloc_state(&self, x: &[f64], k: usize, l: usize) -> [f64; NX] {
        let s: [f64; NX] = Self::arr(x, self.ix_xi(k, l));
        std::array::from_fn(|i| s[i] * STATE_SCALE[i])
    }

    pub fn interval_input(&self, x: &[f64], k: usize) -> Input {
        let u: [f64; NU] = Self::arr(x, self.ix_u(k));
        Input { x2a: u[0] * self.mg, x2b: u[1] * self.mg, delta: u[2] }
    }

    pub fn soft_slacks(&self, x: &[f64], k: usize) -> [f64; NSOFT] {
        Self::arr(x, self.ix_soft(k))
    }

    pub fn kappa_colloc(&self, k: usize, l: usize) -> f64 {
        self.kappa_c[k * self.degree() + l]
    }

    /// Time spent in interval `k`.
    pub fn interval_time(&self, x: &[f64], k: usize) -> f64 {
        let u: [f64; NU] = Self::arr(x, self.ix_u(k));
        (0..self.degree())
            .map(|l| {
                let xi: [f64; NX] = Self::arr(x, self.ix_xi(k, l));
                self.ds * self.colloc.b[l] * self.spatial_rhs(&xi, &u, self.kappa_colloc(k, l)).1
            })
            .sum()
    }

    /// Lap time and steering-regularizer value.
    pub fn cost_split(&self, x: &[f64]) -> (f64, f64) {
        let n = self.intervals;
        let t = (0..n).map(|k| self.interval_time(x, k)).sum();
        let mut reg = 0.0;
        for k in 0..n {
            if let Some(next) = self.next_interval(k) {
                let d = x[self.ix_u(next) + 2] - x[self.ix_u(k) + 2];
                reg += self.weights.w_delta * d * d / self.ds;
            }
        }
        (t, reg)
    }

    fn next_interval(&self, k: usize) -> Option<usize> {
        if k + 1 < self.intervals {
            Some(k + 1)
        } else if self.closed {
            Some(0)
        } else {
            None
        }
    }

    /// Encodes physical node/collocation states and inputs into a decision
    /// vector; slacks are set consistently with the constraint functions.
    pub fn encode(&self, nodes: &[[f64; NX]], colloc: &[Vec<[f64; NX]>], inputs: &[Input]) -> Vec<f64> {
        let (nv, _) = self.dims();
        let mut x = vec![0.0; nv];
        let scale = |s: &[f64; NX]| -> [f64; NX] { std::array::from_fn(|i| s[i] / STATE_SCALE[i]) };
        let last = if self.closed { self.intervals } else { self.intervals + 1 };
        for k in 0..last {
            let at = self.ix_x(k);
            x[at..at + NX].copy_from_slice(&scale(&nodes[k]));
        }
        for k in 0..self.intervals {
            let u = [inputs[k].x2a / self.mg, inputs[k].x2b / self.mg, inputs[k].delta];
            let at = self.ix_u(k);
            x[at..at + NU].copy_from_slice(&u);
            for l in 0..self.degree() {
                let at = self.ix_xi(k, l);
                x[at..at + NX].copy_from_slice(&scale(&colloc[k][l]));
            }
        }
        self.fill_slacks(&mut x);
        x
    }

    /// Sets inequality slacks to their constraint values and soft slacks to the
    /// smallest value consistent with the slack bounds.
    pub fn fill_slacks(&self, x: &mut [f64]) {
        let (lb, ub) = self.bounds();
        for k in 0..self.intervals {
            let xs: [f64; NX] = Self::arr(x, self.ix_x(k));
            let us: [f64; NU] = Self::arr(x, self.ix_u(k));
            let g = self.node_functions(&xs, &us);
            let si = self.ix_s(k);
            let so = self.ix_soft(k);
            let n = xs[3];
            let soft = [
                (n - ub[si]).max(lb[si + 1] - n).max(0.0),
                (g[0] - ub[si + 2]).max(0.0),
                (g[1] - ub[si + 3]).max(0.0),
            ];
            x[so..so + NSOFT].copy_from_slice(&soft);
            let vals = [n - soft[0], n + soft[0], g[0] - soft[1], g[1] - soft[2], g[2], g[3], us[0] + us[1]];
            x[si..si + NINEQ].copy_from_slice(&vals);
        }
    }

    /// Walks every derivative entry in a fixed order.
    fn walk(
        &self,
        x: &[f64],
        obj_factor: f64,
        y: &[f64],
        grad: &mut [f64],
        jac: &mut impl FnMut(usize, usize, f64),
        hess: &mut impl FnMut(usize, usize, f64),
    ) {
        let d = self.degree();
        let ds = self.ds;
        let c = &self.colloc;
        let mut emit_h = |ia: usize, ib: usize, v: f64| hess(ia.max(ib), ia.min(ib), v);
        for k in 0..self.intervals {
            let ixk = self.ix_x(k);
            let iu = self.ix_u(k);
            let us: [f64; NU] = Self::arr(x, iu);
            // collocation residuals and lap-time quadrature
            for l in 0..d {
                let ixi = self.ix_xi(k, l);
                let xi: [f64; NX] = Self::arr(x, ixi);
                let z = Hyper::<8>::vars(&[xi[0], xi[1], xi[2], xi[3], xi[4], us[0], us[1], us[2]]);
                let (f, inv) = self.spatial_rhs(
                    &[z[0], z[1], z[2], z[3], z[4]],
                    &[z[5], z[6], z[7]],
                    self.kappa_colloc(k, l),
                );
                let idx: [usize; 8] = std::array::from_fn(|a| if a < NX { ixi + a } else { iu + a - NX });
                let wq = ds * c.b[l];
                for a in 0..8 {
                    grad[idx[a]] += wq * inv.g[a];
                }
                let row = self.row_colloc(k, l);
                for i in 0..NX {
                    jac(row + i, ixk + i, c.c[0][l]);
                    for j in 0..d {
                        if j != l {
                            jac(row + i, self.ix_xi(k, j) + i, c.c[j + 1][l]);
                        }
                    }
                    for a in 0..NX {
                        let diag = if a == i { c.c[l + 1][l] } else { 0.0 };
                        jac(row + i, ixi + a, diag - ds * f[i].g[a]);
                    }
                    for a in 0..NU {
                        jac(row + i, iu + a, -ds * f[i].g[NX + a]);
                    }
                }
                for a in 0..8 {
                    for b in 0..=a {
                        let mut h = obj_factor * wq * inv.h[a][b];
                        for i in 0..NX {
                            h -= y[row + i] * ds * f[i].h[a][b];
                        }
                        emit_h(idx[a], idx[b], h);
                    }
                }
            }

            // node inequalities
            let xs: [f64; NX] = Self::arr(x, ixk);
            let z = Hyper::<8>::vars(&[xs[0], xs[1], xs[2], xs[3], xs[4], us[0], us[1], us[2]]);
            let g = self.node_functions(&[z[0], z[1], z[2], z[3], z[4]], &[z[5], z[6], z[7]]);
            let idx: [usize; 8] = std::array::from_fn(|a| if a < NX { ixk + a } else { iu + a - NX });
            let row = self.row_ineq(k);
            let so = self.ix_soft(k);
            let si = self.ix_s(k);
            jac(row, ixk + 3, 1.0);
            jac(row, so, -1.0);
            jac(row, si, -1.0);
            jac(row + 1, ixk + 3, 1.0);
            jac(row + 1, so, 1.0);
            jac(row + 1, si + 1, -1.0);
            for (q, gq) in g.iter().enumerate() {
                for a in 0..8 {
                    jac(row + 2 + q, idx[a], gq.g[a]);
                }
                if q < 2 {
                    jac(row + 2 + q, so + 1 + q, -1.0);
                }
                jac(row + 2 + q, si + 2 + q, -1.0);
            }
            jac(row + 6, iu, 1.0);
            jac(row + 6, iu + 1, 1.0);
            jac(row + 6, si + 6, -1.0);
            for a in 0..8 {
                for b in 0..=a {
                    let h: f64 = (0..4).map(|q| y[row + 2 + q] * g[q].h[a][b]).sum();
                    emit_h(idx[a], idx[b], h);
                }
            }

            // continuity
            let row = self.row_cont(k);
            let ixn = self.ix_x(k + 1);
            for i in 0..NX {
                jac(row + i, ixn + i, 1.0);
                jac(row + i, ixk + i, -c.d[0]);
                for j in 0..d {
                    jac(row + i, self.ix_xi(k, j) + i, -c.d[j + 1]);
                }
            }

            // soft slack penalty and steering smoothness
            for q in 0..NSOFT {
                grad[so + q] += self.weights.w_slack;
            }
            if let Some(next) = self.next_interval(k) {
                let (a, b) = (iu + 2, self.ix_u(next) + 2);
                let w = 2.0 * self.weights.w_delta / ds;
                let dd = x[b] - x[a];
                grad[a] -= w * dd;
                grad[b] += w * dd;
                emit_h(a, a, obj_factor * w);
                emit_h(b, b, obj_factor * w);
                emit_h(a, b, -obj_factor * w);
            }
        }
        if !self.closed {
            let row = self.row_init();
            for i in 0..NX {
                jac(row + i, i, 1.0);
            }
        }
    }
}

impl Nlp for Transcription {
    fn dims(&self) -> (usize, usize) {
        let n = self.intervals;
        if self.closed {
            (n * self.stage_len, n * self.cons_len)
        } else {
            (n * self.stage_len + NX, n * self.cons_len + NX)
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (nv, _) = self.dims();
        let mut lb = vec![f64::NEG_INFINITY; nv];
        let mut ub = vec![f64::INFINITY; nv];
        let lim = &self.limits;
        let ch = &self.vehicle.chassis;
        let inf = f64::INFINITY;
        let state_box = |k: usize, lb: &mut [f64], ub: &mut [f64], at: usize| {
            let (wl, wr, kap) = (self.w_left[k], self.w_right[k], self.kappa_n[k]);
            // keep 1 - n kappa away from zero on the inside of the bend
            let mut n_hi = wl + 0.5;
            let mut n_lo = -wr - 0.5;
            if kap > 0.0 {
                n_hi = n_hi.min(0.9 / kap);
            } else if kap < 0.0 {
                n_lo = n_lo.max(0.9 / kap);
            }
            let lo = [lim.u_min, -lim.v_max, -lim.r_max, n_lo, -lim.chi_max];
            let hi = [lim.u_max, lim.v_max, lim.r_max, n_hi, lim.chi_max];
            for i in 0..NX {
                lb[at + i] = lo[i] / STATE_SCALE[i];
                ub[at + i] = hi[i] / STATE_SCALE[i];
            }
        };
        let (load_lo, load_hi) = self.load_band();
        for k in 0..self.intervals {
            state_box(k, &mut lb, &mut ub, self.ix_x(k));
            for l in 0..self.degree() {
                state_box(k, &mut lb, &mut ub, self.ix_xi(k, l));
            }
            let iu = self.ix_u(k);
            lb[iu] = 0.0;
            ub[iu] = ch.x2a_max / self.mg;
            lb[iu + 1] = -ch.x2b_max / self.mg;
            ub[iu + 1] = 0.0;
            lb[iu + 2] = -ch.delta_max;
            ub[iu + 2] = ch.delta_max;
            let so = self.ix_soft(k);
            for q in 0..NSOFT {
                lb[so + q] = 0.0;
            }
            let si = self.ix_s(k);
            let bt = self.tightening.track[k];
            let [bf1, bf2] = self.tightening.friction[k];
            let slack_bounds = [
                (-inf, self.w_left[k] - bt),
                (-self.w_right[k] + bt, inf),
                (-inf, 1.0 - bf1),
                (-inf, 1.0 - bf2),
                (-inf, 1.0),
                (-inf, lim.complementarity),
                (load_lo, load_hi),
            ];
            for (q, (l, u)) in slack_bounds.into_iter().enumerate() {
                lb[si + q] = l;
                ub[si + q] = u;
            }
        }
        if !self.closed {
            state_box(self.intervals, &mut lb, &mut ub, self.ix_x(self.intervals));
        }
        (lb, ub)
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let (nv, m) = self.dims();
        let x = vec![0.5; nv];
        let mut s = Vec::new();
        self.walk(&x, 1.0, &vec![0.0; m], &mut vec![0.0; nv], &mut |r, c, _| s.push((r, c)), &mut |_, _, _| {});
        s
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let (nv, m) = self.dims();
        let x = vec![0.5; nv];
        let mut s = Vec::new();
        self.walk(&x, 1.0, &vec![0.0; m], &mut vec![0.0; nv], &mut |_, _, _| {}, &mut |r, c, _| s.push((r, c)));
        s
    }

    fn eval(&self, x: &[f64], c: &mut [f64]) -> f64 {
        let d = self.degree();
        let cg = &self.colloc;
        let mut f = 0.0;
        for k in 0..self.intervals {
            let xk: [f64; NX] = Self::arr(x, self.ix_x(k));
            let us: [f64; NU] = Self::arr(x, self.ix_u(k));
            let pts: Vec<[f64; NX]> =
                std::iter::once(xk).chain((0..d).map(|l| Self::arr(x, self.ix_xi(k, l)))).collect();
            for l in 0..d {
                let (fl, inv) = self.spatial_rhs(&pts[l + 1], &us, self.kappa_colloc(k, l));
                f += self.ds * cg.b[l] * inv;
                let row = self.row_colloc(k, l);
                for i in 0..NX {
                    let deriv: f64 = (0..=d).map(|j| cg.c[j][l] * pts[j][i]).sum();
                    c[row + i] = deriv - self.ds * fl[i];
                }
            }
            let g = self.node_functions(&xk, &us);
            let so: [f64; NSOFT] = Self::arr(x, self.ix_soft(k));
            let s: [f64; NINEQ] = Self::arr(x, self.ix_s(k));
            let row = self.row_ineq(k);
            let vals = [
                xk[3] - so[0],
                xk[3] + so[0],
                g[0] - so[1],
                g[1] - so[2],
                g[2],
                g[3],
                us[0] + us[1],
            ];
            for q in 0..NINEQ {
                c[row + q] = vals[q] - s[q];
            }
            let xn: [f64; NX] = Self::arr(x, self.ix_x(k + 1));
            let row = self.row_cont(k);
            for i in 0..NX {
                let end: f64 = (0..=d).map(|j| cg.d[j] * pts[j][i]).sum();
                c[row + i] = xn[i] - end;
            }
            f += self.weights.w_slack * so.iter().sum::<f64>();
            if let Some(next) = self.next_interval(k) {
                let dd = x[self.ix_u(next) + 2] - us[2];
                f += self.weights.w_delta * dd * dd / self.ds;
            }
        }
        if let Some(init) = self.initial {
            let row = self.row_init();
            for i in 0..NX {
                c[row + i] = x[i] - init[i] / STATE_SCALE[i];
            }
        }
        f
    }

    fn eval_derivatives(
        &self,
        x: &[f64],
        obj_factor: f64,
        y: &[f64],
        grad: &mut [f64],
        jac: &mut [f64],
        hess: &mut [f64],
    ) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mut ij, mut ih) = (0, 0);
        self.walk(
            x,
            obj_factor,
            y,
            grad,
            &mut |_, _, v| {
                jac[ij] = v;
                ij += 1;
            },
            &mut |_, _, v| {
                hess[ih] = v;
                ih += 1;
            },
        );
        debug_assert_eq!(ij, jac.len());
        debug_assert_eq!(ih, hess.len());
    }

    fn kkt_ordering(&self) -> Vec<usize> {
        let (nv, m) = self.dims();
        let n = self.intervals;
        let mut order = Vec::with_capacity(nv + m);
        // the periodic coupling of the last stage to X_0 and delta_0 is moved
        // to a small border eliminated last
        let border: Vec<usize> = if self.closed {
            (0..NX).chain(std::iter::once(self.ix_u(0) + 2)).collect()
        } else {
            Vec::new()
        };
        for k in 0..n {
            let v0 = k * self.stage_len;
            order.extend((v0..v0 + self.stage_len).filter(|i| !border.contains(i)));
            if k == 0 && !self.closed {
                order.extend((0..NX).map(|i| nv + self.row_init() + i));
            }
            let r0 = nv + k * self.cons_len;
            order.extend(r0..r0 + self.cons_len);
        }
        if !self.closed {
            let at = self.ix_x(n);
            order.extend(at..at + NX);
        }
        order.extend(border);
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::make_grid;
    use crate::tracks;

    fn small() -> Transcription {
        let track = tracks::circle(50.0, 1.0, 5.0).unwrap();
        let grid = make_grid(&track, 20).unwrap();
        Transcription::new(&grid, &Vehicle::default(), 3, Tightening::zero(20), Weights::default(), Limits::default(), None)
            .unwrap()
    }

    #[test]
    fn counts() {
        let track = tracks::circle(50.0, 1.0, 5.0).unwrap();
        let grid = make_grid(&track, 100).unwrap();
        let t = Transcription::new(&grid, &Vehicle::default(), 3, Tightening::zero(100), Weights::default(), Limits::default(), None)
            .unwrap();
        let s = t.size();
        assert_eq!(s.dynamics_residuals, 1500);
        assert_eq!(s.constraints, 100 * (15 + 7 + 5));
        assert_eq!(s.variables, 100 * 33);
        let mut order = t.kkt_ordering();
        order.sort_unstable();
        assert!(order.iter().enumerate().all(|(i, &v)| i == v));
    }

    #[test]
    fn constant_speed_quadrature() {
        // straight open strip at 20 m/s: 2600 m take 130 s
        let samples: Vec<_> = (0..=100)
            .map(|i| crate::track::CenterlineSample { s: i as f64 * 26.0, x: i as f64 * 26.0, y: 0.0, w_left: 5.0, w_right: 5.0 })
            .collect();
        let track = crate::track::TrackGeometry::from_samples(&samples, false).unwrap();
        let grid = make_grid(&track, 100).unwrap();
        let init = [20.0, 0.0, 0.0, 0.0, 0.0];
        let t = Transcription::new(&grid, &Vehicle::default(), 3, Tightening::zero(100), Weights::default(), Limits::default(), Some(init))
            .unwrap();
        let nodes = vec![init; 101];
        let colloc = vec![vec![init; 3]; 100];
        let x = t.encode(&nodes, &colloc, &vec![Input::default(); 100]);
        let (lt, reg) = t.cost_split(&x);
        assert!((lt - 130.0).abs() < 1e-9);
        assert_eq!(reg, 0.0);
        let mut c = vec![0.0; t.dims().1];
        t.eval(&x, &mut c);
        assert!(c.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn jacobian_and_hessian_match_differences() {
        use rand::{Rng, SeedableRng};
        let t = small();
        let (nv, m) = t.dims();
        let (lb, ub) = t.bounds();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..nv)
            .map(|i| {
                let (l, u) = (lb[i].max(-2.0), ub[i].min(2.0));
                l + (u - l) * rng.random_range(0.3..0.7)
            })
            .collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let js = t.jacobian_structure();
        let hs = t.hessian_structure();
        let mut g = vec![0.0; nv];
        let mut jv = vec![0.0; js.len()];
        let mut hv = vec![0.0; hs.len()];
        t.eval_derivatives(&x, 1.0, &y, &mut g, &mut jv, &mut hv);
        let mut jd = vec![vec![0.0; nv]; m];
        for (&(r, c), v) in js.iter().zip(&jv) {
            jd[r][c] += v;
        }
        let lagr_grad = |x: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; nv];
            let mut jv = vec![0.0; js.len()];
            let mut hv = vec![0.0; hs.len()];
            t.eval_derivatives(x, 1.0, &y, &mut g, &mut jv, &mut hv);
            for (&(r, c), v) in js.iter().zip(&jv) {
                g[c] += y[r] * v;
            }
            g
        };
        let mut hd = vec![vec![0.0; nv]; nv];
        for (&(r, c), v) in hs.iter().zip(&hv) {
            hd[r][c] += v;
            if r != c {
                hd[c][r] += v;
            }
        }
        let mut cp = vec![0.0; m];
        let mut cm = vec![0.0; m];
        for j in (0..nv).step_by(7) {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let fp = t.eval(&xp, &mut cp);
            let gp = lagr_grad(&xp);
            let mut xm = x.clone();
            xm[j] -= h;
            let fm = t.eval(&xm, &mut cm);
            let gm = lagr_grad(&xm);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "grad {j}: {fd} vs {}", g[j]);
            for r in 0..m {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                assert!((fd - jd[r][j]).abs() <= 1e-5 * jd[r][j].abs().max(1.0), "jac ({r},{j}): {fd} vs {}", jd[r][j]);
            }
            for i in 0..nv {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - hd[i][j]).abs() <= 1e-4 * hd[i][j].abs().max(1.0), "hess ({i},{j}): {fd} vs {}", hd[i][j]);
            }
        }
    }
}
