//! Primal-dual interior-point method with filter line search for
//!
//! ```text
//! min f(x)  s.t.  c(x) = 0,  x_L <= x <= x_U
//! ```
//!
//! using exact first and second derivatives supplied by the problem.

use crate::error::{Error, Result};
use crate::planner::ldl::{Factor, SymbolicLdl};

/// Smooth nonlinear program with sparse derivatives.
pub trait Nlp {
    /// Number of variables and of equality constraints.
    fn dims(&self) -> (usize, usize);
    /// Variable bounds; infinite entries mean "unbounded".
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Jacobian pattern as (row, column) pairs.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    /// Lower-triangle Hessian pattern as (row, column) pairs with row >= column.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Objective value; fills the constraint residuals.
    fn eval(&self, x: &[f64], c: &mut [f64]) -> f64;
    /// Objective gradient, Jacobian values and the Hessian of
    /// `obj_factor * f + y^T c`, in the orders of the structure calls.
    fn eval_derivatives(
        &self,
        x: &[f64],
        obj_factor: f64,
        y: &[f64],
        grad: &mut [f64],
        jac: &mut [f64],
        hess: &mut [f64],
    );
    /// Elimination order for the KKT matrix, variables indexed `0..n` and
    /// constraints `n..n + m`.
    fn kkt_ordering(&self) -> Vec<usize> {
        let (n, m) = self.dims();
        (0..n + m).collect()
    }
}

#[derive(Clone, Debug)]
pub struct WarmStart {
    pub y: Vec<f64>,
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct IpmOptions {
    pub tol: f64,
    /// Bound on the unscaled complementarity at termination.
    pub compl_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub bound_push: f64,
    pub warm: Option<WarmStart>,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, compl_tol: 1e-4, max_iter: 3000, mu_init: 0.1, bound_push: 1e-2, warm: None }
    }
}

#[derive(Clone, Debug)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Scaled optimality error at the returned point.
    pub kkt_error: f64,
    /// Infinity norm of the constraint residuals.
    pub constraint_violation: f64,
    pub converged: bool,
    pub mu: f64,
    pub log: Vec<String>,
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const ETA_PHI: f64 = 1e-8;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const KAPPA_SIGMA: f64 = 1e10;
const PIVOT_TOL: f64 = 1e-13;
const STATIC_REG: f64 = 1e-11;

struct Kkt {
    sym: SymbolicLdl,
    /// Hessian entries first, then Jacobian entries.
    vals: Vec<f64>,
    shift: Vec<f64>,
    sign: Vec<f64>,
    nh: usize,
}

struct Solver<'a, P: Nlp> {
    nlp: &'a P,
    n: usize,
    m: usize,
    xl: Vec<f64>,
    xu: Vec<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    jac_rows: Vec<usize>,
    jac_cols: Vec<usize>,
    kkt: Kkt,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Largest step in (0, 1] keeping `v + a dv >= (1 - tau) v` for positive `v`.
fn fraction_to_boundary(v: &[f64], dv: &[f64], active: &[bool], tau: f64) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if active[i] && dv[i] < 0.0 {
            a = a.min(-tau * v[i] / dv[i]);
        }
    }
    a
}

impl<P: Nlp> Solver<'_, P> {
    fn slacks(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sl = (0..self.n).map(|i| if self.has_l[i] { x[i] - self.xl[i] } else { 1.0 }).collect();
        let su = (0..self.n).map(|i| if self.has_u[i] { self.xu[i] - x[i] } else { 1.0 }).collect();
        (sl, su)
    }

    fn barrier(&self, f: f64, x: &[f64], mu: f64) -> f64 {
        let mut b = f;
        for i in 0..self.n {
            if self.has_l[i] {
                b -= mu * (x[i] - self.xl[i]).ln();
            }
            if self.has_u[i] {
                b -= mu * (self.xu[i] - x[i]).ln();
            }
        }
        b
    }

    fn jt_times(&self, jac: &[f64], y: &[f64], out: &mut [f64]) {
        for ((&r, &c), &v) in self.jac_rows.iter().zip(&self.jac_cols).zip(jac) {
            out[c] += v * y[r];
        }
    }

    fn in_interior(&self, x: &[f64]) -> bool {
        (0..self.n).all(|i| (!self.has_l[i] || x[i] > self.xl[i]) && (!self.has_u[i] || x[i] < self.xu[i]))
    }

    /// Factors the KKT matrix with inertia correction; returns the factor and
    /// the primal regularization used.
    fn factor(&mut self, sigma: &[f64], mu: f64, last_dw: &mut f64) -> Result<(Factor, f64)> {
        let (n, m) = (self.n, self.m);
        let mut dw = 0.0f64;
        let mut dc = 0.0f64;
        for _ in 0..80 {
            for i in 0..n {
                self.kkt.shift[i] = sigma[i] + dw + STATIC_REG;
            }
            for j in 0..m {
                self.kkt.shift[n + j] = -dc - STATIC_REG;
            }
            let f = self.kkt.sym.factor(&self.kkt.vals, &self.kkt.shift, &self.kkt.sign, PIVOT_TOL);
            if (f.bumped_negative > 0 || f.negative < m) && dc == 0.0 {
                dc = 1e-8 * mu.powf(0.25);
                continue;
            }
            if f.bumped_positive == 0 && f.bumped_negative == 0 && f.negative == m {
                if dw > 0.0 {
                    *last_dw = dw;
                }
                return Ok((f, dw));
            }
            dw = if dw == 0.0 {
                if *last_dw == 0.0 {
                    1e-4
                } else {
                    (*last_dw / 3.0).max(1e-20)
                }
            } else if *last_dw == 0.0 {
                dw * 100.0
            } else {
                dw * 8.0
            };
            if dw > 1e40 {
                break;
            }
        }
        Err(Error::InfeasibleProblem("KKT matrix could not be regularized".into()))
    }

    fn solve_kkt(&self, f: &Factor, rhs: &[f64]) -> Vec<f64> {
        let mut sol = vec![0.0; rhs.len()];
        self.kkt.sym.solve_refined(f, &self.kkt.vals, &self.kkt.shift, rhs, &mut sol, 5);
        sol
    }
}

/// Solves the program from `x0`.
pub fn solve<P: Nlp>(nlp: &P, x0: &[f64], opts: &IpmOptions) -> Result<IpmSolution> {
    let (n, m) = nlp.dims();
    if x0.len() != n {
        return Err(Error::Transcription(format!("start vector has {} entries, expected {n}", x0.len())));
    }
    let (xl, xu) = nlp.bounds();
    let has_l: Vec<bool> = xl.iter().map(|v| v.is_finite()).collect();
    let has_u: Vec<bool> = xu.iter().map(|v| v.is_finite()).collect();
    for i in 0..n {
        if has_l[i] && has_u[i] && !(xl[i] < xu[i]) {
            return Err(Error::Transcription(format!("variable {i} has empty or fixed bounds")));
        }
    }
    let jac_s = nlp.jacobian_structure();
    let hess_s = nlp.hessian_structure();
    let nh = hess_s.len();
    let (mut rows, mut cols) = (Vec::with_capacity(nh + jac_s.len()), Vec::with_capacity(nh + jac_s.len()));
    for &(r, c) in &hess_s {
        debug_assert!(r >= c);
        rows.push(r);
        cols.push(c);
    }
    for &(r, c) in &jac_s {
        rows.push(n + r);
        cols.push(c);
    }
    let sym = SymbolicLdl::new(n + m, &rows, &cols, nlp.kkt_ordering());
    let mut sign = vec![1.0; n];
    sign.extend(std::iter::repeat_n(-1.0, m));
    let kkt = Kkt { sym, vals: vec![0.0; rows.len()], shift: vec![0.0; n + m], sign, nh };
    let mut s = Solver {
        nlp,
        n,
        m,
        xl,
        xu,
        has_l,
        has_u,
        jac_rows: jac_s.iter().map(|p| p.0).collect(),
        jac_cols: jac_s.iter().map(|p| p.1).collect(),
        kkt,
    };

    // push the start strictly inside the bounds
    let k1 = opts.bound_push;
    let mut x = x0.to_vec();
    for i in 0..n {
        let (l, u) = (s.xl[i], s.xu[i]);
        match (s.has_l[i], s.has_u[i]) {
            (true, true) => {
                let pl = (k1 * l.abs().max(1.0)).min(k1 * (u - l));
                let pu = (k1 * u.abs().max(1.0)).min(k1 * (u - l));
                x[i] = x[i].clamp(l + pl, u - pu);
            }
            (true, false) => x[i] = x[i].max(l + k1 * l.abs().max(1.0)),
            (false, true) => x[i] = x[i].min(u - k1 * u.abs().max(1.0)),
            (false, false) => {}
        }
    }
    let (mut y, mut zl, mut zu, mut mu) = match &opts.warm {
        Some(w) if w.y.len() == m && w.zl.len() == n && w.zu.len() == n => {
            (w.y.clone(), w.zl.clone(), w.zu.clone(), w.mu.max(opts.tol.min(opts.compl_tol) / 10.0))
        }
        _ => (vec![0.0; m], vec![1.0; n], vec![1.0; n], opts.mu_init),
    };
    for i in 0..n {
        if !s.has_l[i] {
            zl[i] = 0.0;
        } else if !(zl[i] > 0.0) {
            zl[i] = mu;
        }
        if !s.has_u[i] {
            zu[i] = 0.0;
        } else if !(zu[i] > 0.0) {
            zu[i] = mu;
        }
    }
    let n_bounds = s.has_l.iter().filter(|b| **b).count() + s.has_u.iter().filter(|b| **b).count();

    let mut c = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut jac = vec![0.0; jac_s.len()];
    let mut hess = vec![0.0; nh];
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut last_dw = 0.0;
    let mut log = vec![format!(
        "{:>5} {:>16} {:>10} {:>10} {:>6} {:>10} {:>7} {:>10} {:>10} {:>3}",
        "iter", "objective", "inf_pr", "inf_du", "lg(mu)", "||d||", "lg(rg)", "alpha_du", "alpha_pr", "ls"
    )];
    let mut f = nlp.eval(&x, &mut c);
    if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InfeasibleProblem("model not finite at the start point".into()));
    }
    let theta_init = one_norm(&c);
    let theta_max = 1e4 * theta_init.max(1.0);
    let theta_min = 1e-4 * theta_init.max(1.0);
    let mut last_step: (f64, f64, f64, usize, f64) = (0.0, 0.0, 0.0, 0, 0.0);
    let mut restorations = 0;

    for iter in 0..=opts.max_iter {
        nlp.eval_derivatives(&x, 1.0, &y, &mut grad, &mut jac, &mut hess);
        let (sl, su) = s.slacks(&x);
        let mut rd = grad.clone();
        s.jt_times(&jac, &y, &mut rd);
        for i in 0..n {
            rd[i] += zu[i] - zl[i];
        }
        let primal = inf_norm(&c);
        let zsum = one_norm(&zl) + one_norm(&zu);
        let sd = ((one_norm(&y) + zsum) / ((m + n_bounds).max(1) as f64)).max(100.0) / 100.0;
        let sc = (zsum / (n_bounds.max(1) as f64)).max(100.0) / 100.0;
        let compl = |mu: f64| {
            let mut e = 0.0f64;
            for i in 0..n {
                if s.has_l[i] {
                    e = e.max((sl[i] * zl[i] - mu).abs());
                }
                if s.has_u[i] {
                    e = e.max((su[i] * zu[i] - mu).abs());
                }
            }
            e
        };
        let dual = inf_norm(&rd);
        let err0 = (dual / sd).max(primal).max(compl(0.0) / sc);
        let (dn, lgrg, adu, ls, apr) = last_step;
        log.push(format!(
            "{iter:>5} {f:>16.9e} {primal:>10.3e} {dual:>10.3e} {:>6.2} {dn:>10.3e} {:>7} {adu:>10.3e} {apr:>10.3e} {ls:>3}",
            mu.log10(),
            if lgrg > 0.0 { format!("{:.1}", lgrg.log10()) } else { "-".into() },
        ));
        if err0 <= opts.tol && primal <= opts.tol && compl(0.0) <= opts.compl_tol {
            return Ok(IpmSolution {
                x,
                y,
                zl,
                zu,
                objective: f,
                iterations: iter,
                kkt_error: err0,
                constraint_violation: primal,
                converged: true,
                mu,
                log,
            });
        }
        if iter == opts.max_iter {
            return Ok(IpmSolution {
                x,
                y,
                zl,
                zu,
                objective: f,
                iterations: iter,
                kkt_error: err0,
                constraint_violation: primal,
                converged: false,
                mu,
                log,
            });
        }

        // barrier parameter update
        loop {
            let err_mu = (dual / sd).max(primal).max(compl(mu) / sc);
            if err_mu > KAPPA_EPS * mu {
                break;
            }
            let new_mu = (opts.tol.min(opts.compl_tol) / 10.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
            if new_mu >= mu {
                break;
            }
            mu = new_mu;
            filter.clear();
        }
        let tau = TAU_MIN.max(1.0 - mu);

        // Newton system
        let mut sigma = vec![0.0; n];
        let mut gphi = grad.clone();
        for i in 0..n {
            if s.has_l[i] {
                sigma[i] += zl[i] / sl[i];
                gphi[i] -= mu / sl[i];
            }
            if s.has_u[i] {
                sigma[i] += zu[i] / su[i];
                gphi[i] += mu / su[i];
            }
        }
        s.kkt.vals[..s.kkt.nh].copy_from_slice(&hess);
        s.kkt.vals[s.kkt.nh..].copy_from_slice(&jac);
        let (fac, dw) = s.factor(&sigma, mu, &mut last_dw)?;
        let mut rhs = vec![0.0; n + m];
        let mut r_x = gphi.clone();
        s.jt_times(&jac, &y, &mut r_x);
        for i in 0..n {
            rhs[i] = -r_x[i];
        }
        for j in 0..m {
            rhs[n + j] = -c[j];
        }
        let sol = s.solve_kkt(&fac, &rhs);
        let mut dx = sol[..n].to_vec();
        let mut dy = sol[n..].to_vec();
        let dz = |dx: &[f64]| {
            let mut dzl = vec![0.0; n];
            let mut dzu = vec![0.0; n];
            for i in 0..n {
                if s.has_l[i] {
                    dzl[i] = mu / sl[i] - zl[i] - zl[i] / sl[i] * dx[i];
                }
                if s.has_u[i] {
                    dzu[i] = mu / su[i] - zu[i] + zu[i] / su[i] * dx[i];
                }
            }
            (dzl, dzu)
        };
        let (dzl, dzu) = dz(&dx);
        let alpha_max = {
            let mut a = 1.0f64;
            for i in 0..n {
                if s.has_l[i] && dx[i] < 0.0 {
                    a = a.min(-tau * sl[i] / dx[i]);
                }
                if s.has_u[i] && dx[i] > 0.0 {
                    a = a.min(tau * su[i] / dx[i]);
                }
            }
            a
        };
        let alpha_z = fraction_to_boundary(&zl, &dzl, &s.has_l, tau).min(fraction_to_boundary(&zu, &dzu, &s.has_u, tau));

        // filter line search
        let theta0 = one_norm(&c);
        let phi0 = s.barrier(f, &x, mu);
        let dphi: f64 = gphi.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let tiny = dx.iter().zip(&x).all(|(d, xi)| d.abs() <= 1e-15 * (1.0 + xi.abs()));
        let alpha_min = if dphi < 0.0 {
            0.05 * GAMMA_THETA.min(GAMMA_PHI * theta0 / (-dphi)).min(theta0.powf(S_THETA) / (-dphi).powf(S_PHI))
        } else {
            0.05 * GAMMA_THETA
        }
        .max(1e-16);
        let mut alpha = alpha_max;
        let mut trials = 0;
        let mut soc_done = false;
        let mut c_t = vec![0.0; m];
        let accepted: Option<(Vec<f64>, f64, f64, bool)> = loop {
            trials += 1;
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let ft = nlp.eval(&xt, &mut c_t);
            let finite = ft.is_finite() && c_t.iter().all(|v| v.is_finite()) && s.in_interior(&xt);
            let theta_t = if finite { one_norm(&c_t) } else { f64::INFINITY };
            let phi_t = if finite { s.barrier(ft, &xt, mu) } else { f64::INFINITY };
            let check = |theta_t: f64, phi_t: f64, alpha: f64| -> Option<bool> {
                if !(theta_t.is_finite() && phi_t.is_finite()) || theta_t > theta_max {
                    return None;
                }
                if filter.iter().any(|&(tf, pf)| theta_t >= tf && phi_t >= pf) {
                    return None;
                }
                let switching = dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > theta0.powf(S_THETA);
                if switching && theta0 <= theta_min {
                    (phi_t <= phi0 + ETA_PHI * alpha * dphi).then_some(true)
                } else {
                    (theta_t <= (1.0 - GAMMA_THETA) * theta0 || phi_t <= phi0 - GAMMA_PHI * theta0).then_some(false)
                }
            };
            if tiny {
                break Some((xt, ft, alpha, true));
            }
            if let Some(ftype) = check(theta_t, phi_t, alpha) {
                break Some((xt, ft, alpha, ftype));
            }
            if !soc_done && alpha == alpha_max && theta_t >= theta0 && theta_t.is_finite() {
                soc_done = true;
                let mut rhs_soc = rhs.clone();
                for j in 0..m {
                    rhs_soc[n + j] = -(alpha * c[j] + c_t[j]);
                }
                let sol = s.solve_kkt(&fac, &rhs_soc);
                let dxs = &sol[..n];
                let mut a_soc = 1.0f64;
                for i in 0..n {
                    if s.has_l[i] && dxs[i] < 0.0 {
                        a_soc = a_soc.min(-tau * sl[i] / dxs[i]);
                    }
                    if s.has_u[i] && dxs[i] > 0.0 {
                        a_soc = a_soc.min(tau * su[i] / dxs[i]);
                    }
                }
                let xs: Vec<f64> = x.iter().zip(dxs).map(|(a, b)| a + a_soc * b).collect();
                let fs = nlp.eval(&xs, &mut c_t);
                if fs.is_finite() && c_t.iter().all(|v| v.is_finite()) && s.in_interior(&xs) {
                    let ts = one_norm(&c_t);
                    let ps = s.barrier(fs, &xs, mu);
                    if let Some(ftype) = check(ts, ps, alpha) {
                        dx = dxs.to_vec();
                        dy = sol[n..].to_vec();
                        break Some((xs, fs, a_soc, ftype));
                    }
                }
            }
            alpha *= 0.5;
            if alpha < alpha_min {
                break None;
            }
        };

        match accepted {
            Some((xt, ft, a, ftype)) => {
                if !ftype {
                    let entry = ((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0);
                    filter.retain(|&(t, p)| !(t >= entry.0 && p >= entry.1));
                    filter.push(entry);
                }
                x = xt;
                f = ft;
                c.copy_from_slice(&c_t);
                for j in 0..m {
                    y[j] += a * dy[j];
                }
                for i in 0..n {
                    zl[i] += alpha_z * dzl[i];
                    zu[i] += alpha_z * dzu[i];
                }
                last_step = (inf_norm(&dx), dw, alpha_z, trials, a);
            }
            None => {
                restorations += 1;
                if restorations > 50 {
                    return Err(Error::InfeasibleProblem("repeated restoration phases".into()));
                }
                let (xr, fr) = restore(&mut s, &x, mu, tau, &filter, &mut last_dw)?;
                let entry = ((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0);
                filter.push(entry);
                x = xr;
                f = fr;
                nlp.eval(&x, &mut c);
                last_step = (0.0, 0.0, 0.0, trials, 0.0);
            }
        }

        // keep bound multipliers close to the primal-dual central path
        let (sl, su) = s.slacks(&x);
        for i in 0..n {
            if s.has_l[i] {
                zl[i] = zl[i].clamp(mu / (KAPPA_SIGMA * sl[i]), KAPPA_SIGMA * mu / sl[i]);
            }
            if s.has_u[i] {
                zu[i] = zu[i].clamp(mu / (KAPPA_SIGMA * su[i]), KAPPA_SIGMA * mu / su[i]);
            }
        }
    }
    unreachable!()
}

/// Feasibility restoration: damped Gauss-Newton steps on `||c||` that stay
/// in the interior, until the point is acceptable to the filter.
fn restore<P: Nlp>(
    s: &mut Solver<'_, P>,
    x0: &[f64],
    mu: f64,
    tau: f64,
    filter: &[(f64, f64)],
    last_dw: &mut f64,
) -> Result<(Vec<f64>, f64)> {
    let (n, m) = (s.n, s.m);
    let mut x = x0.to_vec();
    let mut c = vec![0.0; m];
    let mut f = s.nlp.eval(&x, &mut c);
    let theta_start = one_norm(&c);
    let mut grad = vec![0.0; n];
    let mut jac = vec![0.0; s.jac_rows.len()];
    let mut hess = vec![0.0; s.kkt.nh];
    let zero_y = vec![0.0; m];
    for _ in 0..200 {
        let theta = one_norm(&c);
        let phi = s.barrier(f, &x, mu);
        if theta <= 0.9 * theta_start && !filter.iter().any(|&(tf, pf)| theta >= tf && phi >= pf) {
            return Ok((x, f));
        }
        s.nlp.eval_derivatives(&x, 0.0, &zero_y, &mut grad, &mut jac, &mut hess);
        let (sl, su) = s.slacks(&x);
        // proximal weight toward the current point, plus barrier curvature
        let zeta = mu.sqrt();
        let mut sigma = vec![zeta; n];
        for i in 0..n {
            if s.has_l[i] {
                sigma[i] += mu / (sl[i] * sl[i]);
            }
            if s.has_u[i] {
                sigma[i] += mu / (su[i] * su[i]);
            }
        }
        s.kkt.vals[..s.kkt.nh].iter_mut().for_each(|v| *v = 0.0);
        s.kkt.vals[s.kkt.nh..].copy_from_slice(&jac);
        let (fac, _) = s.factor(&sigma, mu, last_dw)?;
        let mut rhs = vec![0.0; n + m];
        for j in 0..m {
            rhs[n + j] = -c[j];
        }
        let sol = s.solve_kkt(&fac, &rhs);
        let dx = &sol[..n];
        let mut alpha = 1.0f64;
        for i in 0..n {
            if s.has_l[i] && dx[i] < 0.0 {
                alpha = alpha.min(-tau * sl[i] / dx[i]);
            }
            if s.has_u[i] && dx[i] > 0.0 {
                alpha = alpha.min(tau * su[i] / dx[i]);
            }
        }
        let mut ct = vec![0.0; m];
        let mut moved = false;
        while alpha > 1e-12 {
            let xt: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
            let ft = s.nlp.eval(&xt, &mut ct);
            if ft.is_finite() && ct.iter().all(|v| v.is_finite()) && one_norm(&ct) < theta {
                x = xt;
                f = ft;
                c.copy_from_slice(&ct);
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::InfeasibleProblem(format!(
        "restoration stalled at constraint violation {:.3e}",
        inf_norm(&c)
    )))
}
