//! Gaussian belief propagation: Lyapunov covariance dynamics along a mean
//! trajectory and the per-node covariance replicas.

use nalgebra::{Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{Input, State, Vehicle};

/// Process-noise diffusion and reset covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub q: Matrix6<f64>,
    pub p0: Matrix6<f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            q: Matrix6::from_diagonal(&[0.01, 0.01, 0.0016, 0.01, 0.01, 0.004].into()),
            p0: Matrix6::identity() * 1e-4,
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self { q: Matrix6::zeros(), p0: Matrix6::zeros() }
    }

    /// Same noise with `Q` multiplied by `factor`.
    pub fn scale_q(&self, factor: f64) -> Self {
        Self { q: self.q * factor, p0: self.p0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_psd(&self.q, 1e-12).map_err(|e| Error::Covariance(format!("Q: {e}")))?;
        check_psd(&self.p0, 1e-12).map_err(|e| Error::Covariance(format!("P0: {e}")))
    }
}

/// Text form of a covariance: either six diagonal entries or 36 row-major entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Values(Vec<f64>),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<Matrix6<f64>> {
        let MatrixSpec::Values(v) = self;
        match v.len() {
            6 => Ok(Matrix6::from_diagonal(&nalgebra::Vector6::from_column_slice(v))),
            36 => Ok(Matrix6::from_row_slice(v)),
            n => Err(Error::Config(format!("covariance needs 6 or 36 entries, got {n}"))),
        }
    }

    pub fn from_matrix(m: &Matrix6<f64>) -> Self {
        if (m - Matrix6::from_diagonal(&m.diagonal())).amax() == 0.0 {
            MatrixSpec::Values(m.diagonal().iter().copied().collect())
        } else {
            MatrixSpec::Values(m.transpose().iter().copied().collect())
        }
    }
}

fn check_psd(p: &Matrix6<f64>, tol: f64) -> std::result::Result<(), String> {
    if !p.iter().all(|x| x.is_finite()) {
        return Err("non-finite entry".into());
    }
    let scale = p.amax().max(1.0);
    let asym = (p - p.transpose()).amax();
    if asym > tol * scale {
        return Err(format!("asymmetry {asym:.3e}"));
    }
    let min = SymmetricEigen::new(p.symmetric_part()).eigenvalues.min();
    if min < -tol * scale {
        return Err(format!("minimum eigenvalue {min:.3e}"));
    }
    Ok(())
}

/// Time-varying linearization over one interval: Jacobians sampled at
/// fractions `tau` of the interval and interpolated linearly in between
/// (held constant outside the sampled range).
#[derive(Clone, Debug, Default)]
pub struct JacobianPath {
    pub samples: Vec<(f64, Matrix6<f64>)>,
}

impl JacobianPath {
    pub fn constant(a: Matrix6<f64>) -> Self {
        Self { samples: vec![(0.5, a)] }
    }

    pub fn at(&self, tau: f64) -> Matrix6<f64> {
        let s = &self.samples;
        match s.len() {
            0 => Matrix6::zeros(),
            1 => s[0].1,
            _ => {
                if tau <= s[0].0 {
                    return s[0].1;
                }
                for w in s.windows(2) {
                    if tau <= w[1].0 {
                        let t = (tau - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 * (1.0 - t) + w[1].1 * t;
                    }
                }
                s[s.len() - 1].1
            }
        }
    }
}

const MIN_SUBSTEPS: usize = 8;

/// Integrates `dP/dt = A P + P A^T + Q` over `dt` with classical RK4.
pub fn propagate_covariance(
    p_in: &Matrix6<f64>,
    a: &JacobianPath,
    q: &Matrix6<f64>,
    dt: f64,
) -> Result<Matrix6<f64>> {
    check_psd(p_in, 1e-9).map_err(Error::Covariance)?;
    if !(dt > 0.0) {
        return Err(Error::Covariance(format!("duration {dt} must be positive")));
    }
    Ok(propagate_unchecked(p_in, a, q, dt))
}

pub(crate) fn propagate_unchecked(
    p_in: &Matrix6<f64>,
    a: &JacobianPath,
    q: &Matrix6<f64>,
    dt: f64,
) -> Matrix6<f64> {
    let rhs = |tau: f64, p: &Matrix6<f64>| {
        let a = a.at(tau);
        let ap = a * p;
        ap + ap.transpose() + q
    };
    // keep |lambda h| small for the stiffest mode of the interval
    let stiff = a.samples.iter().map(|(_, a)| a.abs().row_sum().max()).fold(0.0, f64::max);
    let steps = ((40.0 * stiff * dt).ceil() as usize).clamp(MIN_SUBSTEPS, 2000);
    let h = dt / steps as f64;
    let dtau = 1.0 / steps as f64;
    let mut p = *p_in;
    for i in 0..steps {
        let t0 = i as f64 * dtau;
        let k1 = rhs(t0, &p);
        let k2 = rhs(t0 + 0.5 * dtau, &(p + k1 * (0.5 * h)));
        let k3 = rhs(t0 + 0.5 * dtau, &(p + k2 * (0.5 * h)));
        let k4 = rhs(t0 + dtau, &(p + k3 * h));
        p += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        p = (p + p.transpose()) * 0.5;
    }
    p
}

/// Mean motion over one grid interval.
#[derive(Clone, Debug)]
pub struct MeanInterval {
    /// Time spent in the interval [s].
    pub dt: f64,
    pub input: Input,
    /// Mean states at interval fractions `tau`.
    pub samples: Vec<(f64, State)>,
}

/// Mean trajectory over the whole grid, one record per interval.
#[derive(Clone, Debug)]
pub struct MeanPath {
    pub intervals: Vec<MeanInterval>,
    pub closed: bool,
}

impl MeanPath {
    pub fn linearize(&self, vehicle: &Vehicle) -> Result<Vec<(f64, JacobianPath)>> {
        self.intervals
            .iter()
            .map(|iv| {
                if !(iv.dt > 0.0 && iv.dt.is_finite()) {
                    return Err(Error::Covariance(format!("interval duration {}", iv.dt)));
                }
                let samples = iv
                    .samples
                    .iter()
                    .map(|(tau, s)| Ok((*tau, vehicle.jacobian_a(s, &iv.input)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((iv.dt, JacobianPath { samples }))
            })
            .collect()
    }
}

/// `P_k^j` for every node and `j = 0..=H`.
#[derive(Clone, Debug)]
pub struct CovarianceReplicas {
    pub horizon: usize,
    /// `p[k][j]`; a closed grid stores `N` nodes, an open one `N + 1`.
    pub p: Vec<Vec<Matrix6<f64>>>,
}

impl CovarianceReplicas {
    /// Most-propagated replica at node `k`.
    pub fn last(&self, k: usize) -> &Matrix6<f64> {
        &self.p[k][self.horizon]
    }

    pub fn nodes(&self) -> usize {
        self.p.len()
    }
}

/// Replicas from pre-computed interval linearizations `(dt_k, A_k)`.
pub fn build_replicas_linearized(
    lin: &[(f64, JacobianPath)],
    closed: bool,
    noise: &NoiseModel,
    horizon: usize,
) -> Result<CovarianceReplicas> {
    let n = lin.len();
    if horizon < 1 || horizon >= n {
        return Err(Error::Config(format!("horizon {horizon} must lie in [1, {})", n)));
    }
    let nodes = if closed { n } else { n + 1 };
    let mut p = vec![vec![noise.p0; horizon + 1]; nodes];
    for j in 1..=horizon {
        for k in 0..nodes {
            let prev = if k > 0 {
                k - 1
            } else if closed {
                n - 1
            } else {
                // nothing to look back on before the start of an open track
                p[k][j] = p[k][j - 1];
                continue;
            };
            if !closed && prev + 1 < j {
                p[k][j] = p[k][j - 1];
                continue;
            }
            let (dt, a) = &lin[prev];
            p[k][j] = propagate_unchecked(&p[prev][j - 1], a, &noise.q, *dt);
        }
    }
    Ok(CovarianceReplicas { horizon, p })
}

/// Replicas along a mean trajectory: `P_k^j` is the reset covariance
/// propagated from node `k - j` to node `k`.
pub fn build_replicas(
    vehicle: &Vehicle,
    mean: &MeanPath,
    noise: &NoiseModel,
    horizon: usize,
) -> Result<CovarianceReplicas> {
    noise.validate()?;
    let lin = mean.linearize(vehicle)?;
    build_replicas_linearized(&lin, mean.closed, noise, horizon)
}
