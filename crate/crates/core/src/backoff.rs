//! Constraint tightening from propagated covariance.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{Axle, Input, State, Vehicle};

/// Planner variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nom,
    Tlc,
    Flc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Nom, Variant::Tlc, Variant::Flc];

    pub fn tightens_track(self) -> bool {
        self == Variant::Tlc
    }

    pub fn tightens_friction(self) -> bool {
        self == Variant::Flc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Nom => "nom",
            Variant::Tlc => "tlc",
            Variant::Flc => "flc",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nom" => Ok(Variant::Nom),
            "tlc" => Ok(Variant::Tlc),
            "flc" => Ok(Variant::Flc),
            "noref" => Err(Error::Config("noref drives without a reference; nothing to plan".into())),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Constraint family a back-off belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Track,
    Friction(Axle),
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Track => "track",
            Constraint::Friction(Axle::Front) => "friction_front",
            Constraint::Friction(Axle::Rear) => "friction_rear",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackoffConfig {
    pub variant: Variant,
    /// Satisfaction probability of the track-limit family.
    pub p_track: f64,
    /// Satisfaction probability of the friction-limit family.
    pub p_friction: f64,
    /// Sigma multiplier; takes precedence over the probabilities when set.
    pub gamma: Option<f64>,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self { variant: Variant::Nom, p_track: 0.99, p_friction: 0.99, gamma: Some(3.0) }
    }
}

impl BackoffConfig {
    pub fn validate(&self) -> Result<()> {
        for p in [self.p_track, self.p_friction] {
            if !(p > 0.5 && p < 1.0) {
                return Err(Error::Config(format!("satisfaction probability {p} must lie in (0.5, 1)")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("gamma {g} must be positive")));
            }
        }
        Ok(())
    }

    pub fn multiplier(&self, c: Constraint) -> Result<f64> {
        if let Some(g) = self.gamma {
            return Ok(g);
        }
        normal_quantile(match c {
            Constraint::Track => self.p_track,
            Constraint::Friction(_) => self.p_friction,
        })
    }

    /// Whether the variant tightens constraint family `c` at all.
    pub fn active(&self, c: Constraint) -> bool {
        match c {
            Constraint::Track => self.variant.tightens_track(),
            Constraint::Friction(_) => self.variant.tightens_friction(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackoffValue {
    pub k: usize,
    pub constraint: Constraint,
    pub sigma: f64,
    pub beta: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    // Acklam's rational approximation, relative error below 1.2e-9
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] =
        [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Newton refinement against the erfc-based CDF
    for _ in 0..2 {
        x -= (normal_cdf(x) - p) / normal_pdf(x);
    }
    Ok(x)
}

/// Gradient of the lateral offset with respect to the Cartesian state at a
/// track point with heading `theta`.
///
/// The signed distance to a smooth curve has the unit normal at the foot
/// point as its exact gradient, for any curvature.
pub fn offset_gradient(theta: f64) -> Vector6<f64> {
    Vector6::new(0.0, 0.0, 0.0, -theta.sin(), theta.cos(), 0.0)
}

fn quad_sigma(p: &Matrix6<f64>, g: &Vector6<f64>) -> Result<f64> {
    let var = (g.transpose() * p * g)[0];
    if var < -1e-12 * p.amax().max(1.0) * g.norm_squared() {
        return Err(Error::Covariance(format!("negative variance {var:.3e}")));
    }
    Ok(var.max(0.0).sqrt())
}

/// Track-limit back-off at node `k`; `theta` is the centerline heading there.
pub fn track_backoff(
    k: usize,
    p: &Matrix6<f64>,
    theta: f64,
    multiplier: f64,
) -> Result<BackoffValue> {
    let sigma = quad_sigma(p, &offset_gradient(theta))?;
    Ok(BackoffValue { k, constraint: Constraint::Track, sigma, beta: multiplier * sigma })
}

/// Friction-limit back-off for axle `axle` at node `k`.
pub fn friction_backoff(
    k: usize,
    vehicle: &Vehicle,
    state: &State,
    input: &Input,
    p: &Matrix6<f64>,
    axle: Axle,
    multiplier: f64,
) -> Result<BackoffValue> {
    let g = Vector6::from(vehicle.saturation_gradient(state, input, axle)?);
    let sigma = quad_sigma(p, &g)?;
    Ok(BackoffValue { k, constraint: Constraint::Friction(axle), sigma, beta: multiplier * sigma })
}

/// Checks a tightened corridor `[-w_right + beta, w_left - beta]` is non-empty.
pub fn check_corridor(k: usize, w_left: f64, w_right: f64, beta: f64) -> Result<()> {
    if w_left - beta < -w_right + beta {
        return Err(Error::InfeasibleCorridor { node: k, beta });
    }
    Ok(())
}

/// Writes a back-off table with columns `k,s,constraint,sigma,beta`.
pub fn write_backoff_csv(path: &Path, values: &[BackoffValue], s_of: impl Fn(usize) -> f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "s", "constraint", "sigma", "beta"])?;
    for v in values {
        w.write_record([
            v.k.to_string(),
            format!("{:.6}", s_of(v.k)),
            v.constraint.name().to_string(),
            format!("{:.9e}", v.sigma),
            format!("{:.9e}", v.beta),
        ])?;
    }
    w.flush()?;
    Ok(())
}
