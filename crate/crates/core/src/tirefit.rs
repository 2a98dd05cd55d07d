//! Axle-level tire identification from per-wheel telemetry.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, SymmetricEigen};

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::telemetry::TelemetryLog;
use crate::vehicle::{magic_formula, Axle, AxleTireParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxleSample {
    /// Mean of the left/right slip angles [rad].
    pub alpha_bar: f64,
    /// Summed vertical load [N].
    pub fz_bar: f64,
    /// Summed lateral force [N].
    pub fy_bar: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AxleTrainingSet {
    pub samples: Vec<AxleSample>,
}

/// Optional operating-band filters applied while assembling training data.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandFilter {
    pub speed: Option<(f64, f64)>,
    /// Band on `u * r` [m/s^2].
    pub lateral_acc: Option<(f64, f64)>,
}

const MIN_AXLE_LOAD: f64 = 100.0;

pub fn assemble_training(log: &TelemetryLog, axle: Axle, filter: &BandFilter) -> Result<AxleTrainingSet> {
    let (l, r) = match axle {
        Axle::Front => (0, 1),
        Axle::Rear => (2, 3),
    };
    let inside = |band: Option<(f64, f64)>, x: f64| band.is_none_or(|(lo, hi)| x >= lo && x <= hi);
    let mut samples = Vec::new();
    for s in &log.samples {
        let w = s.wheels.ok_or_else(|| Error::Schema("telemetry lacks per-wheel channels".into()))?;
        if !inside(filter.speed, s.u) || !inside(filter.lateral_acc, s.u * s.r) {
            continue;
        }
        let sample = AxleSample {
            alpha_bar: 0.5 * (w.alpha[l] + w.alpha[r]),
            fz_bar: w.fz[l] + w.fz[r],
            fy_bar: w.fy[l] + w.fy[r],
        };
        if sample.fz_bar > MIN_AXLE_LOAD {
            samples.push(sample);
        }
    }
    Ok(AxleTrainingSet { samples })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub p_hat: AxleTireParams,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start: AxleTireParams,
    /// Objective after every accepted step, starting with the initial value.
    pub cost_history: Vec<f64>,
}

const MAX_ITER: usize = 200;

struct Problem<'a> {
    data: &'a [AxleSample],
    start: [f64; 8],
    /// Residual normalization [N].
    scale: f64,
}

impl Problem<'_> {
    fn params(&self, theta: &SVector<f64, 8>) -> [f64; 8] {
        std::array::from_fn(|i| theta[i] * self.start[i])
    }

    fn residuals(&self, theta: &SVector<f64, 8>) -> DVector<f64> {
        let p = self.params(theta);
        DVector::from_iterator(
            self.data.len(),
            self.data.iter().map(|d| (d.fy_bar - magic_formula(d.alpha_bar, d.fz_bar, &p)) / self.scale),
        )
    }

    fn jacobian(&self, theta: &SVector<f64, 8>) -> DMatrix<f64> {
        let p = self.params(theta);
        let pd = Dual::<8>::vars(&p);
        let mut j = DMatrix::zeros(self.data.len(), 8);
        for (k, d) in self.data.iter().enumerate() {
            let f = magic_formula(Dual::cst(d.alpha_bar), Dual::cst(d.fz_bar), &pd);
            for i in 0..8 {
                j[(k, i)] = -f.g[i] * self.start[i] / self.scale;
            }
        }
        j
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    let c = 0.5 * r.norm_squared();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Levenberg-Marquardt fit of the axle coefficient vector, working in the
/// dimensionless variables `p / start`.
pub fn fit_axle(train: &AxleTrainingSet, start: &AxleTireParams) -> Result<FitReport> {
    if train.samples.len() < 8 {
        return Err(Error::Schema(format!("{} training samples, need at least 8", train.samples.len())));
    }
    if train.samples.iter().any(|s| !(s.fz_bar > 0.0)) {
        return Err(Error::Schema("non-positive axle load in training data".into()));
    }
    if start.to_array().contains(&0.0) {
        return Err(Error::IllConditionedFit("start vector has a zero entry; rescale".into()));
    }
    let scale = (train.samples.iter().map(|s| s.fy_bar.abs()).sum::<f64>() / train.samples.len() as f64).max(1.0);
    let pb = Problem { data: &train.samples, start: start.to_array(), scale };

    let mut theta = SVector::<f64, 8>::repeat(1.0);
    let mut r = pb.residuals(&theta);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::IllConditionedFit("model not finite at the start vector".into()));
    }
    let mut history = vec![c];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        let j = pb.jacobian(&theta);
        let jtj: SMatrix<f64, 8, 8> = SMatrix::from_iterator((j.transpose() * &j).iter().copied());
        let g: SVector<f64, 8> = SVector::from_iterator((j.transpose() * &r).iter().copied());
        if g.amax() <= 1e-8 * (1.0 + c) {
            converged = true;
            break;
        }
        if iterations == 0 {
            // One exactly flat direction is inherent to the model (a uniform
            // rescaling of F_z0 compensated by the other coefficients), so only
            // a second degenerate direction signals a poorly posed start.
            let mut ev: Vec<f64> = SymmetricEigen::new(jtj).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.total_cmp(b));
            if ev[7] <= 0.0 || ev[1] < 1e-14 * ev[7] {
                return Err(Error::IllConditionedFit(
                    "singular normal equations at the start vector; rescale the parameters".into(),
                ));
            }
        }
        let diag = SVector::<f64, 8>::from_fn(|i, _| jtj[(i, i)].max(1e-12 * jtj.diagonal().amax()));
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..8 {
                a[(i, i)] += lambda * diag[i];
            }
            if let Some(ch) = a.cholesky() {
                let step = ch.solve(&(-g));
                let trial = theta + step;
                let rt = pb.residuals(&trial);
                let ct = cost(&rt);
                // steps leaving the valid coefficient region count as failed
                let valid = AxleTireParams::from_array(pb.params(&trial)).validate().is_ok();
                if ct < c && valid {
                    theta = trial;
                    r = rt;
                    c = ct;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        history.push(c);
    }

    let p_hat = AxleTireParams::from_array(pb.params(&theta));
    p_hat.validate().map_err(|e| Error::IllConditionedFit(format!("fitted vector is invalid: {e}")))?;
    let residual_rms = (2.0 * c / train.samples.len() as f64).sqrt() * scale;
    Ok(FitReport { p_hat, residual_rms, iterations, converged, start: *start, cost_history: history })
}

/// Reads a coefficient vector from a key-value file; any `[fit]` table left
/// by [`write_fit_report`] is ignored.
pub fn load_axle_params(path: &Path) -> Result<AxleTireParams> {
    let text = std::fs::read_to_string(path)?;
    parse_axle_params(&text)
}

pub fn parse_axle_params(text: &str) -> Result<AxleTireParams> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    table.remove("fit");
    let p: AxleTireParams = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    p.validate()?;
    Ok(p)
}

pub fn format_fit_report(axle: Axle, rep: &FitReport) -> String {
    let mut out = format!("# {} axle\n", if axle == Axle::Front { "front" } else { "rear" });
    out.push_str(&format!("{:<8}  {:>16}  {:>16}\n", "#", "start", "calibrated"));
    let (s, p) = (rep.start.to_array(), rep.p_hat.to_array());
    for (i, name) in AxleTireParams::NAMES.iter().enumerate() {
        out.push_str(&format!("# {name:<6}  {:>16.6}  {:>16.6}\n", s[i], p[i]));
    }
    for (i, name) in AxleTireParams::NAMES.iter().enumerate() {
        out.push_str(&format!("{name} = {:?}\n", p[i]));
    }
    out.push_str("\n[fit]\n");
    out.push_str(&format!("residual_rms = {:.9e}\n", rep.residual_rms));
    out.push_str(&format!("iterations = {}\n", rep.iterations));
    out.push_str(&format!("converged = {}\n", rep.converged));
    out
}

pub fn write_fit_report(path: &Path, axle: Axle, rep: &FitReport) -> Result<()> {
    std::fs::write(path, format_fit_report(axle, rep))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{TelemetrySample, WheelChannels};

    fn synthetic(p: &AxleTireParams) -> AxleTrainingSet {
        let mut samples = Vec::new();
        for i in 0..41 {
            for fz in [5000.0, 8000.0, 11000.0, 14000.0] {
                let alpha = -0.2 + 0.01 * i as f64;
                let fy = magic_formula(alpha, fz, &p.to_array());
                samples.push(AxleSample { alpha_bar: alpha, fz_bar: fz, fy_bar: fy });
            }
        }
        AxleTrainingSet { samples }
    }

    #[test]
    fn assembly_rules() {
        let mk = |alpha: [f64; 4], fz: [f64; 4]| TelemetrySample {
            wheels: Some(WheelChannels { alpha, fz, fy: [100.0, 200.0, 300.0, 400.0] }),
            ..Default::default()
        };
        let log = TelemetryLog {
            samples: vec![
                mk([0.05, 0.05, 0.01, 0.03], [4000.0, 5000.0, 3000.0, 3000.0]),
                mk([0.05, 0.05, 0.01, 0.03], [0.0, 0.0, 3000.0, 3000.0]),
            ],
        };
        let f = assemble_training(&log, Axle::Front, &BandFilter::default()).unwrap();
        assert_eq!(f.samples.len(), 1);
        assert_eq!(f.samples[0], AxleSample { alpha_bar: 0.05, fz_bar: 9000.0, fy_bar: 300.0 });
        let r = assemble_training(&log, Axle::Rear, &BandFilter::default()).unwrap();
        assert_eq!(r.samples.len(), 2);
        assert!((r.samples[0].alpha_bar - 0.02).abs() < 1e-15);
        let no_wheels = TelemetryLog { samples: vec![TelemetrySample::default()] };
        assert!(matches!(assemble_training(&no_wheels, Axle::Front, &BandFilter::default()), Err(Error::Schema(_))));
        let band = BandFilter { speed: Some((10.0, 20.0)), lateral_acc: None };
        assert_eq!(assemble_training(&log, Axle::Rear, &band).unwrap().samples.len(), 0);
    }

    #[test]
    fn zero_residual_start() {
        let data = synthetic(&AxleTireParams::START);
        let rep = fit_axle(&data, &AxleTireParams::START).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
        assert!(rep.residual_rms <= 1e-9);
        assert_eq!(rep.p_hat, AxleTireParams::START);
    }

    #[test]
    fn noiseless_fit_reproduces_curve() {
        let truth = AxleTireParams::FRONT;
        let data = synthetic(&truth);
        let rep = fit_axle(&data, &AxleTireParams::START).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.residual_rms < 1e-3, "{}", rep.residual_rms);
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]));
        // the curve family is identified through these combinations
        let inv = |p: &AxleTireParams| {
            [
                p.p_cy1,
                p.p_dy1 - p.p_dy2,
                p.p_dy2 / p.fz0,
                p.p_ey1 - p.p_ey2,
                p.p_ey2 / p.fz0,
                p.p_ky1 * p.fz0,
                p.p_ky2 * p.fz0,
            ]
        };
        for (a, b) in inv(&rep.p_hat).iter().zip(inv(&truth)) {
            assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn refit_is_idempotent_and_order_free() {
        let data = synthetic(&AxleTireParams::REAR);
        let rep = fit_axle(&data, &AxleTireParams::START).unwrap();
        let again = fit_axle(&data, &rep.p_hat).unwrap();
        for (a, b) in again.p_hat.to_array().iter().zip(rep.p_hat.to_array()) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
        let mut rev = data.clone();
        rev.samples.reverse();
        let r2 = fit_axle(&rev, &AxleTireParams::START).unwrap();
        for (a, b) in r2.p_hat.to_array().iter().zip(rep.p_hat.to_array()) {
            assert!((a / b - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_samples() {
        let mut data = synthetic(&AxleTireParams::FRONT);
        data.samples.truncate(7);
        assert!(matches!(fit_axle(&data, &AxleTireParams::START), Err(Error::Schema(_))));
    }

    #[test]
    fn degenerate_data_is_ill_conditioned() {
        // a single slip angle cannot separate shape from stiffness
        let samples = (0..20)
            .map(|_| AxleSample { alpha_bar: 0.05, fz_bar: 9000.0, fy_bar: 10000.0 })
            .collect();
        let r = fit_axle(&AxleTrainingSet { samples }, &AxleTireParams::START);
        assert!(matches!(r, Err(Error::IllConditionedFit(_))));
    }

    #[test]
    fn report_round_trip() {
        let data = synthetic(&AxleTireParams::START);
        let rep = fit_axle(&data, &AxleTireParams::START).unwrap();
        let txt = format_fit_report(Axle::Front, &rep);
        assert_eq!(parse_axle_params(&txt).unwrap(), rep.p_hat);
    }
}
