//! Executed-lap telemetry and its CSV form.

use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: [&str; 20] = [
    "t", "u", "v", "r", "x", "y", "psi", "delta", "alpha_fl", "alpha_fr", "alpha_rl", "alpha_rr",
    "fz_fl", "fz_fr", "fz_rl", "fz_rr", "fy_fl", "fy_fr", "fy_rl", "fy_rr",
];

/// Per-wheel channels, ordered front-left, front-right, rear-left, rear-right.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WheelChannels {
    pub alpha: [f64; 4],
    pub fz: [f64; 4],
    pub fy: [f64; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TelemetrySample {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub delta: f64,
    pub wheels: Option<WheelChannels>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TelemetryLog {
    pub samples: Vec<TelemetrySample>,
}

impl TelemetryLog {
    pub fn new(samples: Vec<TelemetrySample>) -> Result<Self> {
        let log = Self { samples };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Schema("time stamps must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn has_wheels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.wheels.is_some())
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Mean sample rate [Hz].
    pub fn sample_rate(&self) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        (self.samples.len() - 1) as f64 / self.duration()
    }
}

/// Reads telemetry; the eight kinematic columns are required, the twelve
/// per-wheel columns are all-or-nothing.
pub fn load_telemetry(path: &Path) -> Result<TelemetryLog> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let base: Vec<usize> = HEADER[..8]
        .iter()
        .map(|n| col(n).ok_or_else(|| Error::Schema(format!("missing column `{n}`"))))
        .collect::<Result<_>>()?;
    let wheel: Vec<Option<usize>> = HEADER[8..].iter().map(|n| col(n)).collect();
    let has_wheels = match wheel.iter().filter(|c| c.is_some()).count() {
        0 => false,
        12 => true,
        _ => return Err(Error::Schema("per-wheel channels are incomplete".into())),
    };
    let mut samples = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Schema(format!("row {}: bad value in column {}", line + 2, headers[i].trim())))
        };
        let b: Vec<f64> = base.iter().map(|&i| num(i)).collect::<Result<_>>()?;
        let wheels = if has_wheels {
            let w: Vec<f64> = wheel.iter().map(|c| num(c.unwrap())).collect::<Result<_>>()?;
            Some(WheelChannels {
                alpha: [w[0], w[1], w[2], w[3]],
                fz: [w[4], w[5], w[6], w[7]],
                fy: [w[8], w[9], w[10], w[11]],
            })
        } else {
            None
        };
        samples.push(TelemetrySample {
            t: b[0],
            u: b[1],
            v: b[2],
            r: b[3],
            x: b[4],
            y: b[5],
            psi: b[6],
            delta: b[7],
            wheels,
        });
    }
    TelemetryLog::new(samples)
}

pub fn write_telemetry(path: &Path, log: &TelemetryLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let wheels = log.has_wheels();
    let n = if wheels { 20 } else { 8 };
    w.write_record(&HEADER[..n])?;
    for s in &log.samples {
        let mut row = vec![s.t, s.u, s.v, s.r, s.x, s.y, s.psi, s.delta];
        if let (true, Some(wc)) = (wheels, s.wheels) {
            row.extend(wc.alpha);
            row.extend(wc.fz);
            row.extend(wc.fy);
        }
        w.write_record(row.iter().map(|v| format!("{v:.9e}")))?;
    }
    w.flush()?;
    Ok(())
}
