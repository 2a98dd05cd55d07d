//! Lap scoring: lap splitting, steer energy, tracking errors against a
//! reference and median/IQR summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::planner::export::Reference;
use crate::telemetry::{TelemetryLog, TelemetrySample};
use crate::track::TrackGeometry;

/// Spacing of the resampled reference path [m].
pub const RESAMPLE_SPACING: f64 = 0.5;
/// Minimum sample count for steer energy.
pub const MIN_SAMPLES: usize = 100;
/// Minimum sample rate for metric validity [Hz].
pub const MIN_RATE: f64 = 50.0;

/// Start line: a point, the direction of travel and the gate half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StartLine {
    pub point: [f64; 2],
    pub heading: f64,
    pub half_width: f64,
}

impl StartLine {
    pub fn from_track(track: &TrackGeometry) -> Self {
        let p = track.at(0.0);
        Self { point: [p.x, p.y], heading: p.theta, half_width: p.w_left.max(p.w_right) + 1.0 }
    }

    pub fn from_reference(r: &Reference, half_width: f64) -> Self {
        let p = &r.nodes[0];
        Self { point: [p.x, p.y], heading: p.psi + p.sideslip, half_width }
    }

    fn along(&self, x: f64, y: f64) -> f64 {
        (x - self.point[0]) * self.heading.cos() + (y - self.point[1]) * self.heading.sin()
    }

    fn across(&self, x: f64, y: f64) -> f64 {
        -(x - self.point[0]) * self.heading.sin() + (y - self.point[1]) * self.heading.cos()
    }
}

/// One complete lap between two forward crossings of the start line.
#[derive(Clone, Debug, PartialEq)]
pub struct Lap {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Samples inside the lap, bracketed by interpolated samples at the crossings.
    pub log: TelemetryLog,
}

impl Lap {
    pub fn lap_time(&self) -> f64 {
        self.t_end - self.t_start
    }
}

fn lerp_angle(a: f64, b: f64, w: f64) -> f64 {
    let d = (b - a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    a + w * d
}

fn interpolate(a: &TelemetrySample, b: &TelemetrySample, w: f64) -> TelemetrySample {
    let l = |p: f64, q: f64| p + w * (q - p);
    TelemetrySample {
        t: l(a.t, b.t),
        u: l(a.u, b.u),
        v: l(a.v, b.v),
        r: l(a.r, b.r),
        x: l(a.x, b.x),
        y: l(a.y, b.y),
        psi: lerp_angle(a.psi, b.psi, w),
        delta: l(a.delta, b.delta),
        wheels: None,
    }
}

/// Splits a log at forward crossings of the start line; the partial head
/// and tail are dropped.
pub fn lap_split(log: &TelemetryLog, line: &StartLine) -> Result<Vec<Lap>> {
    let s = &log.samples;
    // (index of the sample after the crossing, interpolation weight)
    let mut crossings: Vec<(usize, f64)> = Vec::new();
    for i in 1..s.len() {
        let (d0, d1) = (line.along(s[i - 1].x, s[i - 1].y), line.along(s[i].x, s[i].y));
        if d0 < 0.0 && d1 >= 0.0 {
            let w = -d0 / (d1 - d0);
            let c = interpolate(&s[i - 1], &s[i], w);
            if line.across(c.x, c.y).abs() <= line.half_width {
                crossings.push((i, w));
            }
        }
    }
    if crossings.len() < 2 {
        return Err(Error::NoCompleteLap);
    }
    let mut laps = Vec::with_capacity(crossings.len() - 1);
    for (index, pair) in crossings.windows(2).enumerate() {
        let ((i0, w0), (i1, w1)) = (pair[0], pair[1]);
        let head = interpolate(&s[i0 - 1], &s[i0], w0);
        let tail = interpolate(&s[i1 - 1], &s[i1], w1);
        let mut samples = vec![head];
        samples.extend(s[i0..i1].iter().filter(|q| q.t > head.t && q.t < tail.t).cloned());
        samples.push(tail);
        laps.push(Lap { index, t_start: head.t, t_end: tail.t, log: TelemetryLog::new(samples)? });
    }
    Ok(laps)
}

/// Steering rate by central differences, one-sided at the ends.
pub fn steer_rate(log: &TelemetryLog) -> Vec<f64> {
    let s = &log.samples;
    let n = s.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (s[b].delta - s[a].delta) / (s[b].t - s[a].t)
        })
        .collect()
}

fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2).zip(f.windows(2)).map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1])).sum()
}

/// Time-weighted RMS `sqrt(1/T int f^2 dt)`.
pub fn rms(t: &[f64], f: &[f64]) -> f64 {
    let span = t[t.len() - 1] - t[0];
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    (trapezoid(t, &sq) / span).sqrt()
}

/// `E_s = int delta_dot^2 dt` [rad^2/s].
pub fn steer_energy(log: &TelemetryLog) -> Result<f64> {
    if log.samples.len() < MIN_SAMPLES {
        return Err(Error::Schema(format!("steer energy needs {MIN_SAMPLES} samples, got {}", log.samples.len())));
    }
    let t: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    let sq: Vec<f64> = steer_rate(log).iter().map(|d| d * d).collect();
    Ok(trapezoid(&t, &sq))
}

/// Which path the lateral error is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceFrame {
    /// Center-of-mass path of the plan against the logged position.
    Com,
    /// Driver-frame ribbon centerline, both shifted forward by the offset.
    Ribbon { driver_offset: f64 },
}

/// Reference path resampled at uniform arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePath {
    pub points: Vec<[f64; 2]>,
    pub speed: Vec<f64>,
    pub sideslip: Vec<f64>,
    pub closed: bool,
}

impl ReferencePath {
    pub fn new(r: &Reference, frame: ReferenceFrame, spacing: f64) -> Result<Self> {
        let off = match frame {
            ReferenceFrame::Com => 0.0,
            ReferenceFrame::Ribbon { driver_offset } => driver_offset,
        };
        let pos: Vec<[f64; 2]> =
            r.nodes.iter().map(|p| [p.x + off * p.psi.cos(), p.y + off * p.psi.sin()]).collect();
        let mut cum = vec![0.0];
        for w in pos.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cum.push(cum[cum.len() - 1] + d);
        }
        let total = cum[cum.len() - 1];
        if !(total > spacing) {
            return Err(Error::Schema(format!("reference path is {total:.3} m long")));
        }
        let m = (total / spacing).ceil() as usize;
        let h = total / m as f64;
        let (mut points, mut speed, mut sideslip) = (Vec::new(), Vec::new(), Vec::new());
        let mut j = 0;
        for i in 0..=m {
            let l = (i as f64 * h).min(total);
            while j + 2 < cum.len() && cum[j + 1] < l {
                j += 1;
            }
            let seg = cum[j + 1] - cum[j];
            let w = if seg > 0.0 { ((l - cum[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
            let (a, b) = (&r.nodes[j], &r.nodes[j + 1]);
            points.push([pos[j][0] + w * (pos[j + 1][0] - pos[j][0]), pos[j][1] + w * (pos[j + 1][1] - pos[j][1])]);
            speed.push(a.u + w * (b.u - a.u));
            sideslip.push(a.sideslip + w * (b.sideslip - a.sideslip));
        }
        Ok(Self { points, speed, sideslip, closed: r.closed })
    }

    fn segments(&self) -> usize {
        self.points.len() - 1
    }

    /// Nearest point on segment `i`: (distance, weight, signed offset).
    fn on_segment(&self, i: usize, p: [f64; 2]) -> (f64, f64, f64) {
        let (a, b) = (self.points[i], self.points[i + 1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let q = [p[0] - a[0], p[1] - a[1]];
        let w = if len2 > 0.0 { ((q[0] * d[0] + q[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let e = [q[0] - w * d[0], q[1] - w * d[1]];
        let dist = (e[0] * e[0] + e[1] * e[1]).sqrt();
        let side = d[0] * e[1] - d[1] * e[0];
        (dist, w, if side < 0.0 { -dist } else { dist })
    }

    /// Projection searching segments `from .. from + count` (wrapping on a
    /// closed path); returns (segment, weight, signed offset). Restricting the
    /// window around the previous match settles crossovers by continuity.
    fn project_window(&self, p: [f64; 2], from: isize, count: usize) -> (usize, f64, f64) {
        let m = self.segments() as isize;
        let mut best = (0, 0.0, 0.0, f64::INFINITY);
        for o in 0..count as isize {
            let i = from + o;
            let i = if self.closed {
                i.rem_euclid(m)
            } else if i < 0 || i >= m {
                continue;
            } else {
                i
            } as usize;
            let (dist, w, e) = self.on_segment(i, p);
            if dist < best.3 {
                best = (i, w, e, dist);
            }
        }
        (best.0, best.1, best.2)
    }
}

/// Tracking and style indicators of one lap.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrackingErrors {
    pub rms_ey: f64,
    pub rms_ev: f64,
    pub rms_beta_drv: f64,
    pub rms_beta_ref: f64,
    pub rms_delta_rate: f64,
}

/// Forward search window along the resampled path [m].
const SEARCH_AHEAD: f64 = 60.0;
const SEARCH_BEHIND: f64 = 5.0;

pub fn tracking_errors(lap: &TelemetryLog, path: &ReferencePath, frame: ReferenceFrame) -> Result<TrackingErrors> {
    let s = &lap.samples;
    if s.len() < 2 {
        return Err(Error::Schema("lap has fewer than two samples".into()));
    }
    let off = match frame {
        ReferenceFrame::Com => 0.0,
        ReferenceFrame::Ribbon { driver_offset } => driver_offset,
    };
    let spacing = {
        let (a, b) = (path.points[0], path.points[1]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt().max(1e-6)
    };
    let behind = (SEARCH_BEHIND / spacing).ceil() as isize;
    let window = ((SEARCH_AHEAD + SEARCH_BEHIND) / spacing).ceil() as usize;
    let n = s.len();
    let (mut ey, mut ev, mut bd, mut br) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut prev: Option<usize> = None;
    for (i, q) in s.iter().enumerate() {
        let p = [q.x + off * q.psi.cos(), q.y + off * q.psi.sin()];
        let (seg, w, e) = match prev {
            None => path.project_window(p, 0, path.segments()),
            Some(k) => path.project_window(p, k as isize - behind, window),
        };
        prev = Some(seg);
        let u_ref = path.speed[seg] + w * (path.speed[seg + 1] - path.speed[seg]);
        ey[i] = e;
        ev[i] = q.u - u_ref;
        bd[i] = q.v.atan2(q.u);
        br[i] = path.sideslip[seg] + w * (path.sideslip[seg + 1] - path.sideslip[seg]);
    }
    let t: Vec<f64> = s.iter().map(|q| q.t).collect();
    Ok(TrackingErrors {
        rms_ey: rms(&t, &ey),
        rms_ev: rms(&t, &ev),
        rms_beta_drv: rms(&t, &bd),
        rms_beta_ref: rms(&t, &br),
        rms_delta_rate: rms(&t, &steer_rate(lap)),
    })
}

/// All indicators of one lap.
#[derive(Clone, Debug, PartialEq)]
pub struct LapMetrics {
    pub driver: String,
    pub condition: String,
    pub lap: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub lap_time: f64,
    pub steer_energy: f64,
    pub errors: TrackingErrors,
}

pub fn score_lap(lap: &Lap, path: &ReferencePath, frame: ReferenceFrame, driver: &str, condition: &str) -> Result<LapMetrics> {
    let rate = lap.log.sample_rate();
    if rate < MIN_RATE {
        log::warn!("lap {}: sample rate {rate:.1} Hz is below {MIN_RATE} Hz", lap.index);
    }
    Ok(LapMetrics {
        driver: driver.into(),
        condition: condition.into(),
        lap: lap.index,
        t_start: lap.t_start,
        t_end: lap.t_end,
        lap_time: lap.lap_time(),
        steer_energy: steer_energy(&lap.log)?,
        errors: tracking_errors(&lap.log, path, frame)?,
    })
}

pub const LAP_HEADER: [&str; 12] = [
    "driver", "condition", "lap", "t_start", "t_end", "LT", "E_s", "rms_ey", "rms_ev", "rms_beta_drv",
    "rms_beta_ref", "rms_delta_rate",
];

pub fn write_lap_csv(path: &Path, laps: &[LapMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LAP_HEADER)?;
    for l in laps {
        let e = &l.errors;
        let mut rec = vec![l.driver.clone(), l.condition.clone(), l.lap.to_string()];
        rec.extend(
            [l.t_start, l.t_end, l.lap_time, l.steer_energy, e.rms_ey, e.rms_ev, e.rms_beta_drv, e.rms_beta_ref, e.rms_delta_rate]
                .iter()
                .map(|v| format!("{v:.9e}")),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---- summaries ----

/// Percentile with linear interpolation between order statistics,
/// `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MedianIqr {
    pub median: f64,
    pub iqr: f64,
    pub laps: usize,
}

pub fn median_iqr(values: &[f64]) -> Option<MedianIqr> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(MedianIqr { median: percentile(&v, 0.5), iqr: percentile(&v, 0.75) - percentile(&v, 0.25), laps: v.len() })
}

/// A summarized indicator and how to print it.
#[derive(Clone, Copy, Debug)]
pub struct MetricSpec {
    pub name: &'static str,
    pub unit: &'static str,
    pub decimals: usize,
    pub get: fn(&LapMetrics) -> f64,
}

pub const METRICS: [MetricSpec; 7] = [
    MetricSpec { name: "Lap Time", unit: "s", decimals: 2, get: |l| l.lap_time },
    MetricSpec { name: "Steer Energy", unit: "rad^2/s", decimals: 0, get: |l| l.steer_energy },
    MetricSpec { name: "RMS e_y", unit: "m", decimals: 3, get: |l| l.errors.rms_ey },
    MetricSpec { name: "RMS e_v", unit: "m/s", decimals: 3, get: |l| l.errors.rms_ev },
    MetricSpec { name: "RMS beta_drv", unit: "rad", decimals: 4, get: |l| l.errors.rms_beta_drv },
    MetricSpec { name: "RMS beta_ref", unit: "rad", decimals: 4, get: |l| l.errors.rms_beta_ref },
    MetricSpec { name: "RMS delta_dot", unit: "rad/s", decimals: 3, get: |l| l.errors.rms_delta_rate },
];

/// `"84.87 [0.55]"`.
pub fn format_cell(m: &MedianIqr, decimals: usize) -> String {
    format!("{} [{}]", fixed(m.median, decimals), fixed(m.iqr, decimals))
}

fn fixed(v: f64, decimals: usize) -> String {
    minus(format!("{v:.decimals$}"))
}

fn minus(s: String) -> String {
    s.replace('-', "\u{2212}")
}

/// `"−0.22 (−0.3%)"`: difference `b − a` of medians with the change relative
/// to `a`; percentages under one are given to a tenth, the rest as integers.
pub fn format_delta(a: f64, b: f64, decimals: usize) -> String {
    let d = b - a;
    let pct = 100.0 * d / a;
    let p = if pct.abs() < 1.0 { format!("{pct:+.1}") } else { format!("{pct:+.0}") };
    minus(format!("{d:+.decimals$} ({p}%)"))
}

/// Median and IQR per metric for one (driver, condition) group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub driver: String,
    pub condition: String,
    pub stats: Vec<MedianIqr>,
}

const CONDITION_ORDER: [&str; 4] = ["NOM", "TLC", "FLC", "NOREF"];

fn condition_rank(c: &str) -> (usize, String) {
    (CONDITION_ORDER.iter().position(|o| o.eq_ignore_ascii_case(c)).unwrap_or(CONDITION_ORDER.len()), c.to_string())
}

/// Groups laps by driver and condition; empty groups cannot occur since
/// groups are formed from the laps themselves.
pub fn summarize(laps: &[LapMetrics]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, (usize, String)), Vec<&LapMetrics>> = BTreeMap::new();
    for l in laps {
        groups.entry((l.driver.clone(), condition_rank(&l.condition))).or_default().push(l);
    }
    groups
        .into_iter()
        .map(|((driver, (_, condition)), ls)| GroupSummary {
            driver,
            condition,
            stats: METRICS
                .iter()
                .map(|m| median_iqr(&ls.iter().map(|l| (m.get)(l)).collect::<Vec<_>>()).expect("non-empty group"))
                .collect(),
        })
        .collect()
}

/// Pairs reported as median differences, `(minuend, subtrahend)`.
pub const DELTA_PAIRS: [(&str, &str); 2] = [("FLC", "NOM"), ("TLC", "FLC")];

/// Markdown tables: one median [IQR] table per metric with drivers as rows
/// and conditions as columns, then the pairwise median differences of lap
/// time and steer energy.
pub fn markdown_summary(groups: &[GroupSummary]) -> String {
    let mut drivers: Vec<&str> = groups.iter().map(|g| g.driver.as_str()).collect();
    drivers.dedup();
    let mut conds: Vec<&str> = groups.iter().map(|g| g.condition.as_str()).collect();
    conds.sort_by_key(|c| condition_rank(c));
    conds.dedup();
    let find = |d: &str, c: &str| groups.iter().find(|g| g.driver == d && g.condition == c);
    let mut out = String::new();
    for (mi, m) in METRICS.iter().enumerate() {
        let _ = writeln!(out, "### {} ({}): median [IQR]\n", m.name, m.unit);
        let _ = writeln!(out, "| | {} |", conds.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(conds.len()));
        for d in &drivers {
            let cells: Vec<String> =
                conds.iter().map(|c| find(d, c).map_or("".into(), |g| format_cell(&g.stats[mi], m.decimals))).collect();
            let _ = writeln!(out, "| {d} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "### Pairwise median differences\n");
    let _ = writeln!(out, "| | driver | {} | {} |", METRICS[0].name, METRICS[1].name);
    let _ = writeln!(out, "|---|---|---|---|");
    for (a, b) in DELTA_PAIRS {
        for d in &drivers {
            let (Some(ga), Some(gb)) = (find(d, a), find(d, b)) else {
                continue;
            };
            let cells: Vec<String> =
                (0..2).map(|mi| format_delta(gb.stats[mi].median, ga.stats[mi].median, METRICS[mi].decimals)).collect();
            let _ = writeln!(out, "| {a} \u{2212} {b} | {d} | {} |", cells.join(" | "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::PlanNode;
    use crate::backoff::Variant;
    use std::f64::consts::PI;

    fn sample(t: f64, x: f64, y: f64, psi: f64, u: f64, delta: f64) -> TelemetrySample {
        TelemetrySample { t, u, v: 0.0, r: 0.0, x, y, psi, delta, wheels: None }
    }

    /// Constant-speed laps of a circle of radius 50 m, counter-clockwise,
    /// starting at angle `phi0`.
    fn circle_log(laps: f64, phi0: f64, rate: f64) -> TelemetryLog {
        let (r, u) = (50.0, 20.0);
        let period = 2.0 * PI * r / u;
        let n = (laps * period * rate) as usize;
        let samples = (0..=n)
            .map(|i| {
                let t = i as f64 / rate;
                let phi = phi0 + u * t / r;
                sample(t, r * phi.cos(), r * phi.sin(), phi + PI / 2.0, u, 0.05)
            })
            .collect();
        TelemetryLog::new(samples).unwrap()
    }

    fn circle_line() -> StartLine {
        StartLine { point: [50.0, 0.0], heading: PI / 2.0, half_width: 6.0 }
    }

    #[test]
    fn three_and_a_half_laps() {
        let laps = lap_split(&circle_log(3.5, -0.3, 100.0), &circle_line()).unwrap();
        assert_eq!(laps.len(), 3);
        let period = 2.0 * PI * 50.0 / 20.0;
        for l in &laps {
            assert!((l.lap_time() - period).abs() < 0.01, "{}", l.lap_time());
        }
    }

    #[test]
    fn reversed_travel_has_no_lap() {
        let mut log = circle_log(3.5, -0.3, 100.0);
        let t_end = log.samples.last().unwrap().t;
        log.samples.reverse();
        for s in &mut log.samples {
            s.t = t_end - s.t;
        }
        assert!(matches!(lap_split(&log, &circle_line()), Err(Error::NoCompleteLap)));
    }

    #[test]
    fn sine_steer_energy() {
        let n = 628;
        let samples: Vec<_> =
            (0..=n).map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                sample(t, 0.0, 0.0, 0.0, 1.0, t.sin())
            }).collect();
        let e = steer_energy(&TelemetryLog::new(samples).unwrap()).unwrap();
        assert!((e - PI).abs() < 1e-3, "{e}");
    }

    #[test]
    fn constant_steer_has_zero_energy() {
        let samples: Vec<_> = (0..200).map(|i| sample(i as f64 * 0.01, 0.0, 0.0, 0.0, 1.0, 0.2)).collect();
        assert_eq!(steer_energy(&TelemetryLog::new(samples).unwrap()).unwrap(), 0.0);
    }

    fn straight_reference() -> Reference {
        let nodes = (0..=100)
            .map(|k| PlanNode {
                k,
                s: k as f64,
                t: k as f64 / 20.0,
                x: k as f64,
                y: 0.0,
                psi: 0.0,
                u: 20.0,
                v: 0.0,
                r: 0.0,
                n: 0.0,
                chi: 0.0,
                delta: 0.0,
                x2a: 0.0,
                x2b: 0.0,
                sideslip: 0.0,
                saturation: [0.0; 2],
                beta_track: 0.0,
                beta_friction: [0.0; 2],
                friction_dual: [0.0; 2],
            })
            .collect();
        Reference { variant: Variant::Nom, closed: false, lap_time: 5.0, nodes }
    }

    #[test]
    fn constant_offset_on_straight() {
        let r = straight_reference();
        let path = ReferencePath::new(&r, ReferenceFrame::Com, RESAMPLE_SPACING).unwrap();
        let samples: Vec<_> = (0..400).map(|i| {
            let t = i as f64 * 0.01;
            sample(t, 5.0 + 20.0 * t, 0.3, 0.0, 20.0, 0.0)
        }).collect();
        let e = tracking_errors(&TelemetryLog::new(samples).unwrap(), &path, ReferenceFrame::Com).unwrap();
        assert!((e.rms_ey - 0.3).abs() < 1e-6);
        assert!(e.rms_ev.abs() < 1e-12);
        assert_eq!(e.rms_beta_drv, 0.0);
    }

    #[test]
    fn rms_is_homogeneous() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|x| (x * 1.3).sin() + 0.2).collect();
        let g: Vec<f64> = f.iter().map(|x| -2.5 * x).collect();
        assert!((rms(&t, &g) - 2.5 * rms(&t, &f)).abs() < 1e-12);
    }

    #[test]
    fn median_and_iqr() {
        let m = median_iqr(&[87.0, 85.0, 86.0]).unwrap();
        assert_eq!((m.median, m.iqr), (86.0, 1.0));
    }

    #[test]
    fn table_cells() {
        let m = median_iqr(&[84.32, 84.87, 85.42]).unwrap();
        assert_eq!(format_cell(&m, 2), "84.87 [0.55]");
        assert_eq!(format_delta(84.87, 84.65, 2), "\u{2212}0.22 (\u{2212}0.3%)");
        assert_eq!(format_delta(85.47, 87.32, 2), "+1.85 (+2%)");
        assert_eq!(format_delta(552.0, 103.0, 0), "\u{2212}449 (\u{2212}81%)");
    }

    proptest::proptest! {
        #[test]
        fn summary_is_permutation_invariant(v in proptest::collection::vec(60.0f64..120.0, 1..12), rot in 0usize..12) {
            let mut w = v.clone();
            let k = rot % w.len();
            w.rotate_left(k);
            proptest::prop_assert_eq!(median_iqr(&v), median_iqr(&w));
        }

        #[test]
        fn steer_energy_shift_invariant(shift in -100.0f64..100.0, a in 0.01f64..0.5) {
            let mk = |s: f64| TelemetryLog::new((0..150).map(|i| {
                let t = i as f64 * 0.02;
                sample(t + s, 0.0, 0.0, 0.0, 1.0, a * (3.0 * t).sin())
            }).collect()).unwrap();
            let (e0, e1) = (steer_energy(&mk(0.0)).unwrap(), steer_energy(&mk(shift)).unwrap());
            proptest::prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1e-12));
        }
    }
}
