//! Curvilinear track description and spatial discretization.
//!
//! A track is a centerline sampled at increasing arc length `s`, with heading,
//! curvature and the left/right half-widths of the drivable corridor. Lateral
//! offsets are positive to the left of the direction of travel, so the
//! corridor is `-w_right <= n <= w_left`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackNode {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub w_left: f64,
    pub w_right: f64,
}

#[derive(Clone, Debug)]
pub struct TrackGeometry {
    /// For closed tracks the last node repeats the first at `s = total_length`.
    pub nodes: Vec<TrackNode>,
    pub total_length: f64,
    pub closed: bool,
}

/// Raw centerline sample as found in a track file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterlineSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub w_left: f64,
    pub w_right: f64,
}

/// Interpolated centerline point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub w_left: f64,
    pub w_right: f64,
}

impl TrackPoint {
    pub fn tangent(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    /// Unit normal pointing to the left of the direction of travel.
    pub fn normal(&self) -> [f64; 2] {
        [-self.theta.sin(), self.theta.cos()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Set when the requested offset had to be clamped to the corridor.
    pub clamped: bool,
}

const MIN_ROWS: usize = 10;
const CLOSURE_TOL: f64 = 1e-6;

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

impl TrackGeometry {
    /// Builds the geometry from centerline samples, computing heading and
    /// curvature by central differences (periodic for closed tracks) and
    /// smoothing curvature with a 5-point moving average.
    pub fn from_samples(samples: &[CenterlineSample], closed: bool) -> Result<Self> {
        if samples.len() < MIN_ROWS {
            return Err(Error::MalformedTrack(format!(
                "{} rows, need at least {MIN_ROWS}",
                samples.len()
            )));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].s > w[0].s) {
                return Err(Error::MalformedTrack(format!("s not increasing at row {}", i + 1)));
            }
        }
        if let Some(i) = samples.iter().position(|p| !(p.w_left > 0.0 && p.w_right > 0.0)) {
            return Err(Error::MalformedTrack(format!("non-positive width at row {i}")));
        }

        let mut pts: Vec<CenterlineSample> = samples.to_vec();
        let total_length;
        if closed {
            let first = pts[0];
            let last = *pts.last().unwrap();
            let gap = (last.x - first.x).hypot(last.y - first.y);
            if gap < CLOSURE_TOL {
                total_length = last.s - first.s;
                pts.pop();
            } else {
                let mut spacing: Vec<f64> = pts.windows(2).map(|w| w[1].s - w[0].s).collect();
                spacing.sort_by(|a, b| a.total_cmp(b));
                let median = spacing[spacing.len() / 2];
                if gap > 3.0 * median {
                    return Err(Error::Topology(format!(
                        "closing gap {gap:.3} m exceeds three sample spacings ({median:.3} m)"
                    )));
                }
                total_length = last.s - first.s + gap;
            }
        } else {
            total_length = pts.last().unwrap().s - pts[0].s;
        }

        let s0 = pts[0].s;
        let m = pts.len();
        let s_of = |i: isize| -> f64 {
            // periodic arc length extension
            let mi = m as isize;
            let wraps = i.div_euclid(mi);
            pts[i.rem_euclid(mi) as usize].s - s0 + wraps as f64 * total_length
        };
        let p_of = |i: isize| pts[i.rem_euclid(m as isize) as usize];

        let mut theta = vec![0.0; m];
        for i in 0..m as isize {
            let (a, b) = if closed {
                (p_of(i - 1), p_of(i + 1))
            } else if i == 0 {
                (p_of(0), p_of(1))
            } else if i == m as isize - 1 {
                (p_of(i - 1), p_of(i))
            } else {
                (p_of(i - 1), p_of(i + 1))
            };
            theta[i as usize] = (b.y - a.y).atan2(b.x - a.x);
        }
        // unwrap
        for i in 1..m {
            theta[i] = theta[i - 1] + wrap_angle(theta[i] - theta[i - 1]);
        }

        let mut kappa = vec![0.0; m];
        for i in 0..m as isize {
            let iu = i as usize;
            kappa[iu] = if closed {
                let tp = theta[(i + 1).rem_euclid(m as isize) as usize];
                let tm = theta[(i - 1).rem_euclid(m as isize) as usize];
                wrap_angle(tp - tm) / (s_of(i + 1) - s_of(i - 1))
            } else if i == 0 {
                (theta[1] - theta[0]) / (s_of(1) - s_of(0))
            } else if iu == m - 1 {
                (theta[iu] - theta[iu - 1]) / (s_of(i) - s_of(i - 1))
            } else {
                (theta[iu + 1] - theta[iu - 1]) / (s_of(i + 1) - s_of(i - 1))
            };
        }
        let kappa = smooth5(&kappa, closed);

        let mut nodes: Vec<TrackNode> = (0..m)
            .map(|i| TrackNode {
                s: pts[i].s - s0,
                x: pts[i].x,
                y: pts[i].y,
                theta: theta[i],
                kappa: kappa[i],
                w_left: pts[i].w_left,
                w_right: pts[i].w_right,
            })
            .collect();
        if closed {
            let first = nodes[0];
            let last_theta = nodes[m - 1].theta;
            let closing_theta = last_theta + wrap_angle(first.theta - last_theta);
            nodes.push(TrackNode { s: total_length, theta: closing_theta, ..first });
        }

        for (i, n) in nodes.iter().enumerate() {
            if (n.kappa * n.w_left.min(n.w_right)).abs() >= 1.0 {
                return Err(Error::MalformedTrack(format!(
                    "curvature {:.4} 1/m too tight for the corridor at node {i}",
                    n.kappa
                )));
            }
        }

        Ok(Self { nodes, total_length, closed })
    }

    /// Subtracts `d` from both half-widths (e.g. to keep a ribbon inside the track).
    pub fn with_width_deduction(mut self, d: f64) -> Result<Self> {
        for n in &mut self.nodes {
            n.w_left -= d;
            n.w_right -= d;
            if n.w_left <= 0.0 || n.w_right <= 0.0 {
                return Err(Error::MalformedTrack(format!("width deduction {d} m leaves no corridor")));
            }
        }
        Ok(self)
    }

    /// Wraps `s` into `[0, total_length)` for closed tracks, clamps otherwise.
    pub fn wrap_s(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.total_length)
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    fn segment(&self, s: f64) -> usize {
        let idx = self.nodes.partition_point(|n| n.s <= s);
        idx.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Centerline point at arc length `s`: cubic Hermite position, linear
    /// heading, curvature and widths.
    pub fn at(&self, s: f64) -> TrackPoint {
        let s = self.wrap_s(s);
        let i = self.segment(s);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let h = b.s - a.s;
        let t = ((s - a.s) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            2.0 * t * t * t - 3.0 * t * t + 1.0,
            t * t * t - 2.0 * t * t + t,
            -2.0 * t * t * t + 3.0 * t * t,
            t * t * t - t * t,
        );
        let x = h00 * a.x + h10 * h * a.theta.cos() + h01 * b.x + h11 * h * b.theta.cos();
        let y = h00 * a.y + h10 * h * a.theta.sin() + h01 * b.y + h11 * h * b.theta.sin();
        let lerp = |p: f64, q: f64| p + t * (q - p);
        TrackPoint {
            s,
            x,
            y,
            theta: lerp(a.theta, b.theta),
            kappa: lerp(a.kappa, b.kappa),
            w_left: lerp(a.w_left, b.w_left),
            w_right: lerp(a.w_right, b.w_right),
        }
    }

    /// World pose of the point at lateral offset `e` (positive left) from the
    /// centerline at `s`.
    pub fn offset_to_world(&self, s: f64, e: f64) -> WorldPose {
        let p = self.at(s);
        let limit = p.w_left.max(p.w_right);
        let clamped = e.abs() > limit;
        let e = e.clamp(-limit, limit);
        let nrm = p.normal();
        WorldPose { x: p.x + e * nrm[0], y: p.y + e * nrm[1], heading: p.theta, clamped }
    }

    /// Frenet projection of a world point near arc length `s_guess`.
    /// Returns `(s, e)` with `e` positive to the left.
    pub fn project(&self, x: f64, y: f64, s_guess: f64) -> (f64, f64) {
        let mut s = s_guess;
        for _ in 0..20 {
            let p = self.at(s);
            let d = [x - p.x, y - p.y];
            let t = p.tangent();
            let along = d[0] * t[0] + d[1] * t[1];
            let nrm = p.normal();
            let e = d[0] * nrm[0] + d[1] * nrm[1];
            let step = along / (1.0 - e * p.kappa).max(0.1);
            s += step;
            if !self.closed {
                s = s.clamp(0.0, self.total_length);
            }
            if step.abs() < 1e-12 {
                break;
            }
        }
        let p = self.at(s);
        let nrm = p.normal();
        let e = (x - p.x) * nrm[0] + (y - p.y) * nrm[1];
        (self.wrap_s(s), e)
    }

    /// Global projection by scanning all nodes; slower than [`Self::project`].
    pub fn project_global(&self, x: f64, y: f64) -> (f64, f64) {
        let best = self
            .nodes
            .iter()
            .min_by(|a, b| {
                let da = (a.x - x).hypot(a.y - y);
                let db = (b.x - x).hypot(b.y - y);
                da.total_cmp(&db)
            })
            .unwrap();
        self.project(x, y, best.s)
    }

    pub fn samples(&self) -> Vec<CenterlineSample> {
        let n = if self.closed { self.nodes.len() - 1 } else { self.nodes.len() };
        self.nodes[..n]
            .iter()
            .map(|p| CenterlineSample { s: p.s, x: p.x, y: p.y, w_left: p.w_left, w_right: p.w_right })
            .collect()
    }
}

fn smooth5(v: &[f64], periodic: bool) -> Vec<f64> {
    let m = v.len() as isize;
    (0..m)
        .map(|i| {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for k in -2..=2 {
                let j = i + k;
                if periodic {
                    acc += v[j.rem_euclid(m) as usize];
                    cnt += 1.0;
                } else if (0..m).contains(&j) {
                    acc += v[j as usize];
                    cnt += 1.0;
                }
            }
            acc / cnt
        })
        .collect()
}

/// Reads a track CSV with header `s,x,y,w_left,w_right`.
pub fn load_track(path: impl AsRef<Path>, closed: bool) -> Result<TrackGeometry> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let expected = ["s", "x", "y", "w_left", "w_right"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "track header must be `s,x,y,w_left,w_right`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let samples = rdr
        .deserialize::<CenterlineSample>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    TrackGeometry::from_samples(&samples, closed)
}

pub fn write_track(path: impl AsRef<Path>, track: &TrackGeometry) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for p in track.samples() {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform spatial discretization of a track.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    pub intervals: usize,
    /// Normalized abscissae `s_k / total_length`, `intervals + 1` entries.
    pub alpha: Vec<f64>,
    pub ds: f64,
    pub closed: bool,
    /// Centerline data resampled at the grid nodes.
    pub nodes: Vec<TrackPoint>,
}

impl SpatialGrid {
    pub fn s(&self, k: usize) -> f64 {
        self.alpha[k] * self.ds * self.intervals as f64
    }

    pub fn total_length(&self) -> f64 {
        self.ds * self.intervals as f64
    }

    /// Curvature at an arbitrary abscissa, linearly interpolated between grid nodes.
    pub fn kappa_at(&self, s: f64) -> f64 {
        let x = s / self.ds;
        let k = (x.floor() as isize).clamp(0, self.intervals as isize - 1) as usize;
        let t = x - k as f64;
        self.nodes[k].kappa + t * (self.nodes[k + 1].kappa - self.nodes[k].kappa)
    }
}

pub fn make_grid(track: &TrackGeometry, intervals: usize) -> Result<SpatialGrid> {
    if intervals < 10 {
        return Err(Error::GridTooCoarse(intervals));
    }
    let ds = track.total_length / intervals as f64;
    let nodes: Vec<TrackPoint> = (0..=intervals)
        .map(|k| {
            if k == intervals && track.closed {
                // keep the closing node numerically identical to node 0
                let mut p = track.at(0.0);
                p.s = track.total_length;
                p.theta = track.nodes.last().unwrap().theta;
                p
            } else {
                track.at(k as f64 * ds)
            }
        })
        .collect();
    Ok(SpatialGrid {
        intervals,
        alpha: (0..=intervals).map(|k| k as f64 / intervals as f64).collect(),
        ds,
        closed: track.closed,
        nodes,
    })
}
