//! Built-in test layouts: a circle, a stadium oval and a "peanut" loop whose
//! two concave flanks form left-right-left chicanes.

use std::f64::consts::PI;

use crate::error::Result;
use crate::track::{CenterlineSample, TrackGeometry};

/// Counter-clockwise circle starting at the origin heading +x.
pub fn circle(radius: f64, spacing: f64, half_width: f64) -> Result<TrackGeometry> {
    let len = 2.0 * PI * radius;
    let n = (len / spacing).round() as usize;
    let h = len / n as f64;
    let samples: Vec<_> = (0..n)
        .map(|i| {
            let s = i as f64 * h;
            let phi = s / radius;
            CenterlineSample {
                s,
                x: radius * phi.sin(),
                y: radius * (1.0 - phi.cos()),
                w_left: half_width,
                w_right: half_width,
            }
        })
        .collect();
    TrackGeometry::from_samples(&samples, true)
}

/// Stadium with two straights of `straight` metres joined by semicircles.
pub fn stadium(straight: f64, radius: f64, spacing: f64, half_width: f64) -> Result<TrackGeometry> {
    let arc = PI * radius;
    let len = 2.0 * straight + 2.0 * arc;
    let n = (len / spacing).round() as usize;
    let h = len / n as f64;
    let point = |s: f64| -> (f64, f64) {
        // start at the middle of the bottom straight
        let half = straight / 2.0;
        if s < half {
            (s, 0.0)
        } else if s < half + arc {
            let phi = (s - half) / radius;
            (half + radius * phi.sin(), radius * (1.0 - phi.cos()))
        } else if s < half + arc + straight {
            (half - (s - half - arc), 2.0 * radius)
        } else if s < half + 2.0 * arc + straight {
            let phi = (s - half - arc - straight) / radius;
            (-half - radius * phi.sin(), radius * (1.0 + phi.cos()))
        } else {
            (-half + (s - half - 2.0 * arc - straight), 0.0)
        }
    };
    let samples: Vec<_> = (0..n)
        .map(|i| {
            let s = i as f64 * h;
            let (x, y) = point(s);
            CenterlineSample { s, x, y, w_left: half_width, w_right: half_width }
        })
        .collect();
    TrackGeometry::from_samples(&samples, true)
}

/// Closed curve given by `f(phi)` for `phi` in `[0, 2 pi)`, resampled at
/// (approximately) uniform arc length.
pub fn parametric(
    f: impl Fn(f64) -> (f64, f64),
    spacing: f64,
    half_width: f64,
) -> Result<TrackGeometry> {
    const FINE: usize = 200_000;
    let mut cum = Vec::with_capacity(FINE + 1);
    cum.push(0.0);
    let mut prev = f(0.0);
    for i in 1..=FINE {
        let p = f(2.0 * PI * i as f64 / FINE as f64);
        let d = (p.0 - prev.0).hypot(p.1 - prev.1);
        cum.push(cum[i - 1] + d);
        prev = p;
    }
    let len = cum[FINE];
    let n = (len / spacing).round() as usize;
    let h = len / n as f64;
    let mut j = 0;
    let samples: Vec<_> = (0..n)
        .map(|i| {
            let s = i as f64 * h;
            while cum[j + 1] < s {
                j += 1;
            }
            let t = (s - cum[j]) / (cum[j + 1] - cum[j]);
            let phi = 2.0 * PI * (j as f64 + t) / FINE as f64;
            let (x, y) = f(phi);
            CenterlineSample { s, x, y, w_left: half_width, w_right: half_width }
        })
        .collect();
    TrackGeometry::from_samples(&samples, true)
}

/// 600 m stadium oval, 5 m half-widths.
pub fn oval() -> Result<TrackGeometry> {
    stadium(150.0, 150.0 / PI, 1.0, 5.0)
}

/// Peanut-shaped loop `r = 100 (1 + 0.4 cos 2 phi)` with 4 m half-widths.
pub fn chicane() -> Result<TrackGeometry> {
    parametric(
        |phi| {
            let r = 100.0 * (1.0 + 0.4 * (2.0 * phi).cos());
            (r * phi.cos(), r * phi.sin())
        },
        1.0,
        4.0,
    )
}
