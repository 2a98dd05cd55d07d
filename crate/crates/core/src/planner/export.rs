//! Reference and ribbon files.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::backoff::Variant;
use crate::error::{Error, Result};
use crate::planner::{PlanNode, PlanResult};

pub const REFERENCE_HEADER: [&str; 22] = [
    "k", "s", "t", "x", "y", "psi", "u_ref", "v", "r", "n", "chi", "delta", "X2a", "X2b", "beta_ref", "S1",
    "S2", "beta_tlc", "beta_flc_front", "beta_flc_rear", "dual_front", "dual_rear",
];

pub const RIBBON_HEADER: [&str; 9] =
    ["k", "s", "x_center", "y_center", "x_left", "y_left", "x_right", "y_right", "color"];

/// Ribbon width [m].
pub const RIBBON_WIDTH: f64 = 1.0;

/// A reference read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub variant: Variant,
    pub closed: bool,
    pub lap_time: f64,
    pub nodes: Vec<PlanNode>,
}

impl From<&PlanResult> for Reference {
    fn from(p: &PlanResult) -> Self {
        Self { variant: p.variant, closed: p.closed, lap_time: p.lap_time, nodes: p.nodes.clone() }
    }
}

fn e(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn write_reference(path: &Path, plan: &Reference) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# variant={} closed={} lap_time={:.9e}", plan.variant, plan.closed, plan.lap_time)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(REFERENCE_HEADER)?;
    for p in &plan.nodes {
        let vals = [
            p.s, p.t, p.x, p.y, p.psi, p.u, p.v, p.r, p.n, p.chi, p.delta, p.x2a, p.x2b, p.sideslip,
            p.saturation[0], p.saturation[1], p.beta_track, p.beta_friction[0], p.beta_friction[1],
            p.friction_dual[0], p.friction_dual[1],
        ];
        let mut rec = vec![p.k.to_string()];
        rec.extend(vals.iter().map(|v| e(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_reference(path: &Path) -> Result<Reference> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = BufReader::new(text.as_bytes()).lines();
    let meta = lines.next().transpose()?.unwrap_or_default();
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| Error::Schema(format!("{}: missing reference metadata line", path.display())))?;
    let (mut variant, mut closed, mut lap_time) = (None, None, None);
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("variant", v)) => variant = Some(v.parse::<Variant>()?),
            Some(("closed", v)) => closed = v.parse::<bool>().ok(),
            Some(("lap_time", v)) => lap_time = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (Some(variant), Some(closed), Some(lap_time)) = (variant, closed, lap_time) else {
        return Err(Error::Schema(format!("{}: incomplete metadata {meta:?}", path.display())));
    };
    let body = text.split_once('\n').map(|(_, b)| b).unwrap_or("");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let hdr = r.headers()?.clone();
    if hdr.iter().collect::<Vec<_>>() != REFERENCE_HEADER {
        return Err(Error::Schema(format!("{}: unexpected reference header", path.display())));
    }
    let mut nodes = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| Error::Schema(format!("bad number {:?} in column {}", &rec[i], REFERENCE_HEADER[i])))
        };
        let k = rec[0].trim().parse::<usize>().map_err(|_| Error::Schema(format!("bad node index {:?}", &rec[0])))?;
        nodes.push(PlanNode {
            k,
            s: num(1)?,
            t: num(2)?,
            x: num(3)?,
            y: num(4)?,
            psi: num(5)?,
            u: num(6)?,
            v: num(7)?,
            r: num(8)?,
            n: num(9)?,
            chi: num(10)?,
            delta: num(11)?,
            x2a: num(12)?,
            x2b: num(13)?,
            sideslip: num(14)?,
            saturation: [num(15)?, num(16)?],
            beta_track: num(17)?,
            beta_friction: [num(18)?, num(19)?],
            friction_dual: [num(20)?, num(21)?],
        });
    }
    if nodes.len() < 2 {
        return Err(Error::Schema(format!("{}: reference has {} nodes", path.display(), nodes.len())));
    }
    Ok(Reference { variant, closed, lap_time, nodes })
}

/// One ribbon row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RibbonPoint {
    pub k: usize,
    pub s: f64,
    pub center: [f64; 2],
    pub left: [f64; 2],
    pub right: [f64; 2],
    pub color: f64,
}

/// Ribbon along the reference translated by a rigid longitudinal offset
/// (positive forward) from the center of mass to the driver.
pub fn ribbon(nodes: &[PlanNode], driver_offset: f64) -> Vec<RibbonPoint> {
    let color = speed_color(nodes);
    nodes
        .iter()
        .zip(color)
        .map(|(p, c)| {
            let center = [p.x + driver_offset * p.psi.cos(), p.y + driver_offset * p.psi.sin()];
            // edges along the normal of the direction of travel
            let h = p.psi + p.sideslip;
            let nrm = [-h.sin(), h.cos()];
            let half = 0.5 * RIBBON_WIDTH;
            RibbonPoint {
                k: p.k,
                s: p.s,
                center,
                left: [center[0] + half * nrm[0], center[1] + half * nrm[1]],
                right: [center[0] - half * nrm[0], center[1] - half * nrm[1]],
                color: c,
            }
        })
        .collect()
}

/// Speed color in [0, 1]: braking nodes map below 0.5 by brake fraction,
/// the rest above 0.5 by speed; the fastest node is 1 and the hardest
/// braking node 0.
pub fn speed_color(nodes: &[PlanNode]) -> Vec<f64> {
    let braking = |p: &PlanNode| p.x2b < -1e-3 * (1.0 + p.x2a.abs());
    let max_brake = nodes.iter().map(|p| -p.x2b).fold(0.0, f64::max);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in nodes.iter().filter(|p| !braking(p)) {
        lo = lo.min(p.u);
        hi = hi.max(p.u);
    }
    let mut c: Vec<f64> = nodes
        .iter()
        .map(|p| {
            if braking(p) {
                0.5 * (1.0 - (-p.x2b) / max_brake)
            } else if hi > lo {
                0.5 + 0.5 * (p.u - lo) / (hi - lo)
            } else {
                1.0
            }
        })
        .collect();
    let argmax = |f: &dyn Fn(&PlanNode) -> f64| {
        (0..nodes.len()).fold(0, |b, i| if f(&nodes[i]) > f(&nodes[b]) { i } else { b })
    };
    if max_brake > 0.0 {
        c[argmax(&|p| -p.x2b)] = 0.0;
    }
    c[argmax(&|p| p.u)] = 1.0;
    c
}

pub fn write_ribbon(path: &Path, points: &[RibbonPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RIBBON_HEADER)?;
    for p in points {
        let mut rec = vec![p.k.to_string()];
        rec.extend(
            [p.s, p.center[0], p.center[1], p.left[0], p.left[1], p.right[0], p.right[1], p.color]
                .iter()
                .map(|v| e(*v)),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
