//! Gauss-Legendre collocation tables on the unit interval.

use crate::error::{Error, Result};

/// Degree-`d` Gauss-Legendre scheme with the interval start as extra
/// interpolation point.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationGrid {
    pub degree: usize,
    /// Collocation abscissae in (0, 1), increasing.
    pub tau: Vec<f64>,
    /// `c[j][l]`: derivative of Lagrange basis `j` at collocation point `l`
    /// (basis 0 sits at the interval start, basis `j >= 1` at `tau[j - 1]`).
    pub c: Vec<Vec<f64>>,
    /// Basis values at the interval end (continuity).
    pub d: Vec<f64>,
    /// Quadrature weights of the collocation points.
    pub b: Vec<f64>,
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    // value and derivative by the three-term recurrence
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl CollocationGrid {
    pub fn gauss_legendre(degree: usize) -> Result<Self> {
        if !(1..=9).contains(&degree) {
            return Err(Error::Transcription(format!("collocation degree {degree} outside 1..=9")));
        }
        let mut roots = Vec::with_capacity(degree);
        let mut weights = Vec::with_capacity(degree);
        for i in 0..degree {
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (degree as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(degree, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(degree, x);
            roots.push(0.5 * (x + 1.0));
            weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        let mut pts = vec![0.0];
        pts.extend(&roots);
        let n = pts.len();
        let basis = |j: usize, t: f64| -> f64 {
            (0..n).filter(|&m| m != j).map(|m| (t - pts[m]) / (pts[j] - pts[m])).product()
        };
        let dbasis = |j: usize, t: f64| -> f64 {
            let mut acc = 0.0;
            for i in (0..n).filter(|&i| i != j) {
                let mut term = 1.0 / (pts[j] - pts[i]);
                for m in (0..n).filter(|&m| m != j && m != i) {
                    term *= (t - pts[m]) / (pts[j] - pts[m]);
                }
                acc += term;
            }
            acc
        };
        let c = (0..n).map(|j| roots.iter().map(|&t| dbasis(j, t)).collect()).collect();
        let d = (0..n).map(|j| basis(j, 1.0)).collect();
        Ok(Self { degree, tau: roots, c, d, b: weights })
    }

    /// Value of the interpolating polynomial through `vals` (start value
    /// first) at `t`.
    pub fn interpolate(&self, vals: &[f64], t: f64) -> f64 {
        let mut pts = vec![0.0];
        pts.extend(&self.tau);
        (0..pts.len())
            .map(|j| {
                let l: f64 =
                    (0..pts.len()).filter(|&m| m != j).map(|m| (t - pts[m]) / (pts[j] - pts[m])).product();
                l * vals[j]
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_exact_to_degree_2d_minus_1() {
        for d in 1..=5 {
            let g = CollocationGrid::gauss_legendre(d).unwrap();
            assert!(g.tau.windows(2).all(|w| w[0] < w[1]));
            assert!(g.tau[0] > 0.0 && g.tau[d - 1] < 1.0);
            for p in 0..2 * d {
                let q: f64 = g.tau.iter().zip(&g.b).map(|(t, w)| w * t.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "d={d} p={p}");
            }
            let p = 2 * d;
            let q: f64 = g.tau.iter().zip(&g.b).map(|(t, w)| w * t.powi(p as i32)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() > 1e-8);
        }
    }

    #[test]
    fn three_point_roots() {
        let g = CollocationGrid::gauss_legendre(3).unwrap();
        let r = 0.5 * (0.6f64).sqrt();
        assert!((g.tau[0] - (0.5 - r)).abs() < 1e-15);
        assert!((g.tau[1] - 0.5).abs() < 1e-15);
        assert!((g.b[1] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn differentiation_exact_on_polynomials() {
        let g = CollocationGrid::gauss_legendre(3).unwrap();
        // p(t) = 1 + 2t - t^2 + 0.5 t^3, degree 3 = number of collocation points
        let p = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t.powi(3);
        let dp = |t: f64| 2.0 - 2.0 * t + 1.5 * t * t;
        let mut vals = vec![p(0.0)];
        vals.extend(g.tau.iter().map(|&t| p(t)));
        for (l, &t) in g.tau.iter().enumerate() {
            let d: f64 = (0..4).map(|j| g.c[j][l] * vals[j]).sum();
            assert!((d - dp(t)).abs() < 1e-12);
        }
        let end: f64 = (0..4).map(|j| g.d[j] * vals[j]).sum();
        assert!((end - p(1.0)).abs() < 1e-12);
        assert!((g.interpolate(&vals, 0.3) - p(0.3)).abs() < 1e-12);
    }
}
