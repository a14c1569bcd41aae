//! Natural cubic spline through planar points, parameterized by cumulative
//! chord length.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Segment {
    /// Polynomial coefficients per axis in the local variable s = u - u_i.
    coef: [[f64; 4]; 2],
    h: f64,
    /// Axis-aligned box containing the segment (its Bezier hull).
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Segment {
    fn eval(&self, s: f64) -> [f64; 2] {
        let f = |c: &[f64; 4]| c[0] + s * (c[1] + s * (c[2] + s * c[3]));
        [f(&self.coef[0]), f(&self.coef[1])]
    }

    fn deriv(&self, s: f64) -> [f64; 2] {
        let f = |c: &[f64; 4]| c[1] + s * (2.0 * c[2] + s * 3.0 * c[3]);
        [f(&self.coef[0]), f(&self.coef[1])]
    }

    fn deriv2(&self, s: f64) -> [f64; 2] {
        let f = |c: &[f64; 4]| 2.0 * c[2] + 6.0 * s * c[3];
        [f(&self.coef[0]), f(&self.coef[1])]
    }

    fn box_distance(&self, q: [f64; 2]) -> f64 {
        let dx = (self.lo[0] - q[0]).max(0.0).max(q[0] - self.hi[0]);
        let dy = (self.lo[1] - q[1]).max(0.0).max(q[1] - self.hi[1]);
        dx.hypot(dy)
    }

    /// Local parameter of the closest point to `q`, with its distance.
    fn closest(&self, q: [f64; 2]) -> (f64, f64) {
        const SAMPLES: usize = 16;
        let dist2 = |s: f64| {
            let p = self.eval(s);
            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
        };
        let mut best = (0.0, dist2(0.0));
        for k in 1..=SAMPLES {
            let s = self.h * k as f64 / SAMPLES as f64;
            let d = dist2(s);
            if d < best.1 {
                best = (s, d);
            }
        }
        // Newton on the stationarity condition, kept inside the segment
        let mut s = best.0;
        for _ in 0..30 {
            let p = self.eval(s);
            let d1 = self.deriv(s);
            let d2 = self.deriv2(s);
            let r = [p[0] - q[0], p[1] - q[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let gg = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if gg <= 0.0 {
                break;
            }
            let next = (s - g / gg).clamp(0.0, self.h);
            if (next - s).abs() <= 1e-15 * self.h.max(1.0) {
                s = next;
                break;
            }
            s = next;
        }
        let d = dist2(s);
        if d < best.1 {
            best = (s, d);
        }
        (best.0, best.1.sqrt())
    }
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub param: f64,
    pub point: [f64; 2],
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct ChordSpline {
    points: Vec<[f64; 2]>,
    knots: Vec<f64>,
    segments: Vec<Segment>,
}

impl ChordSpline {
    /// Fits the spline. Consecutive duplicate points are collapsed; at least
    /// two distinct points are required.
    pub fn fit(points: &[[f64; 2]]) -> Result<Self> {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NumericalFailure("non-finite spline sample".into()));
            }
            if pts.last() != Some(p) {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: pts.len(),
            });
        }
        let mut knots = vec![0.0];
        for w in pts.windows(2) {
            let chord = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            knots.push(knots.last().unwrap() + chord);
        }
        let n = pts.len() - 1;
        let mut coefs = [Vec::new(), Vec::new()];
        for (axis, out) in coefs.iter_mut().enumerate() {
            let y: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
            let m = natural_second_derivatives(&knots, &y);
            *out = (0..n)
                .map(|i| {
                    let h = knots[i + 1] - knots[i];
                    let b = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
                    [y[i], b, m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * h)]
                })
                .collect();
        }
        let segments = (0..n)
            .map(|i| {
                let h = knots[i + 1] - knots[i];
                let coef = [coefs[0][i], coefs[1][i]];
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for axis in 0..2 {
                    let c = coef[axis];
                    let (a, b, cc, d) = (c[0], c[1] * h, c[2] * h * h, c[3] * h * h * h);
                    let ctrl = [a, a + b / 3.0, a + 2.0 * b / 3.0 + cc / 3.0, a + b + cc + d];
                    for v in ctrl {
                        lo[axis] = lo[axis].min(v);
                        hi[axis] = hi[axis].max(v);
                    }
                }
                Segment { coef, h, lo, hi }
            })
            .collect();
        Ok(ChordSpline {
            points: pts,
            knots,
            segments,
        })
    }

    /// Interpolated samples after duplicate removal.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Chord-length parameter of each sample.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn length_param(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn locate(&self, u: f64) -> usize {
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.segments.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.segments.len() - 1),
        }
    }

    /// Point at chord parameter `u`, clamped to the fitted range.
    pub fn eval(&self, u: f64) -> [f64; 2] {
        let u = u.clamp(0.0, self.length_param());
        let i = self.locate(u);
        if u == self.knots[i] {
            return self.points[i];
        }
        if u == self.knots[i + 1] {
            return self.points[i + 1];
        }
        self.segments[i].eval(u - self.knots[i])
    }

    pub fn derivative(&self, u: f64) -> [f64; 2] {
        let u = u.clamp(0.0, self.length_param());
        let i = self.locate(u);
        self.segments[i].deriv(u - self.knots[i])
    }

    /// Closest point on the curve to `q`.
    pub fn closest_point(&self, q: [f64; 2]) -> ClosestPoint {
        let mut order: Vec<(f64, usize)> = self
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.box_distance(q), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = ClosestPoint {
            param: 0.0,
            point: self.points[0],
            distance: f64::INFINITY,
        };
        for (bound, i) in order {
            if bound >= best.distance {
                break;
            }
            let (s, d) = self.segments[i].closest(q);
            if d < best.distance {
                let param = self.knots[i] + s;
                best = ClosestPoint {
                    param,
                    point: self.segments[i].eval(s),
                    distance: d,
                };
            }
        }
        best
    }
}

/// Second derivatives of the natural cubic spline through (x, y).
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut lower = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        lower[j] = h0;
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for j in 1..k {
        let w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    let mut sol = vec![0.0; k];
    sol[k - 1] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        sol[j] = (rhs[j] - upper[j] * sol[j + 1]) / diag[j];
    }
    m[1..n - 1].copy_from_slice(&sol);
    m
}
