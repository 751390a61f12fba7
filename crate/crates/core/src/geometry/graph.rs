//! Scalar graph functions `a : R^{n-1} -> R` and their gradients.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{BoxWindow, Frame};
use crate::symcalc::Vector;

/// A Lipschitz function of the `n - 1` tangential frame coordinates.
pub trait GraphFunction: Send + Sync + fmt::Debug {
    fn param_dim(&self) -> usize;

    fn value(&self, p: &Vector) -> f64;

    /// Closed-form gradient, when the graph provides one.
    fn gradient(&self, _p: &Vector) -> Option<Vector> {
        None
    }

    /// Kink positions per parameter axis, when known in closed form.
    fn declared_kinks(&self) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// Central-difference step `eps^{1/3} (1 + |p|)`.
pub fn fd_step(p: &Vector) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + p.norm())
}

/// Gradient of `g` at `p`, closed form if available, else central differences.
pub fn graph_gradient(g: &dyn GraphFunction, p: &Vector) -> Vector {
    if let Some(grad) = g.gradient(p) {
        return grad;
    }
    let h = fd_step(p);
    let mut grad = Vector::zeros(p.dim());
    for k in 0..p.dim() {
        let mut fwd = *p;
        let mut bwd = *p;
        fwd[k] += h;
        bwd[k] -= h;
        grad[k] = (g.value(&fwd) - g.value(&bwd)) / (2.0 * h);
    }
    grad
}

/// Graph given by an inline expression in `x1 … x_{n-1}`.
#[derive(Debug, Clone)]
pub struct ExprGraph {
    value: Expr,
    gradient: Option<Vec<Expr>>,
    kinks: Option<Vec<Vec<f64>>>,
}

impl ExprGraph {
    pub fn new(value: Expr, gradient: Option<Vec<Expr>>) -> Result<Self> {
        let d = value.num_vars();
        if let Some(g) = &gradient {
            if g.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: g.len() });
            }
        }
        Ok(Self { value, gradient, kinks: None })
    }

    pub fn parse(value: &str, gradient: Option<&[String]>, param_dim: usize) -> Result<Self> {
        let value = Expr::parse(value, param_dim)?;
        let gradient = gradient
            .map(|g| g.iter().map(|s| Expr::parse(s, param_dim)).collect::<std::result::Result<Vec<_>, _>>())
            .transpose()?;
        Self::new(value, gradient)
    }

    pub fn constant(value: f64, param_dim: usize) -> Self {
        Self {
            value: Expr::constant(value, param_dim),
            gradient: Some(vec![Expr::constant(0.0, param_dim); param_dim]),
            kinks: Some(vec![Vec::new(); param_dim]),
        }
    }

    pub fn with_kinks(mut self, kinks: Vec<Vec<f64>>) -> Self {
        self.kinks = Some(kinks);
        self
    }
}

impl GraphFunction for ExprGraph {
    fn param_dim(&self) -> usize {
        self.value.num_vars()
    }

    fn value(&self, p: &Vector) -> f64 {
        self.value.eval(p.as_slice())
    }

    fn gradient(&self, p: &Vector) -> Option<Vector> {
        self.gradient.as_ref().map(|g| {
            let mut out = Vector::zeros(g.len());
            for (k, e) in g.iter().enumerate() {
                out[k] = e.eval(p.as_slice());
            }
            out
        })
    }

    fn declared_kinks(&self) -> Option<Vec<Vec<f64>>> {
        self.kinks.clone()
    }
}

/// Continuous piecewise-linear function of one variable, extended linearly
/// beyond its first and last breakpoints.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearGraph {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinearGraph {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument("piecewise-linear graph needs ≥ 2 matching nodes".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("breakpoints must increase strictly".into()));
        }
        Ok(Self { xs, ys })
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&b| b <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    pub fn lipschitz(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

impl GraphFunction for PiecewiseLinearGraph {
    fn param_dim(&self) -> usize {
        1
    }

    fn value(&self, p: &Vector) -> f64 {
        let x = p[0];
        let k = self.segment(x);
        let slope = (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k]);
        self.ys[k] + slope * (x - self.xs[k])
    }

    fn gradient(&self, p: &Vector) -> Option<Vector> {
        let k = self.segment(p[0]);
        let slope = (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k]);
        Some(Vector::from_slice(&[slope]))
    }

    fn declared_kinks(&self) -> Option<Vec<Vec<f64>>> {
        Some(vec![self.xs[1..self.xs.len() - 1].to_vec()])
    }
}

/// Maximum (or minimum) of finitely many affine functions; Lipschitz with
/// constant `max |g_k|`.
#[derive(Debug, Clone)]
pub struct MaxAffineGraph {
    offsets: Vec<f64>,
    slopes: Vec<Vector>,
    take_min: bool,
}

impl MaxAffineGraph {
    pub fn new(offsets: Vec<f64>, slopes: Vec<Vector>, take_min: bool) -> Result<Self> {
        if offsets.is_empty() || offsets.len() != slopes.len() {
            return Err(Error::InvalidArgument("max-affine graph needs matching pieces".into()));
        }
        let d = slopes[0].dim();
        if slopes.iter().any(|s| s.dim() != d) {
            return Err(Error::InvalidArgument("slopes must share a dimension".into()));
        }
        Ok(Self { offsets, slopes, take_min })
    }

    fn active(&self, p: &Vector) -> usize {
        let mut best = 0;
        let mut best_v = self.offsets[0] + self.slopes[0].dot(p);
        for k in 1..self.offsets.len() {
            let v = self.offsets[k] + self.slopes[k].dot(p);
            if (self.take_min && v < best_v) || (!self.take_min && v > best_v) {
                best = k;
                best_v = v;
            }
        }
        best
    }

    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().map(Vector::norm).fold(0.0, f64::max)
    }
}

impl GraphFunction for MaxAffineGraph {
    fn param_dim(&self) -> usize {
        self.slopes[0].dim()
    }

    fn value(&self, p: &Vector) -> f64 {
        let k = self.active(p);
        self.offsets[k] + self.slopes[k].dot(p)
    }

    fn gradient(&self, p: &Vector) -> Option<Vector> {
        Some(self.slopes[self.active(p)])
    }
}

pub type Membership = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// Boundary of a region seen from a rotated frame: `a(s)` is the height at
/// which the line `s + t e_n` leaves the region, found by bisection.
#[derive(Clone)]
pub struct ImplicitGraph {
    frame: Frame,
    inside: Membership,
    reach: f64,
    kinks: Vec<Vec<f64>>,
}

impl fmt::Debug for ImplicitGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitGraph").field("frame", &self.frame).field("reach", &self.reach).finish()
    }
}

impl ImplicitGraph {
    /// `reach` bounds `|a|` over the parameter range of interest; the line is
    /// searched on `[-reach, reach]`.
    pub fn new(frame: Frame, inside: Membership, reach: f64, kinks: Vec<Vec<f64>>) -> Self {
        Self { frame, inside, reach, kinks }
    }
}

impl GraphFunction for ImplicitGraph {
    fn param_dim(&self) -> usize {
        self.frame.dim() - 1
    }

    fn value(&self, p: &Vector) -> f64 {
        let point = |t: f64| self.frame.to_global(&p.extend(t));
        let mut lo = -self.reach;
        let mut hi = self.reach;
        if !(self.inside)(&point(lo)) || (self.inside)(&point(hi)) {
            return f64::NAN;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.inside)(&point(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn declared_kinks(&self) -> Option<Vec<Vec<f64>>> {
        Some(self.kinks.clone())
    }
}

/// Locates kinks of a scalar function of one variable on `[lo, hi]` from
/// jumps of sampled secant slopes; each kink is placed at the intersection
/// of the secant lines on either side.
pub fn locate_kinks_1d(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    const N: usize = 2048;
    let h = (hi - lo) / N as f64;
    let xs: Vec<f64> = (0..=N).map(|k| lo + k as f64 * h).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Vec::new();
    }
    let sec: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let d2: Vec<f64> = sec.windows(2).map(|w| w[1] - w[0]).collect();
    let mut mags: Vec<f64> = d2.iter().map(|d| d.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    let max_slope = sec.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let threshold = (100.0 * median).max(1e-7 * (1.0 + max_slope));

    let mut kinks = Vec::new();
    let mut k = 0;
    while k < d2.len() {
        if d2[k].abs() <= threshold {
            k += 1;
            continue;
        }
        let first = k;
        while k + 1 < d2.len() && d2[k + 1].abs() > threshold {
            k += 1;
        }
        let last = k;
        k += 1;
        // secant `first` is clean on the left, secant `last + 1` on the right
        let (xl, yl, sl) = (xs[first], ys[first], sec[first]);
        let (xr, yr, sr) = (xs[last + 2], ys[last + 2], sec[last + 1]);
        let lo_k = xs[first + 1];
        let hi_k = xs[last + 1];
        let x = if (sl - sr).abs() > 1e-14 {
            // yl + sl (x - xl) = yr + sr (x - xr)
            ((yr - sr * xr) - (yl - sl * xl)) / (sl - sr)
        } else {
            0.5 * (lo_k + hi_k)
        };
        kinks.push(x.clamp(lo_k, hi_k));
    }
    kinks
}

/// Kinks of `g` inside `window` (parameter coordinates), per axis.
///
/// Declared kinks are used when available. Otherwise kinks are detected by
/// sampling; in two parameter dimensions only kink lines parallel to a
/// coordinate axis are kept.
pub fn graph_kinks(g: &dyn GraphFunction, window: &BoxWindow) -> Vec<Vec<f64>> {
    let d = window.dim();
    if let Some(k) = g.declared_kinks() {
        return k
            .into_iter()
            .enumerate()
            .map(|(axis, ks)| {
                ks.into_iter().filter(|&x| x > window.lo()[axis] && x < window.hi()[axis]).collect()
            })
            .collect();
    }
    let center = window.center();
    (0..d)
        .map(|axis| {
            let transversal: Vec<Vector> = if d == 1 {
                vec![center]
            } else {
                let other = 1 - axis;
                [0.23, 0.5, 0.77]
                    .iter()
                    .map(|&frac| {
                        let mut p = center;
                        p[other] = window.lo()[other] + frac * (window.hi()[other] - window.lo()[other]);
                        p
                    })
                    .collect()
            };
            let mut lines = transversal.iter().map(|base| {
                let f = |x: f64| {
                    let mut p = *base;
                    p[axis] = x;
                    g.value(&p)
                };
                locate_kinks_1d(&f, window.lo()[axis], window.hi()[axis])
            });
            let first = lines.next().unwrap_or_default();
            let rest: Vec<Vec<f64>> = lines.collect();
            first
                .into_iter()
                .filter(|x| rest.iter().all(|r| r.iter().any(|y| (x - y).abs() < 1e-6)))
                .filter(|&x| x > window.lo()[axis] && x < window.hi()[axis])
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_graph_gradient_falls_back_to_differences() {
        let g = ExprGraph::parse("0.2*sin(3*x1)", None, 1).unwrap();
        let p = Vector::from_slice(&[0.4]);
        let fd = graph_gradient(&g, &p);
        assert!((fd[0] - 0.6 * (1.2f64).cos()).abs() < 1e-9);
    }

    #[test]
    fn piecewise_linear_values_and_kinks() {
        let g = PiecewiseLinearGraph::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.0]).unwrap();
        assert_eq!(g.value(&Vector::from_slice(&[0.25])), 0.25);
        assert_eq!(g.value(&Vector::from_slice(&[0.75])), 0.25);
        assert_eq!(g.value(&Vector::from_slice(&[1.5])), -0.5);
        assert_eq!(g.lipschitz(), 1.0);
        assert_eq!(g.declared_kinks().unwrap(), vec![vec![0.5]]);
    }

    #[test]
    fn sampled_kink_detection_finds_abs_corner() {
        let f = |x: f64| (x - 0.3137).abs();
        let k = locate_kinks_1d(&f, 0.0, 1.0);
        assert_eq!(k.len(), 1);
        assert!((k[0] - 0.3137).abs() < 1e-12, "{k:?}");
        let smooth = |x: f64| 0.2 * (3.0 * x).sin();
        assert!(locate_kinks_1d(&smooth, 0.0, 1.0).is_empty());
        let mixed = |x: f64| 0.2 * (3.0 * x).sin() + 0.5 * (x - 0.61).abs();
        let k = locate_kinks_1d(&mixed, 0.0, 1.0);
        assert_eq!(k.len(), 1);
        assert!((k[0] - 0.61).abs() < 1e-6, "{k:?}");
    }

    #[test]
    fn two_dimensional_kink_lines() {
        let g = ExprGraph::parse("abs(x1 - 0.4) + 0.1*x2", None, 2).unwrap();
        let w = BoxWindow::new(Vector::from_slice(&[0.0, 0.0]), Vector::from_slice(&[1.0, 1.0])).unwrap();
        let k = graph_kinks(&g, &w);
        assert_eq!(k[0].len(), 1);
        assert!((k[0][0] - 0.4).abs() < 1e-9);
        assert!(k[1].is_empty());
    }

    #[test]
    fn implicit_graph_recovers_rotated_corner() {
        // unit-square corner at (1,1) seen along the outward diagonal
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let frame = Frame::new(
            Vector::from_slice(&[1.0, 1.0]),
            &[Vector::from_slice(&[s, -s]), Vector::from_slice(&[s, s])],
        )
        .unwrap();
        let inside: Membership = Arc::new(|x: &Vector| x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0);
        let g = ImplicitGraph::new(frame, inside, 1.0, vec![vec![0.0]]);
        for &p in &[-0.3, -0.1, 0.05, 0.2] {
            let v = g.value(&Vector::from_slice(&[p]));
            assert!((v + f64::abs(p)).abs() < 1e-14, "a({p}) = {v}");
        }
    }
}
