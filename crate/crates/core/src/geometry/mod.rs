//! Lipschitz graph charts and the cone constructions attached to them.
//!
//! A chart describes the boundary locally as `{x_n = a(x')}` in an
//! orthonormal frame, with the domain below the graph. Directions close
//! enough to `e_n` see the boundary as a graph again (`a_xi`), which is what
//! makes limits along rays well defined.

mod domain;
mod graph;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::symcalc::{check_space_dim, Vector};

pub use domain::{BoundaryPatch, Domain};
pub use graph::{
    fd_step, graph_gradient, graph_kinks, locate_kinks_1d, ExprGraph, GraphFunction, ImplicitGraph,
    MaxAffineGraph, Membership, PiecewiseLinearGraph,
};

const ORTHONORMAL_TOL: f64 = 1e-12;
const LIPSCHITZ_SLACK: f64 = 1e-9;
const AUDIT_PAIRS: usize = 1000;
const AUDIT_SEED: u64 = 0x00c0_11a2_5eed;

/// Orthonormal frame `(e_1, …, e_n)` anchored at `origin`.
#[derive(Clone, Copy, PartialEq)]
pub struct Frame {
    origin: Vector,
    axes: [Vector; 3],
    dim: usize,
}

impl Frame {
    pub fn new(origin: Vector, axes: &[Vector]) -> Result<Self> {
        let dim = origin.dim();
        check_space_dim(dim)?;
        if axes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: axes.len() });
        }
        for a in axes {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: a.dim() });
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                let deviation = (axes[i].dot(&axes[j]) - target).abs();
                if !(deviation < ORTHONORMAL_TOL) {
                    return Err(Error::NonOrthonormalFrame { i: i + 1, j: j + 1, deviation });
                }
            }
        }
        let mut stored = [Vector::zeros(dim); 3];
        stored[..dim].copy_from_slice(axes);
        Ok(Self { origin, axes: stored, dim })
    }

    pub fn identity(dim: usize) -> Self {
        let mut axes = [Vector::zeros(dim); 3];
        for (i, a) in axes.iter_mut().enumerate().take(dim) {
            *a = Vector::unit(dim, i);
        }
        Self { origin: Vector::zeros(dim), axes, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Vector {
        self.origin
    }

    pub fn axis(&self, i: usize) -> Vector {
        self.axes[i]
    }

    /// The graph direction `e_n`.
    pub fn normal_axis(&self) -> Vector {
        self.axes[self.dim - 1]
    }

    pub fn to_local(&self, x: &Vector) -> Vector {
        self.dir_to_local(&(*x - self.origin))
    }

    pub fn to_global(&self, p: &Vector) -> Vector {
        self.origin + self.dir_to_global(p)
    }

    pub fn dir_to_local(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = self.axes[i].dot(v);
        }
        out
    }

    pub fn dir_to_global(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out += self.axes[i] * v[i];
        }
        out
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("origin", &self.origin)
            .field("axes", &&self.axes[..self.dim])
            .finish()
    }
}

/// Axis-aligned box `[lo, hi]` in some coordinate system, of dimension 1 to 3.
#[derive(Clone, Copy, PartialEq)]
pub struct BoxWindow {
    lo: Vector,
    hi: Vector,
}

impl BoxWindow {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return Err(Error::DimensionMismatch { expected: lo.dim(), found: hi.dim() });
        }
        for k in 0..lo.dim() {
            if !(lo[k] < hi[k]) {
                return Err(Error::InvalidArgument(format!(
                    "box side {k} is empty: [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        Self::new(Vector::new(&lo)?, Vector::new(&hi)?)
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> Vector {
        self.lo
    }

    pub fn hi(&self) -> Vector {
        self.hi
    }

    pub fn center(&self) -> Vector {
        (self.lo + self.hi) * 0.5
    }

    pub fn width(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn diam(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn contains(&self, p: &Vector) -> bool {
        (0..self.dim()).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn contains_open(&self, p: &Vector) -> bool {
        (0..self.dim()).all(|k| p[k] > self.lo[k] && p[k] < self.hi[k])
    }

    /// `other ⊂⊂ self`: the closure of `other` lies in the interior of `self`.
    pub fn compactly_contains(&self, other: &BoxWindow) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|k| other.lo[k] > self.lo[k] && other.hi[k] < self.hi[k])
    }

    /// The box of the first `n - 1` coordinates.
    pub fn head(&self) -> BoxWindow {
        BoxWindow { lo: self.lo.head(), hi: self.hi.head() }
    }

    pub fn last_range(&self) -> (f64, f64) {
        (self.lo.last(), self.hi.last())
    }

    /// Appends a coordinate range `[lo, hi]`.
    pub fn extend(&self, lo: f64, hi: f64) -> BoxWindow {
        BoxWindow { lo: self.lo.extend(lo), hi: self.hi.extend(hi) }
    }

    /// Grows every side by `margin` on both ends.
    pub fn inflate(&self, margin: f64) -> BoxWindow {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for k in 0..self.dim() {
            lo[k] -= margin;
            hi[k] += margin;
        }
        BoxWindow { lo, hi }
    }

    /// Tensor grid with `per_axis` points per side, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vector> {
        let d = self.dim();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = self.lo;
                for k in 0..d {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    p[k] = self.lo[k] + self.width(k) * i as f64 / (per_axis - 1) as f64;
                }
                p
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        let mut p = self.lo;
        for k in 0..self.dim() {
            p[k] = rng.gen_range(self.lo[k]..=self.hi[k]);
        }
        p
    }
}

impl fmt::Debug for BoxWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?} .. {:?}]", self.lo, self.hi)
    }
}

/// `alpha = L / sqrt(1 + L^2)`, the cosine-type aperture of the cone `C`.
pub fn cone_aperture(l: f64) -> Result<f64> {
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be finite and ≥ 0, got {l}")));
    }
    Ok(l / (1.0 + l * l).sqrt())
}

/// `eta0 = sqrt(2 - 2 alpha)`: unit directions within `eta0` of `e_n` lie in `C`.
pub fn admissible_radius(l: f64) -> f64 {
    // 2 - 2 alpha = 2 / (r (r + L)) with r = sqrt(1 + L^2), free of cancellation
    let r = (1.0 + l * l).sqrt();
    (2.0 / (r * (r + l))).sqrt()
}

/// Strict membership `|zeta_n| > alpha |zeta|`, with `zeta` in frame coordinates.
pub fn in_cone(zeta: &Vector, l: f64) -> Result<bool> {
    let norm = zeta.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    cone_aperture(l)?;
    // |zeta_n|^2 (1 + L^2) > L^2 |zeta|^2, exact on the cone boundary
    Ok(zeta.last() * zeta.last() * (1.0 + l * l) > l * l * zeta.norm_sq())
}

/// Aperture `beta` of the cone `C_xi = {|zeta·xi| > beta |zeta|}` around an
/// admissible unit direction.
pub fn cone_beta(xi: &Vector, l: f64) -> Result<f64> {
    check_unit(xi)?;
    let alpha = cone_aperture(l)?;
    if !in_cone(xi, l)? {
        return Err(Error::OutsideCone { alpha });
    }
    let c0 = (xi.last().abs() - alpha).min(std::f64::consts::SQRT_2);
    Ok((2.0 - c0 * c0) / 2.0)
}

/// Lipschitz constant `beta / sqrt(1 - beta^2)` of the reparametrized graph.
pub fn reparametrized_lipschitz(beta: f64) -> f64 {
    beta / (1.0 - beta * beta).sqrt()
}

/// `sqrt(1 + |grad a|^2)` at a parameter point.
pub fn area_weight(g: &dyn GraphFunction, p: &Vector) -> f64 {
    (1.0 + graph_gradient(g, p).norm_sq()).sqrt()
}

fn check_unit(v: &Vector) -> Result<()> {
    if (v.norm() - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::InvalidArgument(format!("direction {v:?} is not a unit vector")));
    }
    Ok(())
}

/// Local boundary description `Omega ∩ A' = {x in A' : x_n < a(x')}`.
#[derive(Clone)]
pub struct LipschitzGraphChart {
    frame: Frame,
    graph: Arc<dyn GraphFunction>,
    lipschitz: f64,
    inner: BoxWindow,
    outer: BoxWindow,
}

impl fmt::Debug for LipschitzGraphChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzGraphChart")
            .field("frame", &self.frame)
            .field("graph", &self.graph)
            .field("lipschitz", &self.lipschitz)
            .field("inner", &self.inner)
            .field("outer", &self.outer)
            .finish()
    }
}

impl LipschitzGraphChart {
    /// Validates dimensions, `inner ⊂⊂ outer`, a sampled Lipschitz audit of
    /// the declared constant, and that the graph stays inside both windows.
    pub fn new(
        frame: Frame,
        graph: Arc<dyn GraphFunction>,
        lipschitz: f64,
        inner: BoxWindow,
        outer: BoxWindow,
    ) -> Result<Self> {
        let n = frame.dim();
        if graph.param_dim() != n - 1 {
            return Err(Error::DimensionMismatch { expected: n - 1, found: graph.param_dim() });
        }
        for w in [&inner, &outer] {
            if w.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: w.dim() });
            }
        }
        cone_aperture(lipschitz)?;
        if !outer.compactly_contains(&inner) {
            return Err(Error::WindowNotContained);
        }

        let base = outer.head();
        let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
        let mut observed: f64 = 0.0;
        for _ in 0..AUDIT_PAIRS {
            let p = base.sample(&mut rng);
            let q = base.sample(&mut rng);
            let d = (p - q).norm();
            if d == 0.0 {
                continue;
            }
            let quotient = (graph.value(&p) - graph.value(&q)).abs() / d;
            if !quotient.is_finite() {
                return Err(Error::NonFinite(p.as_slice().to_vec()));
            }
            observed = observed.max(quotient);
        }
        if observed > lipschitz + LIPSCHITZ_SLACK {
            return Err(Error::LipschitzViolation { declared: lipschitz, observed });
        }

        for (window, name) in [(&inner, "inner"), (&outer, "outer")] {
            let (lo, hi) = window.last_range();
            for p in window.head().grid(if n == 2 { 65 } else { 17 }) {
                let a = graph.value(&p);
                if !(a > lo && a < hi) {
                    return Err(Error::InvalidArgument(format!(
                        "graph value {a} at {p:?} leaves the {name} window height range [{lo}, {hi}]"
                    )));
                }
            }
        }

        Ok(Self { frame, graph, lipschitz, inner, outer })
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn graph(&self) -> &dyn GraphFunction {
        self.graph.as_ref()
    }

    pub fn graph_arc(&self) -> Arc<dyn GraphFunction> {
        Arc::clone(&self.graph)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn inner(&self) -> &BoxWindow {
        &self.inner
    }

    pub fn outer(&self) -> &BoxWindow {
        &self.outer
    }

    pub fn alpha(&self) -> f64 {
        cone_aperture(self.lipschitz).expect("validated at construction")
    }

    pub fn eta0(&self) -> f64 {
        admissible_radius(self.lipschitz)
    }

    /// Local coordinates `(x', a(x'))` of the boundary point above `x'`.
    pub fn local_boundary_point(&self, p: &Vector) -> Vector {
        p.extend(self.graph.value(p))
    }

    pub fn boundary_point(&self, p: &Vector) -> Vector {
        self.frame.to_global(&self.local_boundary_point(p))
    }

    /// Outward unit normal `(-grad a, 1) / sqrt(1 + |grad a|^2)` in frame coordinates.
    pub fn local_normal(&self, p: &Vector) -> Vector {
        let g = graph_gradient(self.graph.as_ref(), p);
        let w = (1.0 + g.norm_sq()).sqrt();
        (-g).extend(1.0) * (1.0 / w)
    }

    pub fn normal(&self, p: &Vector) -> Vector {
        self.frame.dir_to_global(&self.local_normal(p))
    }

    pub fn area_weight(&self, p: &Vector) -> f64 {
        area_weight(self.graph.as_ref(), p)
    }

    /// Whether a local point lies in `Omega ∩ A'`.
    pub fn local_inside(&self, z: &Vector) -> bool {
        self.outer.contains_open(z) && z.last() < self.graph.value(&z.head())
    }

    /// `|xi - e_n| < eta0` for a local unit direction.
    pub fn is_admissible(&self, xi: &Vector) -> bool {
        self.check_admissible(xi).is_ok()
    }

    pub fn check_admissible(&self, xi: &Vector) -> Result<()> {
        if xi.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: xi.dim() });
        }
        check_unit(xi)?;
        let distance = (*xi - Vector::unit(self.dim(), self.dim() - 1)).norm();
        let radius = self.eta0();
        if !(distance < radius) {
            return Err(Error::InadmissibleDirection { distance, radius });
        }
        Ok(())
    }

    /// The transversal direction `xi_i = (e_n + delta e_i) / sqrt(1 + delta^2)` (local).
    pub fn xi_i(&self, i: usize, delta: f64) -> Vector {
        let n = self.dim();
        let mut v = Vector::unit(n, n - 1);
        v[i] = delta;
        v * (1.0 / (1.0 + delta * delta).sqrt())
    }

    /// Largest `delta` with `|xi_i - e_n| = eta0 / 2`.
    pub fn default_delta(&self) -> f64 {
        // |xi_i - e_n|^2 = 2 - 2 / sqrt(1 + delta^2)
        let d = self.eta0() / 2.0;
        let c = 1.0 - d * d / 2.0;
        (1.0 / (c * c) - 1.0).sqrt()
    }
}

/// `a_xi(y)`: the unique `t` with `y + t xi` on the graph, for `y` in the
/// hyperplane orthogonal to `xi` (all in frame coordinates).
pub fn reparametrize(chart: &LipschitzGraphChart, xi: &Vector, y: &Vector) -> Result<f64> {
    chart.check_admissible(xi)?;
    if y.dim() != chart.dim() {
        return Err(Error::DimensionMismatch { expected: chart.dim(), found: y.dim() });
    }
    if y.dot(xi).abs() > 1e-9 * (1.0 + y.norm()) {
        return Err(Error::OutsidePatch);
    }
    let g = chart.graph();
    let f = |t: f64| {
        let z = *y + *xi * t;
        z.last() - g.value(&z.head())
    };
    let center = (g.value(&y.head()) - y.last()) / xi.last();
    let half = (1.0 + chart.lipschitz()) * chart.outer().diam();
    let (mut lo, mut hi) = (center - half, center + half);
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let root = *y + *xi * t;
    if !chart.outer().head().contains(&root.head()) {
        return Err(Error::OutsidePatch);
    }
    Ok(t)
}

/// Orthonormal basis of the hyperplane orthogonal to a unit vector.
pub fn orthogonal_basis(xi: &Vector) -> Vec<Vector> {
    let n = xi.dim();
    let mut basis: Vec<Vector> = Vec::with_capacity(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs()));
    for &k in &order {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = Vector::unit(n, k);
        v -= *xi * xi[k];
        for b in &basis {
            let c = b.dot(&v);
            v -= *b * c;
        }
        if let Ok(v) = v.normalized() {
            if v.norm() > 0.5 {
                basis.push(v);
            }
        }
    }
    basis
}

/// The chart's graph seen along an admissible direction: `a_xi` as a
/// function of coordinates on the hyperplane orthogonal to `xi`.
#[derive(Clone, Debug)]
pub struct ReparametrizedGraph {
    chart: LipschitzGraphChart,
    xi: Vector,
    frame: Frame,
    beta: f64,
}

impl ReparametrizedGraph {
    pub fn new(chart: LipschitzGraphChart, xi: Vector) -> Result<Self> {
        chart.check_admissible(&xi)?;
        let beta = cone_beta(&xi, chart.lipschitz())?;
        let mut axes = orthogonal_basis(&xi);
        axes.push(xi);
        let frame = Frame::new(Vector::zeros(chart.dim()), &axes)?;
        Ok(Self { chart, xi, frame, beta })
    }

    /// Frame (in chart coordinates) whose last axis is `xi`.
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn xi(&self) -> Vector {
        self.xi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lipschitz(&self) -> f64 {
        reparametrized_lipschitz(self.beta)
    }

    pub fn try_value(&self, p: &Vector) -> Result<f64> {
        let y = self.frame.to_global(&p.extend(0.0));
        reparametrize(&self.chart, &self.xi, &y)
    }

    /// Parameter coordinates of the projection of a chart-local point onto
    /// the hyperplane orthogonal to `xi`.
    pub fn project(&self, z: &Vector) -> Vector {
        self.frame.to_local(z).head()
    }
}

impl GraphFunction for ReparametrizedGraph {
    fn param_dim(&self) -> usize {
        self.chart.dim() - 1
    }

    fn value(&self, p: &Vector) -> f64 {
        self.try_value(p).unwrap_or(f64::NAN)
    }
}

/// `A_eps^xi = {y - t xi : y in ∂Omega ∩ A, 0 < t < eps}` for a local direction `xi`.
#[derive(Clone, Debug)]
pub struct Collar {
    chart: LipschitzGraphChart,
    xi: Vector,
    eps: f64,
    eps0: f64,
}

impl Collar {
    pub fn new(chart: LipschitzGraphChart, xi: Vector, eps: f64) -> Result<Self> {
        let eps0 = max_collar_thickness(&chart, &xi)?;
        if !(eps > 0.0) || eps > eps0 {
            return Err(Error::CollarTooThick { eps, max: eps0 });
        }
        Ok(Self { chart, xi, eps, eps0 })
    }

    pub fn chart(&self) -> &LipschitzGraphChart {
        &self.chart
    }

    pub fn xi(&self) -> Vector {
        self.xi
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }
}

/// Largest sampled thickness keeping `y - t xi` inside `Omega ∩ A'` for
/// boundary points `y` over the inner window, shrunk by 10%.
pub fn max_collar_thickness(chart: &LipschitzGraphChart, xi: &Vector) -> Result<f64> {
    chart.check_admissible(xi)?;
    let outer = chart.outer();
    let per_axis = if chart.dim() == 2 { 129 } else { 33 };
    let mut eps0 = f64::INFINITY;
    let samples = chart.inner().head().grid(per_axis);
    for p in &samples {
        let y = chart.local_boundary_point(p);
        let mut exit = f64::INFINITY;
        for k in 0..chart.dim() {
            if xi[k] > 0.0 {
                exit = exit.min((y[k] - outer.lo()[k]) / xi[k]);
            } else if xi[k] < 0.0 {
                exit = exit.min((outer.hi()[k] - y[k]) / -xi[k]);
            }
        }
        eps0 = eps0.min(exit);
    }
    let eps0 = 0.9 * eps0;
    if !(eps0 > 0.0) {
        return Err(Error::CollarTooThick { eps: 0.0, max: eps0 });
    }
    // the cone condition keeps rays inside; confirm on the samples
    for p in samples.iter().step_by(7) {
        let y = chart.local_boundary_point(p);
        for k in 1..=16 {
            let z = y - *xi * (eps0 * k as f64 / 16.0);
            if !chart.local_inside(&z) {
                return Err(Error::InvalidArgument(format!(
                    "ray from boundary point {y:?} leaves the chart region before eps0 = {eps0}"
                )));
            }
        }
    }
    Ok(eps0)
}
