//! Composite Gauss–Legendre quadrature over boxes, sub-graph regions and
//! Lipschitz graphs, and extrapolation of sampled limits.

mod extrapolate;

use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{graph_gradient, graph_kinks, BoxWindow, Frame, GraphFunction};
use crate::symcalc::{SymTensor, Vector};

pub use extrapolate::{limit_extrapolate, LimitEstimate};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const CACHED_ORDERS: usize = 65;
static CACHE: [OnceLock<GaussLegendre>; CACHED_ORDERS] = [const { OnceLock::new() }; CACHED_ORDERS];

impl GaussLegendre {
    /// Roots of `P_order` by Newton iteration from Chebyshev-like guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss–Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared rule for small orders.
    pub fn cached(order: usize) -> &'static GaussLegendre {
        assert!((1..CACHED_ORDERS).contains(&order), "order {order} not cached");
        CACHE[order].get_or_init(|| GaussLegendre::new(order))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Resolution of the composite rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    /// Gauss points per cell.
    pub order: usize,
    /// Cells per axis at the coarsest level.
    pub cells_per_axis: usize,
    /// Number of levels, each halving the cell size.
    pub refinement_levels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { order: 4, cells_per_axis: 32, refinement_levels: 3 }
    }
}

impl QuadratureSpec {
    pub fn new(order: usize, cells_per_axis: usize, refinement_levels: usize) -> Result<Self> {
        let spec = Self { order, cells_per_axis, refinement_levels };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.order >= CACHED_ORDERS {
            return Err(Error::InvalidArgument(format!("quadrature order must be in 2..{CACHED_ORDERS}")));
        }
        if self.cells_per_axis < 4 {
            return Err(Error::InvalidArgument("need at least 4 cells per axis".into()));
        }
        if self.refinement_levels < 1 {
            return Err(Error::InvalidArgument("need at least one refinement level".into()));
        }
        Ok(())
    }

    pub fn cells_at(&self, level: usize) -> usize {
        self.cells_per_axis << level
    }

    /// Single-level spec at refinement `level`.
    pub fn level(&self, level: usize) -> Self {
        Self { order: self.order, cells_per_axis: self.cells_at(level), refinement_levels: 1 }
    }

    /// Single-level spec at the finest refinement.
    pub fn finest(&self) -> Self {
        self.level(self.refinement_levels - 1)
    }

    pub fn rule(&self) -> &'static GaussLegendre {
        GaussLegendre::cached(self.order)
    }
}

/// Values that can be integrated and extrapolated component-wise.
pub trait QuadValue: Copy + Send + Sync + fmt::Debug {
    fn n_components(&self) -> usize;
    fn component(&self, i: usize) -> f64;
    fn set_component(&mut self, i: usize, v: f64);
    /// Euclidean norm for vectors, Frobenius norm for tensors.
    fn magnitude(&self) -> f64;

    fn axpy(&mut self, w: f64, other: &Self) {
        for i in 0..self.n_components() {
            self.set_component(i, self.component(i) + w * other.component(i));
        }
    }

    fn is_finite(&self) -> bool {
        (0..self.n_components()).all(|i| self.component(i).is_finite())
    }

    fn scaled(&self, w: f64) -> Self {
        let mut out = *self;
        for i in 0..self.n_components() {
            out.set_component(i, w * self.component(i));
        }
        out
    }

    fn distance(&self, other: &Self) -> f64 {
        let mut d = *self;
        d.axpy(-1.0, other);
        d.magnitude()
    }
}

impl QuadValue for f64 {
    fn n_components(&self) -> usize {
        1
    }
    fn component(&self, _: usize) -> f64 {
        *self
    }
    fn set_component(&mut self, _: usize, v: f64) {
        *self = v;
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn axpy(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
}

impl QuadValue for Vector {
    fn n_components(&self) -> usize {
        self.dim()
    }
    fn component(&self, i: usize) -> f64 {
        self[i]
    }
    fn set_component(&mut self, i: usize, v: f64) {
        self[i] = v;
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for SymTensor {
    fn n_components(&self) -> usize {
        self.upper().len()
    }
    fn component(&self, i: usize) -> f64 {
        self.upper()[i]
    }
    fn set_component(&mut self, i: usize, v: f64) {
        self.upper_mut()[i] = v;
    }
    fn magnitude(&self) -> f64 {
        self.frobenius()
    }
}

impl<const N: usize> QuadValue for [f64; N] {
    fn n_components(&self) -> usize {
        N
    }
    fn component(&self, i: usize) -> f64 {
        self[i]
    }
    fn set_component(&mut self, i: usize, v: f64) {
        self[i] = v;
    }
    fn magnitude(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Composite rule on `[lo, hi]`: `cells` uniform cells with interior
/// `breaks` inserted, moving a uniform cell boundary onto a break when they
/// are closer than a quarter cell.
pub fn composite_rule(lo: f64, hi: f64, cells: usize, breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    if !(hi > lo) {
        return Vec::new();
    }
    let points = cell_points(lo, hi, cells, breaks);
    let g = GaussLegendre::cached(order);
    let mut out = Vec::with_capacity((points.len() - 1) * order);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in g.nodes().iter().zip(g.weights()) {
            out.push((mid + half * x, half * wt));
        }
    }
    out
}

fn cell_points(lo: f64, hi: f64, cells: usize, breaks: &[f64]) -> Vec<f64> {
    let cells = cells.max(1);
    let h = (hi - lo) / cells as f64;
    let mut points: Vec<f64> = (0..=cells).map(|k| lo + h * k as f64).collect();
    points[cells] = hi;
    let mut extra = Vec::new();
    for &b in breaks {
        if !(b > lo && b < hi) {
            continue;
        }
        let k = ((b - lo) / h).round() as usize;
        if k > 0 && k < cells && (points[k] - b).abs() < 0.25 * h && (points[k] - (lo + h * k as f64)).abs() == 0.0 {
            points[k] = b;
        } else {
            extra.push(b);
        }
    }
    points.extend(extra);
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    points
}

/// Maximal sub-intervals of `[lo, hi]` on which `pred` holds, located by
/// sampling at `samples + 1` points and bisecting sign changes.
pub fn true_intervals(pred: &dyn Fn(f64) -> bool, lo: f64, hi: f64, samples: usize) -> Vec<(f64, f64)> {
    let n = samples.max(2);
    let xs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let flags: Vec<bool> = xs.iter().map(|&x| pred(x)).collect();
    let refine = |mut a: f64, mut b: f64, fa: bool| {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if pred(m) == fa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start = if flags[0] { Some(lo) } else { None };
    for k in 0..n {
        if flags[k] != flags[k + 1] {
            let x = refine(xs[k], xs[k + 1], flags[k]);
            if flags[k] {
                out.push((start.take().unwrap_or(lo), x));
            } else {
                start = Some(x);
            }
        }
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out
}

/// Supplies interior breakpoints of the segment `origin + s dir`, `s in (s0, s1)`,
/// where an integrand loses smoothness.
pub trait ColumnSplit: Sync {
    fn breaks(&self, origin: &Vector, dir: &Vector, s0: f64, s1: f64, out: &mut Vec<f64>);
}

/// A one-dimensional integration segment `origin + s dir`, `s in (s0, s1)`,
/// carrying the Jacobian weight of its base node.
#[derive(Debug, Clone)]
pub struct Column {
    pub origin: Vector,
    pub dir: Vector,
    pub s0: f64,
    pub s1: f64,
    pub weight: f64,
    pub breaks: Vec<f64>,
}

/// A quadrature node inside a column.
#[derive(Debug, Clone, Copy)]
pub struct ColumnPoint {
    pub column: usize,
    pub s: f64,
    pub x: Vector,
}

const CHUNK: usize = 16;

/// `sum_columns weight * int_{s0}^{s1} f(origin + s dir) ds`.
///
/// Chunks of columns are summed independently and then added in column
/// order, so the result does not depend on the thread count.
pub fn integrate_columns<V: QuadValue>(
    columns: &[Column],
    cells: usize,
    order: usize,
    splitters: &[&dyn ColumnSplit],
    f: &(dyn Fn(&ColumnPoint) -> Result<V> + Sync),
    zero: V,
) -> Result<V> {
    let chunk_sum = |(chunk_idx, chunk): (usize, &[Column])| -> Result<V> {
        let mut acc = zero;
        let mut breaks = Vec::new();
        for (offset, col) in chunk.iter().enumerate() {
            if !(col.s1 > col.s0) || col.weight == 0.0 {
                continue;
            }
            breaks.clear();
            breaks.extend_from_slice(&col.breaks);
            for sp in splitters {
                sp.breaks(&col.origin, &col.dir, col.s0, col.s1, &mut breaks);
            }
            let mut col_acc = zero;
            for (s, w) in composite_rule(col.s0, col.s1, cells, &breaks, order) {
                let x = col.origin + col.dir * s;
                let v = f(&ColumnPoint { column: chunk_idx * CHUNK + offset, s, x })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(x.as_slice().to_vec()));
                }
                col_acc.axpy(w, &v);
            }
            acc.axpy(col.weight, &col_acc);
        }
        Ok(acc)
    };
    let partial: Vec<V> = if columns.len() > 4 * CHUNK {
        columns.par_chunks(CHUNK).enumerate().map(chunk_sum).collect::<Result<Vec<_>>>()?
    } else {
        columns.chunks(CHUNK).enumerate().map(chunk_sum).collect::<Result<Vec<_>>>()?
    };
    let mut total = zero;
    for p in &partial {
        total.axpy(1.0, p);
    }
    Ok(total)
}

/// Pointwise-defined lower or upper end of the columns of a region.
pub enum Height<'a> {
    Const(f64),
    Graph(&'a dyn GraphFunction),
    Fn(&'a (dyn Fn(&Vector) -> f64 + Sync)),
}

impl Height<'_> {
    fn at(&self, p: &Vector) -> f64 {
        match self {
            Height::Const(c) => *c,
            Height::Graph(g) => g.value(p),
            Height::Fn(f) => f(p),
        }
    }

    fn kinks(&self, base: &BoxWindow) -> Vec<Vec<f64>> {
        match self {
            Height::Graph(g) => graph_kinks(*g, base),
            _ => vec![Vec::new(); base.dim()],
        }
    }
}

/// `{frame.to_global((x', x_n)) : x' in base, lower(x') < x_n < upper(x')}`.
pub struct VolumeRegion<'a> {
    pub frame: Frame,
    pub base: BoxWindow,
    pub lower: Height<'a>,
    pub upper: Height<'a>,
    /// Extra breakpoints per base axis.
    pub base_breaks: Vec<Vec<f64>>,
}

impl<'a> VolumeRegion<'a> {
    /// Plain axis-aligned box.
    pub fn boxed(window: &BoxWindow) -> Self {
        let n = window.dim();
        let (lo, hi) = window.last_range();
        Self {
            frame: Frame::identity(n),
            base: window.head(),
            lower: Height::Const(lo),
            upper: Height::Const(hi),
            base_breaks: vec![Vec::new(); n - 1],
        }
    }

    /// `{x in window : x_n < a(x')}`.
    pub fn subgraph(frame: Frame, base: BoxWindow, lower: f64, graph: &'a dyn GraphFunction) -> Self {
        let d = base.dim();
        Self { frame, base, lower: Height::Const(lower), upper: Height::Graph(graph), base_breaks: vec![Vec::new(); d] }
    }

    pub fn columns(&self, cells: usize, order: usize) -> Vec<Column> {
        let d = self.base.dim();
        let mut breaks = self.lower.kinks(&self.base);
        for (k, b) in self.upper.kinks(&self.base).into_iter().enumerate() {
            breaks[k].extend(b);
        }
        for (k, b) in self.base_breaks.iter().enumerate() {
            breaks[k].extend_from_slice(b);
        }
        let rules: Vec<Vec<(f64, f64)>> = (0..d)
            .map(|k| composite_rule(self.base.lo()[k], self.base.hi()[k], cells, &breaks[k], order))
            .collect();
        let dir = self.frame.normal_axis();
        tensor_nodes(&rules)
            .into_iter()
            .map(|(p, w)| {
                let lo = self.lower.at(&p);
                let hi = self.upper.at(&p);
                Column {
                    origin: self.frame.to_global(&p.extend(0.0)),
                    dir,
                    s0: lo,
                    s1: hi.max(lo),
                    weight: w,
                    breaks: Vec::new(),
                }
            })
            .collect()
    }
}

/// Tensor product of one-dimensional rules; a single empty point for `d = 0`.
pub fn tensor_nodes(rules: &[Vec<(f64, f64)>]) -> Vec<(Vector, f64)> {
    let d = rules.len();
    if d == 0 {
        return vec![(Vector::zeros(1), 1.0)];
    }
    let mut out = vec![(Vec::<f64>::new(), 1.0)];
    for rule in rules {
        let mut next = Vec::with_capacity(out.len() * rule.len());
        for (p, w) in &out {
            for &(x, wx) in rule {
                let mut q = p.clone();
                q.push(x);
                next.push((q, w * wx));
            }
        }
        out = next;
    }
    out.into_iter().map(|(p, w)| (Vector::from_slice(&p), w)).collect()
}

/// A value with the refinement history that produced it.
#[derive(Debug, Clone)]
pub struct Integral<V> {
    pub value: V,
    /// Magnitude of the last refinement increment; `NaN` for a single level.
    pub error_estimate: f64,
    /// `(cell size, value)` per level, coarsest first.
    pub levels: Vec<(f64, V)>,
}

/// Runs `eval(level_spec)` over the refinement levels of `spec`.
pub fn refine<V: QuadValue>(spec: &QuadratureSpec, mut eval: impl FnMut(&QuadratureSpec) -> Result<V>) -> Result<Integral<V>> {
    spec.validate()?;
    let mut levels = Vec::with_capacity(spec.refinement_levels);
    for level in 0..spec.refinement_levels {
        let s = spec.level(level);
        levels.push((1.0 / s.cells_per_axis as f64, eval(&s)?));
    }
    let value = levels.last().expect("at least one level").1;
    let error_estimate = if levels.len() >= 2 { value.distance(&levels[levels.len() - 2].1) } else { f64::NAN };
    Ok(Integral { value, error_estimate, levels })
}

/// Volume integral over a region with refinement.
pub fn integrate_volume<V: QuadValue>(
    f: &(dyn Fn(&Vector) -> Result<V> + Sync),
    region: &VolumeRegion<'_>,
    spec: &QuadratureSpec,
    splitters: &[&dyn ColumnSplit],
    zero: V,
) -> Result<Integral<V>> {
    refine(spec, |s| volume_level(f, region, s, splitters, zero))
}

/// Volume integral at the single resolution `spec.cells_per_axis`.
pub fn volume_level<V: QuadValue>(
    f: &(dyn Fn(&Vector) -> Result<V> + Sync),
    region: &VolumeRegion<'_>,
    spec: &QuadratureSpec,
    splitters: &[&dyn ColumnSplit],
    zero: V,
) -> Result<V> {
    let columns = region.columns(spec.cells_per_axis, spec.order);
    integrate_columns(&columns, spec.cells_per_axis, spec.order, splitters, &|p| f(&p.x), zero)
}

/// A quadrature node on a graph surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceNode {
    /// Parameter `x'` in the graph's frame.
    pub param: Vector,
    /// Global position.
    pub point: Vector,
    /// Global unit normal `(-grad a, 1) / sqrt(1 + |grad a|^2)` mapped out of the frame.
    pub normal: Vector,
    pub area_weight: f64,
    /// Gauss weight times area weight.
    pub weight: f64,
}

/// Nodes of `int_window f(x', a(x')) sqrt(1 + |grad a|^2) dx'`, with cells
/// snapped to kinks of `a` and to `extra_breaks`.
pub fn surface_nodes(
    frame: &Frame,
    graph: &dyn GraphFunction,
    window: &BoxWindow,
    cells: usize,
    order: usize,
    extra_breaks: &[Vec<f64>],
) -> Vec<SurfaceNode> {
    let d = window.dim();
    let mut breaks = graph_kinks(graph, window);
    for (k, b) in extra_breaks.iter().enumerate().take(d) {
        breaks[k].extend_from_slice(b);
    }
    let rules: Vec<Vec<(f64, f64)>> =
        (0..d).map(|k| composite_rule(window.lo()[k], window.hi()[k], cells, &breaks[k], order)).collect();
    tensor_nodes(&rules)
        .into_iter()
        .map(|(p, w)| {
            let grad = graph_gradient(graph, &p);
            let aw = (1.0 + grad.norm_sq()).sqrt();
            let local_normal = (-grad).extend(1.0) * (1.0 / aw);
            SurfaceNode {
                param: p,
                point: frame.to_global(&p.extend(graph.value(&p))),
                normal: frame.dir_to_global(&local_normal),
                area_weight: aw,
                weight: w * aw,
            }
        })
        .collect()
}

/// Surface integral over a graph patch with refinement.
pub fn integrate_surface<V: QuadValue>(
    f: &(dyn Fn(&SurfaceNode) -> Result<V> + Sync),
    frame: &Frame,
    graph: &dyn GraphFunction,
    window: &BoxWindow,
    spec: &QuadratureSpec,
    zero: V,
) -> Result<Integral<V>> {
    refine(spec, |s| {
        let nodes = surface_nodes(frame, graph, window, s.cells_per_axis, s.order, &[]);
        sum_nodes(&nodes, f, zero)
    })
}

/// `sum weight * f(node)`, evaluated in parallel and summed in node order.
pub fn sum_nodes<V: QuadValue>(
    nodes: &[SurfaceNode],
    f: &(dyn Fn(&SurfaceNode) -> Result<V> + Sync),
    zero: V,
) -> Result<V> {
    let values: Vec<V> = nodes.par_iter().map(f).collect::<Result<Vec<_>>>()?;
    let mut acc = zero;
    for (node, v) in nodes.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::NonFinite(node.point.as_slice().to_vec()));
        }
        acc.axpy(node.weight, v);
    }
    Ok(acc)
}
