//! Boundary traces as limits: directional limits along admissible rays,
//! their assembly into the full trace vector, ball averages, one-sided
//! limits across an interface and the strain density ratio.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{graded_breaks, BDTestField, Interface};
use crate::geometry::{graph_kinks, max_collar_thickness, orthogonal_basis, BoxWindow, Domain, LipschitzGraphChart};
use crate::quadrature::{
    composite_rule, integrate_columns, limit_extrapolate, surface_nodes, tensor_nodes, true_intervals, Column,
    ColumnSplit, LimitEstimate, QuadValue,
};
use crate::symcalc::{sym_outer, Vector};

pub const DEFAULT_TOL: f64 = 1e-4;
/// Angular cells of the ball quadratures.
const BALL_CELLS: usize = 8;
const BALL_ORDER: usize = 8;
/// Cells along each column of the ball quadratures.
const COLUMN_CELLS: usize = 2;

/// Controls the `t`-sequences of directional limits.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub tol: f64,
    /// Halvings of `t0` always sampled.
    pub halvings: usize,
    /// Further halvings allowed while the fit has not converged.
    pub max_halvings: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, halvings: 8, max_halvings: 40 }
    }
}

/// `u(y - t xi) . xi` sampled at `t_j = t0 2^{-j}`, and its limit `g_xi(y)`.
#[derive(Debug, Clone)]
pub struct TraceSample {
    pub y: Vector,
    /// Global direction.
    pub xi: Vector,
    pub estimate: LimitEstimate<f64>,
}

impl TraceSample {
    pub fn value(&self) -> f64 {
        self.estimate.value
    }

    pub fn converged(&self) -> bool {
        self.estimate.converged
    }
}

/// Directional limits in one chart along one admissible direction, with
/// the collar thickness computed once.
#[derive(Debug, Clone)]
pub struct DirectionalTracer {
    chart: LipschitzGraphChart,
    xi_local: Vector,
    xi_global: Vector,
    eps0: f64,
    t0: f64,
}

impl DirectionalTracer {
    /// `xi` in frame coordinates; `t0 = eps0 / 2`.
    pub fn new(chart: &LipschitzGraphChart, xi: &Vector) -> Result<Self> {
        let eps0 = max_collar_thickness(chart, xi)?;
        Ok(Self {
            chart: chart.clone(),
            xi_local: *xi,
            xi_global: chart.frame().dir_to_global(xi),
            eps0,
            t0: 0.5 * eps0,
        })
    }

    pub fn with_t0(mut self, t0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 <= self.eps0) {
            return Err(Error::CollarTooThick { eps: t0, max: self.eps0 });
        }
        self.t0 = t0;
        Ok(self)
    }

    pub fn chart(&self) -> &LipschitzGraphChart {
        &self.chart
    }

    pub fn xi_local(&self) -> Vector {
        self.xi_local
    }

    pub fn xi_global(&self) -> Vector {
        self.xi_global
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Samples and extrapolates; non-convergence is reported in the estimate.
    pub fn trace(&self, field: &BDTestField, y: &Vector, opts: &TraceOptions) -> Result<TraceSample> {
        check_on_boundary(&self.chart, y)?;
        let value_at = |t: f64| -> Result<f64> { Ok(field.eval_ae(&(*y - self.xi_global * t))?.dot(&self.xi_global)) };
        let mut samples = Vec::with_capacity(opts.halvings + 1);
        let mut t = self.t0;
        for _ in 0..=opts.halvings {
            samples.push((t, value_at(t)?));
            t *= 0.5;
        }
        let mut estimate = limit_extrapolate(&samples, opts.tol)?;
        let mut extra = 0;
        while !estimate.converged && extra < opts.max_halvings.saturating_sub(opts.halvings) {
            samples.push((t, value_at(t)?));
            t *= 0.5;
            extra += 1;
            estimate = limit_extrapolate(&samples, opts.tol)?;
        }
        Ok(TraceSample { y: *y, xi: self.xi_global, estimate })
    }
}

fn check_on_boundary(chart: &LipschitzGraphChart, y: &Vector) -> Result<Vector> {
    if y.dim() != chart.dim() {
        return Err(Error::DimensionMismatch { expected: chart.dim(), found: y.dim() });
    }
    let z = chart.frame().to_local(y);
    let p = z.head();
    if !chart.inner().head().contains(&p) || (z.last() - chart.graph().value(&p)).abs() > 1e-9 {
        return Err(Error::OutsidePatch);
    }
    Ok(p)
}

fn not_converged(what: String, e: &LimitEstimate<impl QuadValue>, tol: f64) -> Error {
    let seq: Vec<String> = e.samples.iter().map(|(h, v)| format!("({h:.3e}, {:.6e})", v.magnitude())).collect();
    Error::NotConverged { what: format!("{what}; samples {}", seq.join(" ")), residual: e.residual, tol }
}

/// `g_xi(y)` for a chart-local direction `xi`; errors when the limit does
/// not converge, quoting the sampled sequence.
pub fn directional_trace(
    field: &BDTestField,
    chart: &LipschitzGraphChart,
    y: &Vector,
    xi: &Vector,
    opts: &TraceOptions,
) -> Result<TraceSample> {
    let s = DirectionalTracer::new(chart, xi)?.trace(field, y, opts)?;
    if !s.converged() {
        return Err(not_converged(format!("g_xi at {y:?}"), &s.estimate, opts.tol));
    }
    Ok(s)
}

/// The trace vector at one boundary point.
#[derive(Debug, Clone)]
pub struct AssembledTrace {
    /// Components in the chart frame.
    pub local: Vector,
    /// The same vector in global coordinates.
    pub value: Vector,
    /// `g_{xi_i}` for `i < n`, then `g_{e_n}`.
    pub samples: Vec<TraceSample>,
    pub converged: bool,
}

/// Assembles `gamma_n = g_{e_n}` and
/// `gamma_i = (sqrt(1 + delta^2) g_{xi_i} - gamma_n) / delta` in one chart.
#[derive(Debug, Clone)]
pub struct TraceAssembler {
    delta: f64,
    tracers: Vec<DirectionalTracer>,
}

impl TraceAssembler {
    /// `delta = None` picks the chart's default.
    pub fn new(chart: &LipschitzGraphChart, delta: Option<f64>) -> Result<Self> {
        let n = chart.dim();
        let delta = delta.unwrap_or_else(|| chart.default_delta());
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let mut tracers = Vec::with_capacity(n);
        for i in 0..n - 1 {
            tracers.push(DirectionalTracer::new(chart, &chart.xi_i(i, delta))?);
        }
        tracers.push(DirectionalTracer::new(chart, &Vector::unit(n, n - 1))?);
        Ok(Self { delta, tracers })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tracers(&self) -> &[DirectionalTracer] {
        &self.tracers
    }

    pub fn chart(&self) -> &LipschitzGraphChart {
        self.tracers[0].chart()
    }

    pub fn assemble(&self, field: &BDTestField, y: &Vector, opts: &TraceOptions) -> Result<AssembledTrace> {
        let n = self.tracers.len();
        let samples = self.tracers.iter().map(|t| t.trace(field, y, opts)).collect::<Result<Vec<_>>>()?;
        let gn = samples[n - 1].value();
        let mut local = Vector::zeros(n);
        local[n - 1] = gn;
        let s = (1.0 + self.delta * self.delta).sqrt();
        for i in 0..n - 1 {
            local[i] = (s * samples[i].value() - gn) / self.delta;
        }
        let converged = samples.iter().all(TraceSample::converged);
        Ok(AssembledTrace { local, value: self.chart().frame().dir_to_global(&local), samples, converged })
    }
}

/// The trace vector at `y`; errors when a component does not converge.
pub fn assemble_trace(
    field: &BDTestField,
    chart: &LipschitzGraphChart,
    y: &Vector,
    delta: Option<f64>,
    opts: &TraceOptions,
) -> Result<AssembledTrace> {
    let t = TraceAssembler::new(chart, delta)?.assemble(field, y, opts)?;
    if let Some(s) = t.samples.iter().find(|s| !s.converged()) {
        return Err(not_converged(format!("trace component along {:?} at {y:?}", s.xi), &s.estimate, opts.tol));
    }
    Ok(t)
}

/// A surface quadrature node on a patch tile.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryNode {
    pub patch: usize,
    /// Chart-local parameter.
    pub param: Vector,
    pub point: Vector,
    /// Global outward unit normal.
    pub normal: Vector,
    pub weight: f64,
}

/// Features of an integrand that boundary cells are snapped to (two
/// dimensions only).
#[derive(Clone, Copy, Default)]
pub struct NodeHints<'a> {
    /// Cells meet where the interface crosses the boundary.
    pub interface: Option<&'a Interface>,
    /// Cells graded towards the ends of `∂Omega ∩ B` for this ball.
    pub support: Option<(Vector, f64)>,
    /// Extra cells of this width around interface crossings.
    pub band: Option<f64>,
}

/// Quadrature nodes over all patch tiles.
pub fn boundary_nodes(domain: &Domain, cells: usize, order: usize, hints: &NodeHints<'_>) -> Vec<BoundaryNode> {
    let mut out = Vec::new();
    for (k, patch) in domain.patches().iter().enumerate() {
        let chart = &patch.chart;
        let mut breaks = vec![Vec::new(); chart.dim() - 1];
        if chart.dim() == 2 {
            let (lo, hi) = (patch.tile.lo()[0], patch.tile.hi()[0]);
            let at = |s: f64| chart.boundary_point(&Vector::from_slice(&[s]));
            if let Some(iface) = hints.interface {
                let plus = |s: f64| iface.signed_offset(&at(s)) > 0.0;
                for (a, b) in true_intervals(&plus, lo, hi, 256) {
                    for e in [a, b] {
                        breaks[0].push(e);
                        if let Some(w) = hints.band {
                            for j in 1..=4 {
                                breaks[0].extend([e - 0.5 * w * j as f64, e + 0.5 * w * j as f64]);
                            }
                        }
                    }
                }
            }
            if let Some((c, r)) = hints.support {
                let inside = |s: f64| (at(s) - c).norm() < r;
                for (a, b) in true_intervals(&inside, lo, hi, 256) {
                    breaks[0].extend(graded_breaks(a, b));
                }
            }
            breaks[0].retain(|b| *b > lo && *b < hi);
        }
        for node in surface_nodes(chart.frame(), chart.graph(), &patch.tile, cells, order, &breaks) {
            out.push(BoundaryNode {
                patch: k,
                param: node.param,
                point: node.point,
                normal: node.normal,
                weight: node.weight,
            });
        }
    }
    out
}

/// Trace values at boundary quadrature nodes.
#[derive(Debug, Clone)]
pub struct TraceField {
    pub nodes: Vec<BoundaryNode>,
    pub values: Vec<Vector>,
    pub converged: Vec<bool>,
    /// Set when some node did not converge.
    pub partial: bool,
}

impl TraceField {
    /// `sum_nodes weight f(node, gamma)`.
    pub fn integrate<V: QuadValue>(&self, zero: V, f: impl Fn(&BoundaryNode, &Vector) -> V) -> V {
        let mut acc = zero;
        for (node, v) in self.nodes.iter().zip(&self.values) {
            acc.axpy(node.weight, &f(node, v));
        }
        acc
    }
}

/// Builds one assembler per patch.
pub fn patch_assemblers(domain: &Domain, delta: Option<f64>) -> Result<Vec<TraceAssembler>> {
    domain.patches().iter().map(|p| TraceAssembler::new(&p.chart, delta)).collect()
}

/// Assembled traces at the given nodes, computed in parallel.
pub fn trace_at_nodes(
    field: &BDTestField,
    assemblers: &[TraceAssembler],
    nodes: Vec<BoundaryNode>,
    opts: &TraceOptions,
) -> Result<TraceField> {
    let results: Vec<AssembledTrace> =
        nodes.par_iter().map(|n| assemblers[n.patch].assemble(field, &n.point, opts)).collect::<Result<_>>()?;
    let converged: Vec<bool> = results.iter().map(|r| r.converged).collect();
    Ok(TraceField {
        partial: converged.iter().any(|c| !c),
        values: results.into_iter().map(|r| r.value).collect(),
        converged,
        nodes,
    })
}

/// The trace of `field` at all boundary quadrature nodes of `domain`.
pub fn trace_field(
    field: &BDTestField,
    domain: &Domain,
    cells: usize,
    order: usize,
    opts: &TraceOptions,
) -> Result<TraceField> {
    let assemblers = patch_assemblers(domain, None)?;
    let hints = NodeHints { interface: field.interface().map(|i| i.as_ref()), ..Default::default() };
    let nodes = boundary_nodes(domain, cells, order, &hints);
    trace_at_nodes(field, &assemblers, nodes, opts)
}

/// Columns covering `B_rho(x) ∩ {z_n < a(z')}` in chart coordinates, or the
/// whole ball when `chart` is `None`. Columns run along the chart's `e_n`.
pub fn ball_columns_in(chart: Option<&LipschitzGraphChart>, x: &Vector, rho: f64) -> Vec<Column> {
    let n = x.dim();
    let (c, dir) = match chart {
        Some(ch) => (ch.frame().to_local(x), ch.frame().normal_axis()),
        None => (*x, Vector::unit(n, n - 1)),
    };
    let to_global = |z: &Vector| match chart {
        Some(ch) => ch.frame().to_global(z),
        None => *z,
    };
    let top = |p: &Vector| chart.map_or(f64::INFINITY, |ch| ch.graph().value(p) - c.last());
    let cp = c.head();
    let mut out = Vec::new();
    let mut push = |w: Vector, weight: f64, h: f64| {
        let p = cp + w;
        let s1 = h.min(top(&p));
        if s1 > -h {
            out.push(Column { origin: to_global(&p.extend(c.last())), dir, s0: -h, s1, weight, breaks: Vec::new() });
        }
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    if n == 2 {
        // w = rho sin(theta), breaks where the graph leaves the sphere and at kinks
        let mut breaks = Vec::new();
        if let Some(ch) = chart {
            for sign in [-1.0, 1.0] {
                let f = |th: f64| top(&(cp + Vector::from_slice(&[rho * th.sin()]))) - sign * rho * th.cos() > 0.0;
                for (a, b) in true_intervals(&f, -half_pi, half_pi, 64) {
                    breaks.extend([a, b]);
                }
            }
            if let Ok(win) = BoxWindow::from_bounds(&[(cp[0] - rho, cp[0] + rho)]) {
                for k in graph_kinks(ch.graph(), &win).concat() {
                    breaks.push(((k - cp[0]) / rho).clamp(-1.0, 1.0).asin());
                }
            }
        }
        for (th, wt) in composite_rule(-half_pi, half_pi, BALL_CELLS, &breaks, BALL_ORDER) {
            push(Vector::from_slice(&[rho * th.sin()]), wt * rho * th.cos(), rho * th.cos());
        }
    } else {
        // polar base: r = rho sin(theta)
        let rules = vec![
            composite_rule(0.0, half_pi, BALL_CELLS, &[], BALL_ORDER),
            composite_rule(0.0, 2.0 * std::f64::consts::PI, 2 * BALL_CELLS, &[], BALL_ORDER),
        ];
        for (q, wt) in tensor_nodes(&rules) {
            let (th, ph) = (q[0], q[1]);
            let r = rho * th.sin();
            let w = Vector::from_slice(&[r * ph.cos(), r * ph.sin()]);
            push(w, wt * rho * rho * th.sin() * th.cos(), rho * th.cos());
        }
    }
    out
}

/// Orthonormal basis of `nu^⊥` that is identical for `nu` and `-nu`.
fn canonical_basis(nu: &Vector) -> Vec<Vector> {
    let mut k = 0;
    for i in 1..nu.dim() {
        if nu[i].abs() > nu[k].abs() {
            k = i;
        }
    }
    let rep = if nu[k] < 0.0 { -*nu } else { *nu };
    orthogonal_basis(&rep)
}

/// Columns filling `{y in B_rho(x) : (y - x) . d > 0}`, along `d`.
fn half_ball_columns(x: &Vector, d: &Vector, basis: &[Vector], rho: f64) -> Vec<Column> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let mut push = |w: &[f64], weight: f64, h: f64| {
        let mut origin = *x;
        for (b, c) in basis.iter().zip(w) {
            origin += *b * *c;
        }
        out.push(Column { origin, dir: *d, s0: 0.0, s1: h, weight, breaks: Vec::new() });
    };
    if x.dim() == 2 {
        for (th, wt) in composite_rule(-half_pi, half_pi, BALL_CELLS, &[], BALL_ORDER) {
            push(&[rho * th.sin()], wt * rho * th.cos(), rho * th.cos());
        }
    } else {
        let rules = vec![
            composite_rule(0.0, half_pi, BALL_CELLS, &[], BALL_ORDER),
            composite_rule(0.0, 2.0 * std::f64::consts::PI, 2 * BALL_CELLS, &[], BALL_ORDER),
        ];
        for (q, wt) in tensor_nodes(&rules) {
            let r = rho * q[0].sin();
            push(&[r * q[1].cos(), r * q[1].sin()], wt * rho * rho * q[0].sin() * q[0].cos(), rho * q[0].cos());
        }
    }
    out
}

fn splitter_of(field: &BDTestField) -> Vec<&dyn ColumnSplit> {
    field.interface().map(|i| i.as_ref() as &dyn ColumnSplit).into_iter().collect()
}

/// `(volume, integral of u)` over columns.
fn column_mean(field: &BDTestField, cols: &[Column]) -> Result<(f64, Vector)> {
    let n = field.dim();
    let f = |p: &crate::quadrature::ColumnPoint| -> Result<[f64; 4]> {
        let u = field.eval_ae(&p.x)?;
        let mut out = [1.0, 0.0, 0.0, 0.0];
        out[1..=n].copy_from_slice(u.as_slice());
        Ok(out)
    };
    let acc = integrate_columns(cols, COLUMN_CELLS, BALL_ORDER, &splitter_of(field), &f, [0.0; 4])?;
    Ok((acc[0], Vector::from_slice(&acc[1..=n])))
}

/// `rho_j = rho0 2^{-j}`, `j = 0..count`.
pub fn radii(rho0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| rho0 * 0.5f64.powi(j as i32)).collect()
}

/// Largest radius keeping balls at `x` inside the chart's outer window, capped at `cap`.
pub fn admissible_ball_radius(chart: &LipschitzGraphChart, x: &Vector, cap: f64) -> f64 {
    let z = chart.frame().to_local(x);
    let outer = chart.outer();
    let mut d = cap;
    for k in 0..z.dim() {
        d = d.min(z[k] - outer.lo()[k]).min(outer.hi()[k] - z[k]);
    }
    0.9 * d
}

/// Ball averages at a boundary point.
#[derive(Debug, Clone)]
pub struct AveragedTrace {
    pub estimate: LimitEstimate<Vector>,
    /// `(rho, rho^{-n} int_{B_rho ∩ Omega} |u - reference|)` when a reference is given.
    pub defects: Vec<(f64, f64)>,
}

/// Extrapolated `|B_rho ∩ Omega|^{-1} int_{B_rho(x) ∩ Omega} u` over the
/// given decreasing radii.
pub fn averaged_trace(
    field: &BDTestField,
    chart: &LipschitzGraphChart,
    x: &Vector,
    rhos: &[f64],
    tol: f64,
    reference: Option<&Vector>,
) -> Result<AveragedTrace> {
    check_on_boundary(chart, x)?;
    let n = field.dim();
    let mut samples = Vec::with_capacity(rhos.len());
    let mut defects = Vec::new();
    for &rho in rhos {
        let cols = ball_columns_in(Some(chart), x, rho);
        let (vol, int) = column_mean(field, &cols)?;
        samples.push((rho, int * (1.0 / vol)));
        if let Some(g) = reference {
            let f = |p: &crate::quadrature::ColumnPoint| -> Result<f64> { Ok((field.eval_ae(&p.x)? - *g).norm()) };
            let d = integrate_columns(&cols, COLUMN_CELLS, BALL_ORDER, &splitter_of(field), &f, 0.0)?;
            defects.push((rho, d / rho.powi(n as i32)));
        }
    }
    let estimate = limit_extrapolate(&samples, tol)?;
    if !estimate.converged {
        return Err(not_converged(format!("ball averages at {x:?}"), &estimate, tol));
    }
    Ok(AveragedTrace { estimate, defects })
}

/// Extrapolated half-ball averages `(u+, u-)` at a point of `interface`,
/// with the caps `B_rho^±(x, nu)` for the oriented normal `nu` there.
pub fn one_sided_limits(
    field: &BDTestField,
    interface: &Interface,
    x: &Vector,
    rhos: &[f64],
    tol: f64,
) -> Result<(LimitEstimate<Vector>, LimitEstimate<Vector>)> {
    let (piece, p) = interface.locate(x, 1e-9).ok_or(Error::OutsidePatch)?;
    let nu = interface.normal(piece, &p);
    half_ball_limits(field, x, &nu, rhos, tol)
}

/// As [`one_sided_limits`] with an explicit unit normal.
pub fn half_ball_limits(
    field: &BDTestField,
    x: &Vector,
    nu: &Vector,
    rhos: &[f64],
    tol: f64,
) -> Result<(LimitEstimate<Vector>, LimitEstimate<Vector>)> {
    let basis = canonical_basis(nu);
    let mut out = Vec::with_capacity(2);
    for d in [*nu, *nu * -1.0] {
        let mut samples = Vec::with_capacity(rhos.len());
        for &rho in rhos {
            let (vol, int) = column_mean(field, &half_ball_columns(x, &d, &basis, rho))?;
            samples.push((rho, int * (1.0 / vol)));
        }
        let e = limit_extrapolate(&samples, tol)?;
        if !e.converged {
            return Err(not_converged(format!("half-ball averages at {x:?} along {d:?}"), &e, tol));
        }
        out.push(e);
    }
    let minus = out.pop().expect("two sides");
    let plus = out.pop().expect("two sides");
    Ok((plus, minus))
}

/// Extrapolated `|Eu|(B_rho(x) ∩ Omega) / rho^{n-1}`; `chart` selects the
/// boundary chart for boundary points, `None` a point well inside.
pub fn strain_density(
    field: &BDTestField,
    x: &Vector,
    chart: Option<&LipschitzGraphChart>,
    rhos: &[f64],
    tol: f64,
) -> Result<LimitEstimate<f64>> {
    let n = field.dim();
    let mut samples = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let cols = ball_columns_in(chart, x, rho);
        let f = |p: &crate::quadrature::ColumnPoint| -> Result<f64> { Ok(field.strain_ac_ae(&p.x)?.frobenius()) };
        let mut mass = integrate_columns(&cols, COLUMN_CELLS, BALL_ORDER, &splitter_of(field), &f, 0.0)?;
        if let Some(iface) = field.interface() {
            for (_, node) in iface.ball_nodes(x, rho, BALL_CELLS, BALL_ORDER) {
                let inside = match chart {
                    Some(ch) => ch.local_inside(&ch.frame().to_local(&node.point)),
                    None => true,
                };
                if inside && (node.point - *x).norm() < rho {
                    let j = field.jump(&node.point)?;
                    mass += node.weight * sym_outer(&j, &node.normal)?.frobenius();
                }
            }
        }
        samples.push((rho, mass / rho.powi(n as i32 - 1)));
    }
    limit_extrapolate(&samples, tol)
}
