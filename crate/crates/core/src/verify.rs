//! Integration-by-parts residuals, the trace norm bound, strict convergence
//! under mollification, jump reconstruction from one-sided limits, the
//! collar estimate and cross-method trace comparisons.
//!
//! Each check returns a result struct holding the raw quantities; `report`
//! turns it into [`CheckReport`] rows with residuals relative to a field
//! scale.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{
    domain_region, strain_measure, support_breaks, BDTestField, Interface, MeasureValue, TestFunction,
};
use crate::geometry::{cone_beta, reparametrized_lipschitz, Collar, Domain};
use crate::quadrature::{composite_rule, volume_level, ColumnSplit, QuadValue, QuadratureSpec, VolumeRegion};
use crate::symcalc::{sym_outer, SymTensor, Vector};
use crate::trace::{
    admissible_ball_radius, assemble_trace, averaged_trace, boundary_nodes, one_sided_limits, patch_assemblers,
    radii, trace_at_nodes, BoundaryNode, DirectionalTracer, NodeHints, TraceAssembler, TraceField, TraceOptions,
};

/// Default tolerance of checks that rely on extrapolated limits.
pub const LIMIT_TOL: f64 = 1e-4;
/// Default tolerance of checks that are pure quadrature.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Relative size below which a deficit counts as rounding noise.
pub const NOISE_FLOOR: f64 = 1e-10;
/// Fraction of a tolerance below which residual changes under refinement
/// are attributed to the extrapolated traces rather than the quadrature.
pub const REFINEMENT_FLOOR: f64 = 1e-2;

/// `(h_j, v_j)` rows behind a check, `h` strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub label: String,
    pub rows: Vec<(f64, f64)>,
}

/// One row of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub check: String,
    pub residual: f64,
    pub tolerance: f64,
    /// `residual <= tolerance`; false for a NaN residual.
    pub pass: bool,
    pub metadata: Vec<(String, String)>,
    pub tables: Vec<ConvergenceTable>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            metadata: Vec::new(),
            tables: Vec::new(),
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(check: impl Into<String>, tolerance: f64, error: &Error) -> Self {
        Self::new(check, f64::INFINITY, tolerance).with_meta("error", error.to_string())
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn with_table(mut self, label: impl Into<String>, rows: Vec<(f64, f64)>) -> Self {
        self.tables.push(ConvergenceTable { label: label.into(), rows });
        self
    }
}

/// `||u||_BD = int |u| + |Eu|(Omega)` split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdNorm {
    pub l1: f64,
    /// `int_Omega |e| dx`.
    pub strain_ac: f64,
    /// `int_{Gamma ∩ Omega} |(u+ - u-) ⊙ nu| dH`.
    pub jump: f64,
}

impl BdNorm {
    /// `|Eu|(Omega)`.
    pub fn variation(&self) -> f64 {
        self.strain_ac + self.jump
    }

    pub fn total(&self) -> f64 {
        self.l1 + self.variation()
    }
}

/// Breaks at interface crossings plus cells of width `width / 2` covering
/// `width * 2` on each side.
struct BandSplit<'a> {
    interface: &'a Interface,
    width: f64,
}

impl ColumnSplit for BandSplit<'_> {
    fn breaks(&self, origin: &Vector, dir: &Vector, s0: f64, s1: f64, out: &mut Vec<f64>) {
        let mut cross = Vec::new();
        self.interface.breaks(origin, dir, s0, s1, &mut cross);
        let step = 0.5 * self.width / dir.norm();
        for s in cross {
            out.push(s);
            for j in 1..=4 {
                for t in [s - step * j as f64, s + step * j as f64] {
                    if t > s0 && t < s1 {
                        out.push(t);
                    }
                }
            }
        }
    }
}

fn domain_integral<V: QuadValue>(
    domain: &Domain,
    interface: Option<&Interface>,
    band: Option<f64>,
    spec: &QuadratureSpec,
    f: &(dyn Fn(&Vector) -> Result<V> + Sync),
    zero: V,
) -> Result<V> {
    let region = domain_region(domain);
    let banded = match (interface, band) {
        (Some(i), Some(w)) => Some(BandSplit { interface: i, width: w }),
        _ => None,
    };
    let mut splitters: Vec<&dyn ColumnSplit> = Vec::new();
    if let Some(b) = &banded {
        splitters.push(b);
    } else if let Some(i) = interface {
        splitters.push(i);
    }
    volume_level(f, &region, spec, &splitters, zero)
}

fn jump_variation(field: &BDTestField, domain: &Domain, spec: &QuadratureSpec) -> Result<f64> {
    let Some(iface) = field.interface() else { return Ok(0.0) };
    let inside = |x: &Vector| domain.contains(x);
    let mut total = 0.0;
    for (_, node) in iface.nodes(spec.cells_per_axis, spec.order, &inside, None) {
        total += node.weight * sym_outer(&field.jump(&node.point)?, &node.normal)?.frobenius();
    }
    Ok(total)
}

/// `||u||_BD` by quadrature with cells split at the interface, which is
/// exact up to rounding for piecewise polynomial data.
pub fn bd_norm(field: &BDTestField, domain: &Domain, spec: &QuadratureSpec) -> Result<BdNorm> {
    spec.validate()?;
    let iface = field.interface().map(|i| i.as_ref());
    let f = |x: &Vector| -> Result<[f64; 2]> {
        Ok([field.eval_ae(x)?.norm(), field.strain_ac_ae(x)?.frobenius()])
    };
    let [l1, strain_ac] = domain_integral(domain, iface, None, spec, &f, [0.0; 2])?;
    Ok(BdNorm { l1, strain_ac, jump: jump_variation(field, domain, spec)? })
}

fn check_uncovered(domain: &Domain, phi: &TestFunction) -> Result<()> {
    if domain.fully_covered() {
        return Ok(());
    }
    let sup = phi.sup_norms(&domain.bounding_box()).0;
    for p in domain.uncovered_boundary_samples(33) {
        if phi.value(&p).abs() > 1e-12 * sup.max(f64::MIN_POSITIVE) {
            return Err(Error::UncoveredBoundary(p.as_slice().to_vec()));
        }
    }
    Ok(())
}

/// Re-runs the first non-converged node strictly to obtain its error.
fn first_failure(field: &BDTestField, domain: &Domain, tf: &TraceField, opts: &TraceOptions) -> Error {
    let k = tf.converged.iter().position(|c| !c).unwrap_or(0);
    let node = &tf.nodes[k];
    match assemble_trace(field, &domain.patches()[node.patch].chart, &node.point, None, opts) {
        Err(e) => e,
        Ok(_) => Error::NotConverged { what: format!("trace at {:?}", node.point), residual: f64::NAN, tol: opts.tol },
    }
}

fn strict_traces(
    field: &BDTestField,
    domain: &Domain,
    assemblers: &[TraceAssembler],
    nodes: Vec<BoundaryNode>,
    opts: &TraceOptions,
) -> Result<TraceField> {
    let tf = trace_at_nodes(field, assemblers, nodes, opts)?;
    if tf.partial {
        return Err(first_failure(field, domain, &tf, opts));
    }
    Ok(tf)
}

fn phi_nodes(domain: &Domain, field: &BDTestField, phi: &TestFunction, spec: &QuadratureSpec) -> Vec<BoundaryNode> {
    let hints = NodeHints { interface: field.interface().map(|i| i.as_ref()), support: phi.support(), band: None };
    boundary_nodes(domain, spec.cells_per_axis, spec.order, &hints)
        .into_iter()
        .filter(|n| phi.value(&n.point) != 0.0)
        .collect()
}

fn volume_with_phi<V: QuadValue>(
    field: &BDTestField,
    domain: &Domain,
    phi: &TestFunction,
    spec: &QuadratureSpec,
    f: &(dyn Fn(&Vector) -> Result<V> + Sync),
    zero: V,
) -> Result<V> {
    let mut region: VolumeRegion<'_> = domain_region(domain);
    region.base_breaks = support_breaks(phi, domain.dim() - 1);
    let mut splitters: Vec<&dyn ColumnSplit> = vec![phi];
    if let Some(i) = field.interface() {
        splitters.push(i.as_ref());
    }
    volume_level(f, &region, spec, &splitters, zero)
}

/// The three terms of the full integration by parts identity.
#[derive(Debug, Clone)]
pub struct IbpResult {
    /// `int_Omega u ⊙ grad phi dx`.
    pub volume: SymTensor,
    /// `int_Omega phi dEu`.
    pub measure: MeasureValue,
    /// `int_{∂Omega} gamma(u) ⊙ nu phi dH`.
    pub boundary: SymTensor,
    pub residual: SymTensor,
    /// `||u||_BD ||phi||_{C^1}`.
    pub scale: f64,
    pub nodes: usize,
}

impl IbpResult {
    pub fn relative(&self) -> f64 {
        relative(self.residual.frobenius(), self.scale)
    }
}

fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

/// `R = int u ⊙ grad phi + int phi dEu - int_{∂Omega} gamma(u) ⊙ nu phi` at the
/// single resolution `spec.cells_per_axis`; errors when a trace does not converge.
pub fn ibp_residual(
    field: &BDTestField,
    domain: &Domain,
    phi: &TestFunction,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<IbpResult> {
    spec.validate()?;
    check_uncovered(domain, phi)?;
    let n = domain.dim();
    let f = |x: &Vector| -> Result<SymTensor> { Ok(sym_outer(&field.eval_ae(x)?, &phi.gradient(x))?) };
    let volume = volume_with_phi(field, domain, phi, spec, &f, SymTensor::zeros(n))?;
    let measure = strain_measure(field, phi, domain, spec)?;
    let assemblers = patch_assemblers(domain, None)?;
    let tf = strict_traces(field, domain, &assemblers, phi_nodes(domain, field, phi, spec), opts)?;
    let mut boundary = SymTensor::zeros(n);
    for (node, g) in tf.nodes.iter().zip(&tf.values) {
        boundary.axpy(node.weight * phi.value(&node.point), &sym_outer(g, &node.normal)?);
    }
    let scale = bd_norm(field, domain, spec)?.total() * phi.c1_norm(&domain.bounding_box());
    Ok(IbpResult { volume, measure, boundary, residual: volume + measure.total - boundary, scale, nodes: tf.nodes.len() })
}

/// The identity at `spec` and at one refinement: the relative residual
/// against `tol`, and a second row failing when the refined residual grows
/// above both the coarse one and `REFINEMENT_FLOOR * tol`.
pub fn ibp_check(
    field: &BDTestField,
    domain: &Domain,
    phi: &TestFunction,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
    tol: f64,
) -> Result<Vec<CheckReport>> {
    let coarse = ibp_residual(field, domain, phi, &spec.level(0), opts)?;
    let fine = ibp_residual(field, domain, phi, &spec.level(1), opts)?;
    let (rc, rf) = (coarse.relative(), fine.relative());
    let growth = (rf - rc.max(REFINEMENT_FLOOR * tol)).max(0.0);
    let table = vec![(1.0 / spec.cells_at(0) as f64, rc), (1.0 / spec.cells_at(1) as f64, rf)];
    Ok(vec![
        CheckReport::new("ibp", rc.max(rf), tol)
            .with_meta("scale", fine.scale)
            .with_meta("boundary_nodes", fine.nodes)
            .with_table("relative residual", table),
        CheckReport::new("ibp-refinement", growth, 0.0),
    ])
}

/// Both boundary evaluations of the directional identity.
#[derive(Debug, Clone)]
pub struct DirectionalIbp {
    /// Residual with the directional limits `g_xi`.
    pub residual_g: f64,
    /// Residual with `gamma(u) . xi` from the assembled trace.
    pub residual_gamma: f64,
    /// `max |g_xi - gamma(u) . xi|` over the nodes.
    pub max_node_gap: f64,
    pub scale: f64,
    pub nodes: usize,
}

/// `int (u.xi)(grad phi.xi) + int phi d[Eu : xi ⊗ xi] - int_{∂Omega} phi g_xi (nu.xi)`
/// for a global unit direction `xi`, admissible in every chart whose tile
/// meets the support of `phi`.
pub fn directional_ibp_residual(
    field: &BDTestField,
    domain: &Domain,
    phi: &TestFunction,
    xi: &Vector,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<DirectionalIbp> {
    spec.validate()?;
    check_uncovered(domain, phi)?;
    let xi = xi.normalized()?;
    let f = |x: &Vector| -> Result<f64> { Ok(field.eval_ae(x)?.dot(&xi) * phi.gradient(x).dot(&xi)) };
    let volume = volume_with_phi(field, domain, phi, spec, &f, 0.0)?;
    let measure = strain_measure(field, phi, domain, spec)?.total.quad_form(&xi);
    let nodes = phi_nodes(domain, field, phi, spec);
    let mut tracers: Vec<Option<(DirectionalTracer, TraceAssembler)>> = vec![None; domain.patches().len()];
    for node in &nodes {
        if tracers[node.patch].is_none() {
            let chart = &domain.patches()[node.patch].chart;
            let local = chart.frame().dir_to_local(&xi);
            tracers[node.patch] = Some((DirectionalTracer::new(chart, &local)?, TraceAssembler::new(chart, None)?));
        }
    }
    let per_node: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|node| -> Result<(f64, f64)> {
            let (tracer, assembler) = tracers[node.patch].as_ref().expect("built above");
            let g = tracer.trace(field, &node.point, opts)?;
            let gamma = assembler.assemble(field, &node.point, opts)?;
            if !g.converged() || !gamma.converged {
                return Err(Error::NotConverged {
                    what: format!("directional trace at {:?}", node.point),
                    residual: g.estimate.residual,
                    tol: opts.tol,
                });
            }
            Ok((g.value(), gamma.value.dot(&xi)))
        })
        .collect::<Result<_>>()?;
    let (mut bg, mut bgamma, mut gap) = (0.0, 0.0, 0.0f64);
    for (node, (g, gx)) in nodes.iter().zip(&per_node) {
        let w = node.weight * phi.value(&node.point) * node.normal.dot(&xi);
        bg += w * g;
        bgamma += w * gx;
        gap = gap.max((g - gx).abs());
    }
    let scale = bd_norm(field, domain, spec)?.total() * phi.c1_norm(&domain.bounding_box());
    Ok(DirectionalIbp {
        residual_g: volume + measure - bg,
        residual_gamma: volume + measure - bgamma,
        max_node_gap: gap,
        scale,
        nodes: nodes.len(),
    })
}

impl DirectionalIbp {
    /// The relative residual against `tol`, and the node-wise gap between
    /// the two boundary evaluations against `2 opts.tol`.
    pub fn report(&self, tol: f64, opts: &TraceOptions) -> Vec<CheckReport> {
        let r = relative(self.residual_g.abs(), self.scale);
        vec![
            CheckReport::new("directional-ibp", r, tol)
                .with_meta("scale", self.scale)
                .with_meta("residual_gamma", relative(self.residual_gamma.abs(), self.scale)),
            CheckReport::new("directional-linearity", self.max_node_gap, 2.0 * opts.tol),
        ]
    }
}

/// Both sides of `int_{∂Omega} |gamma(u)| <= C ||u||_BD` at two resolutions.
#[derive(Debug, Clone)]
pub struct TraceNormBound {
    /// `(cells, int |gamma(u)|, ||u||_BD)` per level.
    pub levels: Vec<(usize, f64, f64)>,
}

impl TraceNormBound {
    /// The empirical constant at the finest level, `None` for the zero field.
    pub fn ratio(&self) -> Option<f64> {
        let (_, lhs, bd) = *self.levels.last()?;
        (bd > 0.0).then(|| lhs / bd)
    }

    /// `|ratio_fine / ratio_coarse - 1|`.
    pub fn spread(&self) -> f64 {
        let r: Vec<f64> = self.levels.iter().filter(|l| l.2 > 0.0).map(|l| l.1 / l.2).collect();
        if r.len() < 2 {
            return 0.0;
        }
        (r[r.len() - 1] / r[0] - 1.0).abs()
    }

    /// Passes iff the ratio is finite and moves by at most 10% under refinement.
    pub fn report(&self) -> CheckReport {
        let rep = match self.ratio() {
            None => CheckReport::new("trace-norm-bound", 0.0, 0.1).with_meta("ratio", "n/a"),
            Some(r) if !r.is_finite() => CheckReport::new("trace-norm-bound", f64::INFINITY, 0.1),
            Some(r) => CheckReport::new("trace-norm-bound", self.spread(), 0.1).with_meta("ratio", r),
        };
        let rows = self.levels.iter().filter(|l| l.2 > 0.0).map(|l| (1.0 / l.0 as f64, l.1 / l.2)).collect();
        rep.with_table("ratio", rows)
    }
}

pub fn trace_norm_bound(
    field: &BDTestField,
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<TraceNormBound> {
    spec.validate()?;
    if !domain.fully_covered() {
        let p = domain.uncovered_boundary_samples(9).into_iter().next().unwrap_or_else(|| Vector::zeros(domain.dim()));
        return Err(Error::UncoveredBoundary(p.as_slice().to_vec()));
    }
    let assemblers = patch_assemblers(domain, None)?;
    let hints = NodeHints { interface: field.interface().map(|i| i.as_ref()), ..Default::default() };
    let mut levels = Vec::new();
    for l in 0..2 {
        let s = spec.level(l);
        let nodes = boundary_nodes(domain, s.cells_per_axis, s.order, &hints);
        let tf = strict_traces(field, domain, &assemblers, nodes, opts)?;
        let lhs = tf.integrate(0.0, |_, g| g.norm());
        levels.push((s.cells_per_axis, lhs, bd_norm(field, domain, &s)?.total()));
    }
    Ok(TraceNormBound { levels })
}

/// Deficits of `u_r = rho_r * u` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrictRow {
    pub radius: f64,
    /// `||u_r - u||_{L^1(Omega)}`.
    pub l1: f64,
    /// `| |Eu_r|(Omega) - |Eu|(Omega) |`.
    pub variation_gap: f64,
    /// `||gamma(u_r) - gamma(u)||_{L^1(∂Omega)}`.
    pub trace_gap: f64,
}

#[derive(Debug, Clone)]
pub struct StrictConvergence {
    pub rows: Vec<StrictRow>,
    /// `|Eu|(Omega)`.
    pub variation: f64,
    /// `||u||_BD`.
    pub scale: f64,
}

impl StrictConvergence {
    fn columns(&self) -> [(&'static str, Vec<f64>); 3] {
        [
            ("l1", self.rows.iter().map(|r| r.l1).collect()),
            ("variation-gap", self.rows.iter().map(|r| r.variation_gap).collect()),
            ("trace-gap", self.rows.iter().map(|r| r.trace_gap).collect()),
        ]
    }

    /// Largest relative increase between consecutive radii, counting values
    /// below the noise floor as zero.
    fn growth(&self, values: &[f64]) -> f64 {
        let floor = NOISE_FLOOR * self.scale.max(f64::MIN_POSITIVE);
        values
            .windows(2)
            .map(|w| relative((w[1] - w[0].max(floor)).max(0.0), self.scale))
            .fold(0.0, f64::max)
    }

    /// Per deficit: its relative value at the smallest radius against `tol`,
    /// and its growth between radii against zero.
    pub fn report(&self, tol: f64) -> Vec<CheckReport> {
        let mut out = Vec::new();
        for (name, values) in self.columns() {
            let last = values.last().copied().unwrap_or(f64::NAN);
            let rows = self.rows.iter().zip(&values).map(|(r, v)| (r.radius, relative(*v, self.scale))).collect();
            out.push(
                CheckReport::new(format!("strict-{name}"), relative(last, self.scale), tol)
                    .with_meta("scale", self.scale)
                    .with_table(name, rows),
            );
            out.push(CheckReport::new(format!("strict-{name}-decrease"), self.growth(&values), 0.0));
        }
        out
    }
}

/// Mollifies `field` at each radius and measures the three deficits. The
/// field must be evaluable within `max(radii)` of the closure of `domain`.
pub fn strict_convergence_experiment(
    field: &BDTestField,
    domain: &Domain,
    radii: &[f64],
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<StrictConvergence> {
    spec.validate()?;
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] < w[0])) || !(radii[radii.len() - 1] > 0.0) {
        return Err(Error::InvalidArgument("radii must be positive and strictly decreasing".into()));
    }
    let norm = bd_norm(field, domain, spec)?;
    let iface = field.interface().map(|i| i.as_ref());
    let assemblers = patch_assemblers(domain, None)?;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let ur = field.mollify(r)?;
        let f = |x: &Vector| -> Result<[f64; 2]> {
            Ok([(ur.eval(x)? - field.eval_ae(x)?).norm(), ur.strain_ac(x)?.frobenius()])
        };
        let [l1, var_r] = domain_integral(domain, iface, Some(r), spec, &f, [0.0; 2])?;
        let hints = NodeHints { interface: iface, support: None, band: Some(r) };
        let nodes = boundary_nodes(domain, spec.cells_per_axis, spec.order, &hints);
        let g = strict_traces(field, domain, &assemblers, nodes.clone(), opts)?;
        let gr = strict_traces(&ur, domain, &assemblers, nodes, opts)?;
        let mut trace_gap = 0.0;
        for ((node, a), b) in g.nodes.iter().zip(&g.values).zip(&gr.values) {
            trace_gap += node.weight * (*a - *b).norm();
        }
        rows.push(StrictRow { radius: r, l1, variation_gap: (var_r - norm.variation()).abs(), trace_gap });
    }
    Ok(StrictConvergence { rows, variation: norm.variation(), scale: norm.total() })
}

/// Radii and tolerance of half-ball limits.
#[derive(Debug, Clone, Copy)]
pub struct HalfBallOptions {
    pub rho0: f64,
    pub count: usize,
    pub tol: f64,
}

impl Default for HalfBallOptions {
    fn default() -> Self {
        Self { rho0: 0.05, count: 12, tol: LIMIT_TOL }
    }
}

/// `A = <Eu, phi> - int phi e dx` against `B = int_Gamma phi (u+ - u-) ⊙ nu dH`
/// with `u±` recomputed from half-ball averages.
#[derive(Debug, Clone)]
pub struct JumpReconstruction {
    pub a: SymTensor,
    pub b: SymTensor,
    pub scale: f64,
    pub nodes: usize,
    /// Whether reversing the orientation swaps `u±` bit for bit on a few
    /// nodes; `None` without an interface.
    pub flip_swaps: Option<bool>,
}

impl JumpReconstruction {
    pub fn report(&self, tol: f64) -> Vec<CheckReport> {
        let mut out = vec![CheckReport::new("jump-reconstruction", relative((self.a - self.b).frobenius(), self.scale), tol)
            .with_meta("scale", self.scale)
            .with_meta("interface_nodes", self.nodes)];
        if let Some(s) = self.flip_swaps {
            out.push(CheckReport::new("orientation-flip", if s { 0.0 } else { 1.0 }, 0.0));
        }
        out
    }
}

pub fn jump_reconstruction_check(
    field: &BDTestField,
    domain: &Domain,
    phi: &TestFunction,
    spec: &QuadratureSpec,
    half: &HalfBallOptions,
) -> Result<JumpReconstruction> {
    let n = domain.dim();
    let distributional = crate::fields::distributional_strain(field, phi, domain, spec)?;
    let a = distributional - strain_measure(field, phi, domain, spec)?.ac_part;
    let scale = bd_norm(field, domain, spec)?.total() * phi.c1_norm(&domain.bounding_box());
    let Some(iface) = field.interface() else {
        return Ok(JumpReconstruction { a, b: SymTensor::zeros(n), scale, nodes: 0, flip_swaps: None });
    };
    let rhos = radii(half.rho0, half.count);
    let inside = |x: &Vector| domain.contains(x);
    let nodes: Vec<_> = iface
        .nodes(spec.cells_per_axis, spec.order, &inside, phi.support())
        .into_iter()
        .filter(|(_, node)| phi.value(&node.point) != 0.0)
        .map(|(_, node)| node)
        .collect();
    let terms: Vec<SymTensor> = nodes
        .par_iter()
        .map(|node| -> Result<SymTensor> {
            let (plus, minus) = one_sided_limits(field, iface, &node.point, &rhos, half.tol)?;
            Ok(sym_outer(&(plus.value - minus.value), &node.normal)? * (node.weight * phi.value(&node.point)))
        })
        .collect::<Result<_>>()?;
    let mut b = SymTensor::zeros(n);
    for t in &terms {
        b += *t;
    }
    let flipped = field.with_flipped_orientation().ok();
    let flip_swaps = match flipped {
        Some(g) => {
            let gi = g.interface().expect("piecewise field");
            let mut ok = true;
            for node in nodes.iter().step_by((nodes.len() / 3).max(1)).take(3) {
                let (p, m) = one_sided_limits(field, iface, &node.point, &rhos, half.tol)?;
                let (fp, fm) = one_sided_limits(&g, gi, &node.point, &rhos, half.tol)?;
                ok &= p.value == fm.value && m.value == fp.value;
            }
            Some(ok)
        }
        None => None,
    };
    Ok(JumpReconstruction { a, b, scale, nodes: nodes.len(), flip_swaps })
}

/// Both sides of
/// `int_0^eps int_{∂Omega ∩ A} |u(y - t xi).xi - gamma(u)(y).xi| dH dt <= C_xi eps |Eu|(A_eps^xi)`
/// on one patch.
#[derive(Debug, Clone)]
pub struct CollarEstimate {
    pub patch: usize,
    /// Local direction.
    pub xi: Vector,
    pub eps: f64,
    pub eps0: f64,
    pub lhs: f64,
    /// `|Eu|(A_eps^xi)`.
    pub strain_mass: f64,
    /// `sqrt(1 + L_xi^2)`.
    pub c_xi: f64,
}

impl CollarEstimate {
    pub fn rhs(&self) -> f64 {
        self.c_xi * self.eps * self.strain_mass
    }

    /// `max(0, lhs - rhs)`, the amount by which the inequality fails.
    pub fn violation(&self) -> f64 {
        (self.lhs - self.rhs()).max(0.0)
    }
}

/// Whether `z` lies in the collar: some `t in (0, eps)` puts `z + t xi` on
/// the graph over the tile.
fn in_collar(collar: &Collar, tile: &crate::geometry::BoxWindow, z: &Vector) -> bool {
    let chart = collar.chart();
    let zl = chart.frame().to_local(z);
    if !chart.local_inside(&zl) {
        return false;
    }
    let xi = collar.xi();
    let gap = |t: f64| {
        let q = zl + xi * t;
        q.last() - chart.graph().value(&q.head())
    };
    let (mut lo, mut hi) = (0.0, collar.eps());
    if gap(hi) <= 0.0 {
        return false;
    }
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if gap(m) > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    tile.contains(&(zl + xi * hi).head())
}

/// Evaluates both sides of the collar estimate for `xi` (local) on patch
/// `patch`, with `eps <= eps0`.
pub fn collar_estimate(
    field: &BDTestField,
    domain: &Domain,
    patch: usize,
    xi: &Vector,
    eps: f64,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<CollarEstimate> {
    spec.validate()?;
    let bp = domain
        .patches()
        .get(patch)
        .ok_or_else(|| Error::InvalidArgument(format!("no patch {patch}")))?;
    let chart = &bp.chart;
    let collar = Collar::new(chart.clone(), *xi, eps)?;
    let xg = chart.frame().dir_to_global(xi);
    let c_xi = reparametrized_lipschitz(cone_beta(xi, chart.lipschitz())?).hypot(1.0);
    let iface = field.interface().map(|i| i.as_ref());
    let hints = NodeHints { interface: iface, ..Default::default() };
    let nodes: Vec<BoundaryNode> = boundary_nodes(domain, spec.cells_per_axis, spec.order, &hints)
        .into_iter()
        .filter(|n| n.patch == patch)
        .collect();
    let assembler = TraceAssembler::new(chart, None)?;
    let per_node: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|node| -> Result<(f64, f64)> {
            let y = node.point;
            let gamma = assembler.assemble(field, &y, opts)?;
            if !gamma.converged {
                return Err(Error::NotConverged { what: format!("trace at {y:?}"), residual: f64::NAN, tol: opts.tol });
            }
            let gx = gamma.value.dot(&xg);
            let mut breaks = Vec::new();
            if let Some(i) = iface {
                i.breaks(&y, &(-xg), 0.0, eps, &mut breaks);
            }
            let (mut lhs, mut vol) = (0.0, 0.0);
            for (t, w) in composite_rule(0.0, eps, 4, &breaks, spec.order) {
                let z = y - xg * t;
                lhs += w * (field.eval_ae(&z)?.dot(&xg) - gx).abs();
                vol += w * field.strain_ac_ae(&z)?.frobenius();
            }
            Ok((lhs, vol * xg.dot(&node.normal).abs()))
        })
        .collect::<Result<_>>()?;
    let (mut lhs, mut strain_mass) = (0.0, 0.0);
    for (node, (l, v)) in nodes.iter().zip(&per_node) {
        lhs += node.weight * l;
        strain_mass += node.weight * v;
    }
    if let Some(i) = iface {
        let inside = |z: &Vector| in_collar(&collar, &bp.tile, z);
        for (_, node) in i.nodes(spec.cells_per_axis, spec.order, &inside, None) {
            strain_mass += node.weight * sym_outer(&field.jump(&node.point)?, &node.normal)?.frobenius();
        }
    }
    Ok(CollarEstimate { patch, xi: *xi, eps, eps0: collar.eps0(), lhs, strain_mass, c_xi })
}

/// Assembled against ball-averaged traces at sampled boundary nodes.
#[derive(Debug, Clone)]
pub struct TraceAgreement {
    /// `(point, assembled, averaged)`.
    pub rows: Vec<(Vector, Vector, Vector)>,
}

impl TraceAgreement {
    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|(_, a, b)| (*a - *b).norm()).fold(0.0, f64::max)
    }

    pub fn report(&self, tol: f64) -> CheckReport {
        CheckReport::new("averaged-trace-agreement", self.max_gap(), tol).with_meta("points", self.rows.len())
    }
}

/// Compares the two trace constructions at `points` boundary nodes drawn
/// with `seed`.
pub fn averaged_trace_agreement(
    field: &BDTestField,
    domain: &Domain,
    points: usize,
    seed: u64,
    opts: &TraceOptions,
) -> Result<TraceAgreement> {
    let hints = NodeHints { interface: field.interface().map(|i| i.as_ref()), ..Default::default() };
    let nodes = boundary_nodes(domain, 4, 4, &hints);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<BoundaryNode> =
        sample(&mut rng, nodes.len(), points.min(nodes.len())).into_iter().map(|k| nodes[k]).collect();
    let rows = picked
        .par_iter()
        .map(|node| -> Result<(Vector, Vector, Vector)> {
            let chart = &domain.patches()[node.patch].chart;
            let assembled = assemble_trace(field, chart, &node.point, None, opts)?;
            let rhos = radii(admissible_ball_radius(chart, &node.point, 0.1), 12);
            let averaged = averaged_trace(field, chart, &node.point, &rhos, opts.tol, None)?;
            Ok((node.point, assembled.value, averaged.estimate.value))
        })
        .collect::<Result<_>>()?;
    Ok(TraceAgreement { rows })
}

/// Traces of the same field computed in overlapping charts.
#[derive(Debug, Clone)]
pub struct OverlapConsistency {
    pub pairs: usize,
    pub max_gap: f64,
}

impl OverlapConsistency {
    pub fn report(&self, tol: f64) -> CheckReport {
        CheckReport::new("chart-overlap", self.max_gap, tol).with_meta("pairs", self.pairs)
    }
}

/// At every boundary node, compares the trace from its own chart with the
/// trace from each other chart whose inner window also covers it.
pub fn chart_overlap_consistency(
    field: &BDTestField,
    domain: &Domain,
    spec: &QuadratureSpec,
    opts: &TraceOptions,
) -> Result<OverlapConsistency> {
    let patches = domain.patches();
    let hints = NodeHints { interface: field.interface().map(|i| i.as_ref()), ..Default::default() };
    let mut pairs = Vec::new();
    for node in boundary_nodes(domain, spec.cells_per_axis, spec.order, &hints) {
        for (j, other) in patches.iter().enumerate() {
            if j == node.patch {
                continue;
            }
            let z = other.chart.frame().to_local(&node.point);
            let p = z.head();
            if other.chart.inner().head().contains(&p) && (z.last() - other.chart.graph().value(&p)).abs() <= 1e-9 {
                pairs.push((node, j));
            }
        }
    }
    let gaps: Vec<f64> = pairs
        .par_iter()
        .map(|(node, j)| -> Result<f64> {
            let own = assemble_trace(field, &patches[node.patch].chart, &node.point, None, opts)?;
            let other = assemble_trace(field, &patches[*j].chart, &node.point, None, opts)?;
            Ok((own.value - other.value).norm())
        })
        .collect::<Result<_>>()?;
    Ok(OverlapConsistency { pairs: gaps.len(), max_gap: gaps.into_iter().fold(0.0, f64::max) })
}
