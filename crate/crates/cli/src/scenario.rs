//! Turns parsed configs into library objects. Every error here is a
//! configuration error (exit code 2).

use std::sync::Arc;

use bdtrace::fields::{BDTestField, ClosedForm, Interface, InterfacePiece, TestFunction};
use bdtrace::geometry::{BoundaryPatch, BoxWindow, Domain, ExprGraph, Frame, LipschitzGraphChart};
use bdtrace::quadrature::QuadratureSpec;
use bdtrace::symcalc::{Matrix, SkewTensor, Vector};
use bdtrace::trace::{DirectionalTracer, DEFAULT_TOL};
use bdtrace::verify::{LIMIT_TOL, QUADRATURE_TOL};

use crate::config::{Bounds, CheckConfig, ChartConfig, ConfigError, DomainConfig, FieldConfig, Located, PhiConfig};

pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub limit_tol: f64,
    pub domain: Domain,
    pub field: BDTestField,
    pub spec: QuadratureSpec,
    pub checks: Vec<Check>,
}

pub struct Check {
    pub label: Option<String>,
    pub tol: f64,
    pub kind: CheckKind,
}

pub enum CheckKind {
    Restriction,
    Ibp { phi: TestFunction },
    DirectionalIbp { phi: TestFunction, xi: Vector },
    TraceNorm,
    Strict { radii: Vec<f64> },
    Jump { phi: TestFunction, rho0: f64, count: usize },
    Collar { patch: usize, directions: Vec<Vector>, fractions: Vec<f64> },
    AveragedTrace { points: usize },
    Overlap,
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Restriction => "restriction",
            CheckKind::Ibp { .. } => "ibp",
            CheckKind::DirectionalIbp { .. } => "directional-ibp",
            CheckKind::TraceNorm => "trace-norm",
            CheckKind::Strict { .. } => "strict",
            CheckKind::Jump { .. } => "jump",
            CheckKind::Collar { .. } => "collar",
            CheckKind::AveragedTrace { .. } => "averaged-trace",
            CheckKind::Overlap => "overlap",
        }
    }

    fn default_tol(kind: &str) -> f64 {
        match kind {
            "ibp" => QUADRATURE_TOL,
            "trace-norm" => 0.1,
            "strict" => 1e-3,
            "collar" => 1e-9,
            "averaged-trace" | "overlap" => 2.0 * LIMIT_TOL,
            _ => LIMIT_TOL,
        }
    }
}

type Res<T> = Result<T, String>;

fn lib<T>(r: bdtrace::Result<T>) -> Res<T> {
    r.map_err(|e| e.to_string())
}

fn vector(v: &[f64], dim: usize, what: &str) -> Res<Vector> {
    if v.len() != dim {
        return Err(format!("{what} needs {dim} components, got {}", v.len()));
    }
    lib(Vector::new(v))
}

fn window(b: &Bounds, dim: usize, what: &str) -> Res<BoxWindow> {
    if b.len() != dim {
        return Err(format!("{what} needs {dim} intervals, got {}", b.len()));
    }
    let bounds: Vec<(f64, f64)> = b.iter().map(|[lo, hi]| (*lo, *hi)).collect();
    lib(BoxWindow::from_bounds(&bounds)).map_err(|e| format!("{what}: {e}"))
}

fn frame(origin: &[f64], axes: &[Vec<f64>], dim: usize, what: &str) -> Res<Frame> {
    let origin = vector(origin, dim, &format!("{what}.origin"))?;
    if axes.len() != dim {
        return Err(format!("{what}.axes needs {dim} vectors, got {}", axes.len()));
    }
    let axes = axes.iter().map(|a| vector(a, dim, &format!("{what}.axes"))).collect::<Res<Vec<_>>>()?;
    lib(Frame::new(origin, &axes)).map_err(|e| format!("{what}: {e}"))
}

fn graph(value: &str, gradient: &Option<Vec<String>>, param_dim: usize, what: &str) -> Res<ExprGraph> {
    if let Some(g) = gradient {
        if g.len() != param_dim {
            return Err(format!("{what} gradient needs {param_dim} entries, got {}", g.len()));
        }
    }
    lib(ExprGraph::parse(value, gradient.as_deref(), param_dim)).map_err(|e| format!("{what}: {e}"))
}

fn chart(c: &ChartConfig, dim: usize) -> Res<BoundaryPatch> {
    let what = format!("chart '{}'", c.name);
    let chart = lib(LipschitzGraphChart::new(
        frame(&c.origin, &c.axes, dim, &what)?,
        Arc::new(graph(&c.graph, &c.gradient, dim - 1, &what)?),
        c.lipschitz,
        window(&c.inner, dim, &format!("{what}.inner"))?,
        window(&c.outer, dim, &format!("{what}.outer"))?,
    ))
    .map_err(|e| format!("{what}: {e}"))?;
    lib(BoundaryPatch::new(c.name.clone(), chart, window(&c.tile, dim - 1, &format!("{what}.tile"))?))
        .map_err(|e| format!("{what}: {e}"))
}

fn domain(cfg: &DomainConfig, dim: usize) -> Res<Domain> {
    match cfg {
        DomainConfig::UnitBox => lib(Domain::unit_box(dim)),
        DomainConfig::Subgraph { base, bottom, top, top_gradient, lipschitz } => {
            let g = graph(top, top_gradient, dim - 1, "domain.top")?;
            lib(Domain::subgraph_box(window(base, dim - 1, "domain.base")?, *bottom, Arc::new(g), *lipschitz))
                .map_err(|e| format!("domain: {e}"))
        }
    }
}

fn require<'a, T>(v: &'a Option<T>, key: &str, kind: &str) -> Res<&'a T> {
    v.as_ref().ok_or_else(|| format!("{kind} needs '{key}'"))
}

fn closed_form(f: &FieldConfig, dim: usize, what: &str) -> Res<ClosedForm> {
    let kind = format!("{what} of kind '{}'", f.kind);
    match f.kind.as_str() {
        "zero" => Ok(ClosedForm::constant(lib(Vector::new(&vec![0.0; dim]))?)),
        "constant" => Ok(ClosedForm::constant(vector(require(&f.value, "value", &kind)?, dim, "value")?)),
        "rigid" => {
            let b = vector(require(&f.b, "b", &kind)?, dim, "b")?;
            lib(ClosedForm::rigid(b, lib(SkewTensor::new(dim, require(&f.skew, "skew", &kind)?))?))
        }
        "affine" => {
            let b = vector(require(&f.b, "b", &kind)?, dim, "b")?;
            lib(ClosedForm::affine(b, lib(Matrix::from_rows(require(&f.matrix, "matrix", &kind)?))?))
        }
        "expr" => {
            let u: Vec<&str> = require(&f.u, "u", &kind)?.iter().map(String::as_str).collect();
            let strain: Option<Vec<&str>> = f.strain.as_ref().map(|s| s.iter().map(String::as_str).collect());
            lib(ClosedForm::parse(dim, &u, strain.as_deref())).map_err(|e| format!("{what}: {e}"))
        }
        other => Err(format!("{what}: unknown kind '{other}'")),
    }
}

fn field(f: &FieldConfig, interface: Option<Arc<Interface>>, dim: usize) -> Res<BDTestField> {
    let u = if f.kind == "piecewise" {
        let iface = interface.ok_or("piecewise fields need an [scenario.interface] table")?;
        let plus = closed_form(require(&f.plus, "plus", "field of kind 'piecewise'")?, dim, "field.plus")?;
        let minus = closed_form(require(&f.minus, "minus", "field of kind 'piecewise'")?, dim, "field.minus")?;
        lib(BDTestField::piecewise(plus, minus, iface))?
    } else {
        BDTestField::closed(closed_form(f, dim, "field")?)
    };
    match &f.window {
        Some(w) => lib(u.with_domain(window(w, dim, "field.window")?)),
        None => Ok(u),
    }
}

fn phi(p: &Option<PhiConfig>, dim: usize, check: &str) -> Res<TestFunction> {
    let p = p.as_ref().ok_or_else(|| format!("check '{check}' needs a 'phi' table"))?;
    match p.kind.as_str() {
        "expr" => {
            let value = require(&p.value, "value", "phi of kind 'expr'")?;
            let grad: Vec<&str> = require(&p.gradient, "gradient", "phi of kind 'expr'")?.iter().map(String::as_str).collect();
            lib(TestFunction::expr(dim, value, &grad)).map_err(|e| format!("phi: {e}"))
        }
        "bump" => {
            let c = vector(require(&p.center, "center", "phi of kind 'bump'")?, dim, "phi.center")?;
            lib(TestFunction::bump(c, *require(&p.radius, "radius", "phi of kind 'bump'")?, p.power.unwrap_or(4)))
        }
        other => Err(format!("phi: unknown kind '{other}'")),
    }
}

fn check(c: &CheckConfig, sc: &Scenario) -> Res<Check> {
    let dim = sc.domain.dim();
    let kind = match c.kind.as_str() {
        "restriction" => CheckKind::Restriction,
        "ibp" => CheckKind::Ibp { phi: phi(&c.phi, dim, &c.kind)? },
        "directional-ibp" => {
            let xi = vector(require(&c.xi, "xi", "check 'directional-ibp'")?, dim, "xi")?;
            CheckKind::DirectionalIbp { phi: phi(&c.phi, dim, &c.kind)?, xi: lib(xi.normalized())? }
        }
        "trace-norm" => CheckKind::TraceNorm,
        "strict" => {
            let radii = require(&c.radii, "radii", "check 'strict'")?.clone();
            if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] < w[0])) || !(radii[radii.len() - 1] > 0.0) {
                return Err("strict: radii must be positive and strictly decreasing, at least two".into());
            }
            CheckKind::Strict { radii }
        }
        "jump" => CheckKind::Jump { phi: phi(&c.phi, dim, &c.kind)?, rho0: c.rho0.unwrap_or(0.05), count: c.count.unwrap_or(12) },
        "collar" => {
            let name = c.patch.as_deref().unwrap_or("top");
            let patch = sc
                .domain
                .patches()
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| format!("collar: no patch named '{name}'"))?;
            let chart = &sc.domain.patches()[patch].chart;
            let directions = match &c.directions {
                Some(ds) => ds.iter().map(|d| vector(d, dim, "directions").and_then(|v| lib(v.normalized()))).collect::<Res<Vec<_>>>()?,
                None => vec![Vector::unit(dim, dim - 1)],
            };
            for d in &directions {
                lib(DirectionalTracer::new(chart, d)).map_err(|e| format!("collar direction {d:?}: {e}"))?;
            }
            let fractions = c.eps_fractions.clone().unwrap_or_else(|| vec![0.5, 0.25, 0.125]);
            if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                return Err("collar: eps_fractions must lie in (0, 1]".into());
            }
            CheckKind::Collar { patch, directions, fractions }
        }
        "averaged-trace" => CheckKind::AveragedTrace { points: c.points.unwrap_or(10) },
        "overlap" => CheckKind::Overlap,
        other => return Err(format!("unknown check kind '{other}'")),
    };
    let tol = c.tol.unwrap_or_else(|| CheckKind::default_tol(&c.kind));
    if !(tol >= 0.0) {
        return Err(format!("check '{}': tol must be non-negative", c.kind));
    }
    Ok(Check { label: c.name.clone(), tol, kind })
}

/// Builds a scenario; `seed` overrides the configured one.
pub fn build(loc: &Located, seed: Option<u64>) -> Result<Scenario, ConfigError> {
    build_inner(loc, seed).map_err(|m| loc.invalid(m))
}

fn build_inner(loc: &Located, seed: Option<u64>) -> Res<Scenario> {
    let cfg = &loc.config;
    let dim = cfg.dim;
    if !(2..=3).contains(&dim) {
        return Err(format!("dim must be 2 or 3, got {dim}"));
    }
    let mut d = domain(&cfg.domain, dim)?;
    if !cfg.charts.is_empty() {
        let patches = cfg.charts.iter().map(|c| chart(c, dim)).collect::<Res<Vec<_>>>()?;
        d = lib(d.with_patches(patches, cfg.charts_cover_boundary))?;
    }
    let interface = match &cfg.interface {
        Some(i) => {
            let fr = match (&i.origin, &i.axes) {
                (None, None) => Frame::identity(dim),
                (o, a) => frame(
                    o.as_deref().unwrap_or(&vec![0.0; dim]),
                    a.as_deref().ok_or("interface.origin given without interface.axes")?,
                    dim,
                    "interface",
                )?,
            };
            let g = graph(&i.graph, &i.gradient, dim - 1, "interface")?;
            let piece = lib(InterfacePiece::new(Arc::new(g), window(&i.window, dim - 1, "interface.window")?, i.plus_above))
                .map_err(|e| format!("interface: {e}"))?;
            Some(Arc::new(lib(Interface::new(fr, vec![piece]))?))
        }
        None => None,
    };
    let q = cfg.quadrature;
    let spec = lib(QuadratureSpec::new(q.order, q.cells, q.levels)).map_err(|e| format!("quadrature: {e}"))?;
    let limit_tol = cfg.limit_tol.unwrap_or(DEFAULT_TOL);
    if !(limit_tol > 0.0) {
        return Err("limit_tol must be positive".into());
    }
    let mut sc = Scenario {
        name: cfg.name.clone(),
        seed: seed.unwrap_or(cfg.seed),
        limit_tol,
        field: field(&cfg.field, interface, dim)?,
        domain: d,
        spec,
        checks: Vec::new(),
    };
    let mut checks = Vec::with_capacity(cfg.checks.len());
    for c in &cfg.checks {
        checks.push(check(c, &sc)?);
    }
    let mut labels: Vec<String> = checks.iter().map(|c| format!("{:?}/{}", c.label, c.kind.name())).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err("two checks of the same kind need distinct 'name' keys".into());
    }
    sc.checks = checks;
    Ok(sc)
}
