//! Closed-form test fields of bounded deformation: smooth and affine fields,
//! rigid motions, fields jumping across a C¹ interface, and their
//! mollifications.

mod interface;
mod measure;
mod mollifier;
mod test_function;
pub mod zoo;

use std::sync::Arc;

pub(crate) use interface::graded_breaks;
pub use interface::{Interface, InterfacePiece, Side, ON_INTERFACE_TOL};
pub(crate) use measure::support_breaks;
pub use measure::{distributional_strain, domain_region, strain_measure, MeasureValue};
pub use mollifier::{ball_columns, profile, Mollifier, BALL_CELLS, BALL_ORDER};
pub use test_function::TestFunction;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{BoxWindow, Frame};
use crate::quadrature::{integrate_columns, ColumnSplit, QuadValue};
use crate::symcalc::{sym_len, sym_outer, Matrix, SkewTensor, SymTensor, Vector};

/// A single closed-form vector field.
#[derive(Debug, Clone)]
pub enum ClosedForm {
    Expr { u: Vec<Expr>, strain: Option<Vec<Expr>> },
    Rigid { b: Vector, a: SkewTensor },
    Affine { b: Vector, m: Matrix },
}

impl ClosedForm {
    /// `strain`, when given, lists the upper triangle row by row.
    pub fn expr(dim: usize, u: Vec<Expr>, strain: Option<Vec<Expr>>) -> Result<Self> {
        if u.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: u.len() });
        }
        if let Some(s) = &strain {
            if s.len() != sym_len(dim) {
                return Err(Error::DimensionMismatch { expected: sym_len(dim), found: s.len() });
            }
        }
        for e in u.iter().chain(strain.iter().flatten()) {
            if e.num_vars() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.num_vars() });
            }
        }
        Ok(ClosedForm::Expr { u, strain })
    }

    pub fn parse(dim: usize, u: &[&str], strain: Option<&[&str]>) -> Result<Self> {
        let parse_all = |v: &[&str]| v.iter().map(|s| Expr::parse(s, dim)).collect::<std::result::Result<Vec<_>, _>>();
        Self::expr(dim, parse_all(u)?, strain.map(parse_all).transpose()?)
    }

    pub fn rigid(b: Vector, a: SkewTensor) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), found: a.dim() });
        }
        Ok(ClosedForm::Rigid { b, a })
    }

    pub fn affine(b: Vector, m: Matrix) -> Result<Self> {
        if m.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), found: m.dim() });
        }
        Ok(ClosedForm::Affine { b, m })
    }

    pub fn constant(c: Vector) -> Self {
        ClosedForm::Affine { b: c, m: Matrix::zeros(c.dim()) }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedForm::Expr { u, .. } => u.len(),
            ClosedForm::Rigid { b, .. } | ClosedForm::Affine { b, .. } => b.dim(),
        }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        match self {
            ClosedForm::Expr { u, .. } => {
                let mut out = Vector::zeros(u.len());
                for (k, e) in u.iter().enumerate() {
                    out[k] = e.eval(x.as_slice());
                }
                out
            }
            ClosedForm::Rigid { b, a } => a.apply(x) + *b,
            ClosedForm::Affine { b, m } => m.apply(x) + *b,
        }
    }

    /// Closed-form strain, if known.
    pub fn strain(&self, x: &Vector) -> Option<SymTensor> {
        match self {
            ClosedForm::Expr { strain: Some(s), .. } => {
                let vals: Vec<f64> = s.iter().map(|e| e.eval(x.as_slice())).collect();
                SymTensor::from_upper(x.dim(), &vals).ok()
            }
            ClosedForm::Expr { strain: None, .. } => None,
            ClosedForm::Rigid { b, .. } => Some(SymTensor::zeros(b.dim())),
            ClosedForm::Affine { m, .. } => Some(m.sym_part()),
        }
    }

    pub fn strain_or_fd(&self, x: &Vector) -> SymTensor {
        self.strain(x).unwrap_or_else(|| fd_strain(&|y| self.eval(y), x))
    }
}

/// Symmetric part of the central-difference Jacobian of `f` at `x`.
pub fn fd_strain(f: &dyn Fn(&Vector) -> Vector, x: &Vector) -> SymTensor {
    let n = x.dim();
    let h = f64::EPSILON.cbrt() * (1.0 + x.norm());
    let mut jac = [[0.0; 3]; 3];
    for j in 0..n {
        let e = Vector::unit(n, j) * h;
        let d = (f(&(*x + e)) - f(&(*x - e))) * (0.5 / h);
        for i in 0..n {
            jac[i][j] = d[i];
        }
    }
    let mut t = SymTensor::zeros(n);
    for i in 0..n {
        for j in i..n {
            t.set(i, j, 0.5 * (jac[i][j] + jac[j][i]));
        }
    }
    t
}

/// Coarse classification of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Smooth,
    Rigid,
    Affine,
    Piecewise,
    Sum,
    Mollified,
}

#[derive(Debug, Clone)]
struct Mollified {
    base: BDTestField,
    radius: f64,
    kernel: &'static Mollifier,
    cells: usize,
    order: usize,
}

#[derive(Debug, Clone)]
enum Kind {
    Closed(ClosedForm),
    Piecewise { plus: ClosedForm, minus: ClosedForm, interface: Arc<Interface> },
    Sum(Vec<BDTestField>),
    Mollified(Arc<Mollified>),
}

/// A vector field `u : R^n -> R^n` on an optional box of definition, with an
/// absolutely continuous strain and, for piecewise fields, a jump part
/// carried by an interface.
#[derive(Debug, Clone)]
pub struct BDTestField {
    dim: usize,
    kind: Kind,
    domain: Option<BoxWindow>,
}

impl BDTestField {
    pub fn closed(form: ClosedForm) -> Self {
        Self { dim: form.dim(), kind: Kind::Closed(form), domain: None }
    }

    pub fn zero(dim: usize) -> Self {
        Self::closed(ClosedForm::constant(Vector::zeros(dim)))
    }

    /// `plus` on the side `nu_Gamma` points to, `minus` on the other.
    pub fn piecewise(plus: ClosedForm, minus: ClosedForm, interface: Arc<Interface>) -> Result<Self> {
        let dim = interface.dim();
        for f in [&plus, &minus] {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: f.dim() });
            }
        }
        Ok(Self { dim, kind: Kind::Piecewise { plus, minus, interface }, domain: None })
    }

    /// `a + b`; jump parts must live on the same interface object.
    pub fn sum(a: &BDTestField, b: &BDTestField) -> Result<Self> {
        if a.dim != b.dim {
            return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
        }
        if let (Some(ia), Some(ib)) = (a.interface(), b.interface()) {
            if !Arc::ptr_eq(ia, ib) {
                return Err(Error::InvalidArgument("summands jump across different interfaces".into()));
            }
        }
        let domain = match (a.domain, b.domain) {
            (Some(x), Some(y)) => Some(intersect(&x, &y)?),
            (x, y) => x.or(y),
        };
        Ok(Self { dim: a.dim, kind: Kind::Sum(vec![a.clone(), b.clone()]), domain })
    }

    /// Restricts evaluation to `window`.
    pub fn with_domain(mut self, window: BoxWindow) -> Result<Self> {
        if window.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: window.dim() });
        }
        self.domain = Some(match self.domain {
            Some(d) => intersect(&d, &window)?,
            None => window,
        });
        Ok(self)
    }

    /// The same piecewise field described with the reversed orientation.
    pub fn with_flipped_orientation(&self) -> Result<Self> {
        match &self.kind {
            Kind::Piecewise { plus, minus, interface } => Ok(Self {
                dim: self.dim,
                kind: Kind::Piecewise {
                    plus: minus.clone(),
                    minus: plus.clone(),
                    interface: Arc::new(interface.flipped()),
                },
                domain: self.domain,
            }),
            _ => Err(Error::InvalidArgument("only piecewise fields carry an orientation".into())),
        }
    }

    pub fn mollify(&self, r: f64) -> Result<Self> {
        self.mollify_with(r, BALL_CELLS, BALL_ORDER)
    }

    /// `u_r = rho_r * u`, evaluated with a `cells x order` Gauss rule per
    /// axis of the ball.
    pub fn mollify_with(&self, r: f64, cells: usize, order: usize) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("mollifier radius must be positive, got {r}")));
        }
        if matches!(self.kind, Kind::Mollified(_)) {
            return Err(Error::InvalidArgument("field is already mollified".into()));
        }
        let domain = match self.domain {
            Some(d) => {
                let bounds: Vec<(f64, f64)> = (0..self.dim).map(|k| (d.lo()[k] + r, d.hi()[k] - r)).collect();
                Some(BoxWindow::from_bounds(&bounds).map_err(|_| {
                    Error::InvalidArgument(format!("radius {r} leaves no evaluable points"))
                })?)
            }
            None => None,
        };
        let kernel = Mollifier::cached(self.dim)?;
        Ok(Self {
            dim: self.dim,
            kind: Kind::Mollified(Arc::new(Mollified { base: self.clone(), radius: r, kernel, cells, order })),
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Option<&BoxWindow> {
        self.domain.as_ref()
    }

    pub fn kind(&self) -> FieldKind {
        match &self.kind {
            Kind::Closed(ClosedForm::Expr { .. }) => FieldKind::Smooth,
            Kind::Closed(ClosedForm::Rigid { .. }) => FieldKind::Rigid,
            Kind::Closed(ClosedForm::Affine { .. }) => FieldKind::Affine,
            Kind::Piecewise { .. } => FieldKind::Piecewise,
            Kind::Sum(_) => FieldKind::Sum,
            Kind::Mollified(_) => FieldKind::Mollified,
        }
    }

    /// Mollification radius, for mollified fields.
    pub fn radius(&self) -> Option<f64> {
        match &self.kind {
            Kind::Mollified(m) => Some(m.radius),
            _ => None,
        }
    }

    /// The interface carrying the jump part, if any.
    pub fn interface(&self) -> Option<&Arc<Interface>> {
        match &self.kind {
            Kind::Piecewise { interface, .. } => Some(interface),
            Kind::Sum(parts) => parts.iter().find_map(|p| p.interface()),
            _ => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.interface().is_none()
    }

    /// True when every piece carries a closed-form strain.
    pub fn has_closed_strain(&self) -> bool {
        match &self.kind {
            Kind::Closed(f) => !matches!(f, ClosedForm::Expr { strain: None, .. }),
            Kind::Piecewise { plus, minus, .. } => {
                [plus, minus].iter().all(|f| !matches!(f, ClosedForm::Expr { strain: None, .. }))
            }
            Kind::Sum(parts) => parts.iter().all(BDTestField::has_closed_strain),
            Kind::Mollified(_) => false,
        }
    }

    fn check_domain(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        match &self.domain {
            Some(d) if !d.contains(x) => Err(Error::OutOfDomain(x.as_slice().to_vec())),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        self.check_domain(x)?;
        match &self.kind {
            Kind::Closed(f) => Ok(f.eval(x)),
            Kind::Piecewise { plus, minus, interface } => Ok(match interface.side(x)? {
                Side::Plus => plus.eval(x),
                Side::Minus => minus.eval(x),
            }),
            Kind::Sum(parts) => {
                let mut acc = Vector::zeros(self.dim);
                for p in parts {
                    acc += p.eval(x)?;
                }
                Ok(acc)
            }
            Kind::Mollified(m) => m.value(x),
        }
    }

    fn ae_side(&self, x: &Vector) -> Side {
        self.interface().map_or(Side::Plus, |i| i.side_ae(x))
    }

    /// Value with points on the interface assigned to the side above the
    /// graph; for quadrature nodes, where the interface is a null set.
    pub fn eval_ae(&self, x: &Vector) -> Result<Vector> {
        match self.eval(x) {
            Err(Error::OnInterface { .. }) => self.eval_side(x, self.ae_side(x)),
            other => other,
        }
    }

    /// The closed form of the given side, continued across the interface.
    pub fn eval_side(&self, x: &Vector, side: Side) -> Result<Vector> {
        self.check_domain(x)?;
        match &self.kind {
            Kind::Piecewise { plus, minus, .. } => Ok(match side {
                Side::Plus => plus.eval(x),
                Side::Minus => minus.eval(x),
            }),
            Kind::Sum(parts) => {
                let mut acc = Vector::zeros(self.dim);
                for p in parts {
                    acc += p.eval_side(x, side)?;
                }
                Ok(acc)
            }
            _ => self.eval(x),
        }
    }

    /// Declared jump `u+ - u-` at a point of the interface.
    pub fn jump(&self, x: &Vector) -> Result<Vector> {
        if self.interface().is_none() {
            return Ok(Vector::zeros(self.dim));
        }
        Ok(self.eval_side(x, Side::Plus)? - self.eval_side(x, Side::Minus)?)
    }

    /// Absolutely continuous strain `e(x)`.
    pub fn strain_ac(&self, x: &Vector) -> Result<SymTensor> {
        self.check_domain(x)?;
        match &self.kind {
            Kind::Closed(f) => Ok(f.strain_or_fd(x)),
            Kind::Piecewise { plus, minus, interface } => Ok(match interface.side(x)? {
                Side::Plus => plus.strain_or_fd(x),
                Side::Minus => minus.strain_or_fd(x),
            }),
            Kind::Sum(parts) => {
                let mut acc = SymTensor::zeros(self.dim);
                for p in parts {
                    acc += p.strain_ac(x)?;
                }
                Ok(acc)
            }
            Kind::Mollified(m) => m.strain(x),
        }
    }

    pub fn strain_ac_ae(&self, x: &Vector) -> Result<SymTensor> {
        match self.strain_ac(x) {
            Err(Error::OnInterface { .. }) => self.strain_side(x, self.ae_side(x)),
            other => other,
        }
    }

    fn strain_side(&self, x: &Vector, side: Side) -> Result<SymTensor> {
        match &self.kind {
            Kind::Piecewise { plus, minus, .. } => Ok(match side {
                Side::Plus => plus.strain_or_fd(x),
                Side::Minus => minus.strain_or_fd(x),
            }),
            Kind::Sum(parts) => {
                let mut acc = SymTensor::zeros(self.dim);
                for p in parts {
                    acc += p.strain_side(x, side)?;
                }
                Ok(acc)
            }
            _ => self.strain_ac(x),
        }
    }

    /// Symmetric part of a central-difference Jacobian of [`Self::eval`].
    pub fn fd_strain(&self, x: &Vector) -> Result<SymTensor> {
        let n = self.dim;
        let h = f64::EPSILON.cbrt() * (1.0 + x.norm());
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let e = Vector::unit(n, j) * h;
            cols.push((self.eval(&(*x + e))? - self.eval(&(*x - e))?) * (0.5 / h));
        }
        let mut t = SymTensor::zeros(n);
        for i in 0..n {
            for j in i..n {
                t.set(i, j, 0.5 * (cols[j][i] + cols[i][j]));
            }
        }
        Ok(t)
    }
}

fn intersect(a: &BoxWindow, b: &BoxWindow) -> Result<BoxWindow> {
    let bounds: Vec<(f64, f64)> = (0..a.dim()).map(|k| (a.lo()[k].max(b.lo()[k]), a.hi()[k].min(b.hi()[k]))).collect();
    BoxWindow::from_bounds(&bounds).map_err(|_| Error::InvalidArgument("field domains do not overlap".into()))
}

impl Mollified {
    fn columns(&self, x: &Vector) -> (Vec<crate::quadrature::Column>, Option<&Arc<Interface>>) {
        let iface = self.base.interface();
        let frame = iface.map(|i| *i.frame()).unwrap_or_else(|| Frame::identity(x.dim()));
        (ball_columns(x, self.radius, &frame, self.cells, self.order), iface)
    }

    fn value(&self, x: &Vector) -> Result<Vector> {
        let n = x.dim();
        let (cols, iface) = self.columns(x);
        let splitters: Vec<&dyn ColumnSplit> = iface.map(|i| i.as_ref() as &dyn ColumnSplit).into_iter().collect();
        let f = |p: &crate::quadrature::ColumnPoint| -> Result<[f64; 4]> {
            let w = self.kernel.density(&(p.x - *x), self.radius);
            let u = self.base.eval_ae(&p.x)?;
            let mut out = [w, 0.0, 0.0, 0.0];
            for k in 0..n {
                out[k + 1] = w * u[k];
            }
            Ok(out)
        };
        let acc = integrate_columns(&cols, self.cells, self.order, &splitters, &f, [0.0; 4])?;
        let mut u = Vector::zeros(n);
        for k in 0..n {
            u[k] = acc[k + 1] / acc[0];
        }
        Ok(u)
    }

    fn strain(&self, x: &Vector) -> Result<SymTensor> {
        let n = x.dim();
        let m = sym_len(n);
        let (cols, iface) = self.columns(x);
        let splitters: Vec<&dyn ColumnSplit> = iface.map(|i| i.as_ref() as &dyn ColumnSplit).into_iter().collect();
        let f = |p: &crate::quadrature::ColumnPoint| -> Result<[f64; 7]> {
            let w = self.kernel.density(&(p.x - *x), self.radius);
            let e = self.base.strain_ac_ae(&p.x)?;
            let mut out = [0.0; 7];
            out[0] = w;
            for k in 0..m {
                out[k + 1] = w * e.upper()[k];
            }
            Ok(out)
        };
        let acc = integrate_columns(&cols, self.cells, self.order, &splitters, &f, [0.0; 7])?;
        let mut e = SymTensor::from_upper(n, &acc[1..=m].iter().map(|v| v / acc[0]).collect::<Vec<_>>())?;
        if let Some(iface) = iface {
            for (_, node) in iface.ball_nodes(x, self.radius, self.cells, self.order) {
                let w = self.kernel.density(&(node.point - *x), self.radius);
                if w == 0.0 {
                    continue;
                }
                let jump = self.base.jump(&node.point)?;
                e.axpy(w * node.weight, &sym_outer(&jump, &node.normal)?);
            }
        }
        Ok(e)
    }
}
