//! Named domains, fields and test functions shared by the bundled scenarios
//! and the acceptance suite. All fields are defined on the whole plane; the
//! piecewise ones jump across a graph spanning `-1 < x1 < 2`.

use std::sync::Arc;

use crate::error::Result;
use crate::fields::{BDTestField, ClosedForm, Interface, TestFunction};
use crate::geometry::{BoxWindow, Domain, ExprGraph};
use crate::symcalc::{Matrix, SkewTensor, Vector};

pub fn unit_square() -> Result<Domain> {
    Domain::unit_box(2)
}

/// `{0 < x1 < 1, -1 < x2 < 0.2 sin(3 x1)}`, Lipschitz constant 0.6.
pub fn sine_domain() -> Result<Domain> {
    let top = ExprGraph::parse("0.2*sin(3*x1)", Some(&["0.6*cos(3*x1)".to_string()]), 1)?;
    Domain::subgraph_box(BoxWindow::from_bounds(&[(0.0, 1.0)])?, -1.0, Arc::new(top), 0.6)
}

/// `(0, 1) x (-0.5, 0.5)`.
pub fn centered_square() -> Result<Domain> {
    Domain::subgraph_box(BoxWindow::from_bounds(&[(0.0, 1.0)])?, -0.5, Arc::new(ExprGraph::constant(0.5, 1)), 0.0)
}

pub fn rigid() -> Result<BDTestField> {
    Ok(BDTestField::closed(ClosedForm::rigid(Vector::from_slice(&[0.3, -0.2]), SkewTensor::new(2, &[1.5])?)?))
}

pub fn affine() -> Result<BDTestField> {
    let m = Matrix::from_rows(&[vec![0.4, 0.3], vec![-0.1, 0.2]])?;
    Ok(BDTestField::closed(ClosedForm::affine(Vector::from_slice(&[1.0, -0.5]), m)?))
}

/// `(sin(2 x1) cos(x2), cos(x1 + x2 / 2))` with its strain in closed form.
pub fn trig() -> Result<BDTestField> {
    Ok(BDTestField::closed(ClosedForm::parse(
        2,
        &["sin(2*x1)*cos(x2)", "cos(x1 + 0.5*x2)"],
        Some(&["2*cos(2*x1)*cos(x2)", "-0.5*(sin(2*x1)*sin(x2) + sin(x1 + 0.5*x2))", "-0.5*sin(x1 + 0.5*x2)"]),
    )?))
}

/// `{x2 = level}` oriented by `e2`.
pub fn flat_interface(level: f64) -> Result<Arc<Interface>> {
    Ok(Arc::new(Interface::single(
        2,
        Arc::new(ExprGraph::constant(level, 1)),
        BoxWindow::from_bounds(&[(-1.0, 2.0)])?,
        true,
    )?))
}

/// `{x2 = 0.2 sin x1}` oriented upwards.
pub fn sine_interface() -> Result<Arc<Interface>> {
    let g = ExprGraph::parse("0.2*sin(x1)", Some(&["0.2*cos(x1)".to_string()]), 1)?;
    Ok(Arc::new(Interface::single(2, Arc::new(g), BoxWindow::from_bounds(&[(-1.0, 2.0)])?, true)?))
}

/// Constants `(0.3, 1)` above and `(-0.2, 0.4)` below `{x2 = level}`.
pub fn constant_jump(level: f64) -> Result<BDTestField> {
    BDTestField::piecewise(
        ClosedForm::constant(Vector::from_slice(&[0.3, 1.0])),
        ClosedForm::constant(Vector::from_slice(&[-0.2, 0.4])),
        flat_interface(level)?,
    )
}

/// Affine pieces sharing one gradient whose values differ by `(0, 0.2)`
/// across `interface`.
pub fn affine_jump(interface: Arc<Interface>) -> Result<BDTestField> {
    let m = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.2, 0.5]])?;
    BDTestField::piecewise(
        ClosedForm::affine(Vector::from_slice(&[1.0, 1.2]), m)?,
        ClosedForm::affine(Vector::from_slice(&[1.0, 1.0]), m)?,
        interface,
    )
}

pub fn polynomial_phi() -> Result<TestFunction> {
    TestFunction::expr(2, "1 + 0.5*x1 - 0.3*x2 + x1*x2", &["0.5 + x2", "-0.3 + x1"])
}

pub fn trig_phi() -> Result<TestFunction> {
    TestFunction::expr(2, "sin(x1 + 2*x2)", &["cos(x1 + 2*x2)", "2*cos(x1 + 2*x2)"])
}

/// `(1 - |x - c|^2 / R^2)_+^4`.
pub fn bump(c1: f64, c2: f64, radius: f64) -> Result<TestFunction> {
    TestFunction::bump(Vector::from_slice(&[c1, c2]), radius, 4)
}
