use crate::error::{Error, Result};
use crate::fields::{BDTestField, TestFunction};
use crate::geometry::{Domain, Frame};
use crate::quadrature::{volume_level, ColumnSplit, Height, QuadValue, QuadratureSpec, VolumeRegion};
use crate::symcalc::{sym_outer, SymTensor, Vector};

/// The action `int phi dEu` split into its absolutely continuous and jump
/// parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureValue {
    pub ac_part: SymTensor,
    pub jump_part: SymTensor,
    pub total: SymTensor,
}

impl MeasureValue {
    pub fn new(ac_part: SymTensor, jump_part: SymTensor) -> Self {
        Self { ac_part, jump_part, total: ac_part + jump_part }
    }
}

/// `{x : x' in base, bottom < x_n < T(x')}` as a quadrature region.
pub fn domain_region(domain: &Domain) -> VolumeRegion<'_> {
    VolumeRegion {
        frame: Frame::identity(domain.dim()),
        base: *domain.base(),
        lower: Height::Const(domain.bottom()),
        upper: Height::Graph(domain.top()),
        base_breaks: vec![Vec::new(); domain.dim() - 1],
    }
}

/// Base cells graded geometrically towards the edges of `supp phi`, where
/// chord integrals of the bump lose smoothness.
pub(crate) fn support_breaks(phi: &TestFunction, dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); dim];
    if let Some((c, r)) = phi.support() {
        for (k, b) in out.iter_mut().enumerate() {
            b.extend([c[k] - r, c[k] + r]);
            for j in 1..=SUPPORT_GRADING {
                let d = r * 0.5f64.powi(j as i32);
                b.extend([c[k] - r + d, c[k] + r - d]);
            }
        }
    }
    out
}

const SUPPORT_GRADING: usize = 10;

fn region_for<'a>(domain: &'a Domain, phi: &TestFunction) -> VolumeRegion<'a> {
    let mut region = domain_region(domain);
    region.base_breaks = support_breaks(phi, domain.dim() - 1);
    region
}

fn splitters<'a>(field: &'a BDTestField, phi: &'a TestFunction) -> Vec<&'a dyn ColumnSplit> {
    let mut out: Vec<&dyn ColumnSplit> = vec![phi];
    if let Some(i) = field.interface() {
        out.push(i.as_ref());
    }
    out
}

fn check_support(phi: &TestFunction, domain: &Domain) -> Result<()> {
    let sup = phi.sup_norms(&domain.bounding_box()).0;
    let per_axis = if domain.dim() == 2 { 257 } else { 33 };
    for p in domain.boundary_samples(per_axis) {
        if phi.value(&p).abs() > 1e-12 * sup.max(f64::MIN_POSITIVE) {
            return Err(Error::SupportLeakage(p.as_slice().to_vec()));
        }
    }
    Ok(())
}

/// `-int_Omega u ⊙ grad phi dx` at the single resolution `spec.cells_per_axis`.
pub fn distributional_strain(
    field: &BDTestField,
    phi: &TestFunction,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Result<SymTensor> {
    spec.validate()?;
    check_support(phi, domain)?;
    let f = |x: &Vector| -> Result<SymTensor> {
        let u = field.eval_ae(x)?;
        Ok(sym_outer(&u, &phi.gradient(x))?)
    };
    let region = region_for(domain, phi);
    let v = volume_level(&f, &region, spec, &splitters(field, phi), SymTensor::zeros(domain.dim()))?;
    Ok(-v)
}

/// `int_Omega phi dEu` from the declared strain `e` and jump data, at the
/// single resolution `spec.cells_per_axis`.
pub fn strain_measure(
    field: &BDTestField,
    phi: &TestFunction,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Result<MeasureValue> {
    spec.validate()?;
    let n = domain.dim();
    let f = |x: &Vector| -> Result<SymTensor> { Ok(field.strain_ac_ae(x)? * phi.value(x)) };
    let region = region_for(domain, phi);
    let ac = volume_level(&f, &region, spec, &splitters(field, phi), SymTensor::zeros(n))?;
    let mut jump = SymTensor::zeros(n);
    if let Some(iface) = field.interface() {
        let inside = |x: &Vector| domain.contains(x);
        for (_, node) in iface.nodes(spec.cells_per_axis, spec.order, &inside, phi.support()) {
            let v = phi.value(&node.point);
            if v == 0.0 {
                continue;
            }
            let j = field.jump(&node.point)?;
            jump.axpy(node.weight * v, &sym_outer(&j, &node.normal)?);
        }
    }
    Ok(MeasureValue::new(ac, jump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ClosedForm, Interface};
    use crate::geometry::{BoxWindow, ExprGraph};
    use crate::symcalc::{Matrix, SkewTensor};
    use std::sync::Arc;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::new(6, 16, 1).unwrap()
    }

    #[test]
    fn rigid_motion_has_no_strain() {
        let d = Domain::unit_box(2).unwrap();
        let u = BDTestField::closed(ClosedForm::rigid(Vector::from_slice(&[1.0, 2.0]), SkewTensor::new(2, &[0.7]).unwrap()).unwrap());
        let phi = TestFunction::bump(Vector::from_slice(&[0.5, 0.5]), 0.3, 4).unwrap();
        let v = distributional_strain(&u, &phi, &d, &spec()).unwrap().frobenius();
        assert!(v < 1e-13, "{v:e}");
    }

    #[test]
    fn affine_strain_times_mass() {
        let d = Domain::unit_box(2).unwrap();
        let m = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.4, 0.5]]).unwrap();
        let u = BDTestField::closed(ClosedForm::affine(Vector::zeros(2), m).unwrap());
        let phi = TestFunction::bump(Vector::from_slice(&[0.5, 0.5]), 0.3, 4).unwrap();
        // int (1 - r^2/R^2)^4 over the disc = pi R^2 / 5
        let mass = std::f64::consts::PI * 0.09 / 5.0;
        let ds = distributional_strain(&u, &phi, &d, &spec()).unwrap();
        let e = (ds - m.sym_part() * mass).frobenius();
        assert!(e < 1e-13, "{e:e}");
    }

    #[test]
    fn jump_measure_on_unit_segment() {
        let d = Domain::unit_box(2).unwrap();
        let iface = Interface::single(
            2,
            Arc::new(ExprGraph::constant(0.5, 1)),
            BoxWindow::from_bounds(&[(-1.0, 2.0)]).unwrap(),
            true,
        )
        .unwrap();
        let (cp, cm) = (Vector::from_slice(&[1.0, 0.5]), Vector::from_slice(&[0.0, -0.5]));
        let u = BDTestField::piecewise(ClosedForm::constant(cp), ClosedForm::constant(cm), Arc::new(iface)).unwrap();
        let one = TestFunction::expr(2, "1", &["0", "0"]).unwrap();
        let mv = strain_measure(&u, &one, &d, &spec()).unwrap();
        let expect = sym_outer(&(cp - cm), &Vector::unit(2, 1)).unwrap();
        assert!((mv.jump_part - expect).frobenius() < 1e-14);
        assert_eq!(mv.ac_part, SymTensor::zeros(2));

        let phi = TestFunction::bump(Vector::from_slice(&[0.4, 0.55]), 0.3, 4).unwrap();
        let mv = strain_measure(&u, &phi, &d, &spec()).unwrap();
        let ds = distributional_strain(&u, &phi, &d, &spec()).unwrap();
        let e = (mv.total - ds).frobenius();
        assert!(e < 1e-10 * ds.frobenius(), "{e:e}");
        assert!(matches!(distributional_strain(&u, &one, &d, &spec()), Err(Error::SupportLeakage(_))));
    }
}
