use bdtrace::fields::zoo::*;
use bdtrace::fields::{BDTestField, ClosedForm};
use bdtrace::geometry::BoxWindow;
use bdtrace::quadrature::QuadratureSpec;
use bdtrace::symcalc::{sym_outer, Vector};
use bdtrace::trace::TraceOptions;
use bdtrace::verify::*;
use proptest::prelude::*;

fn spec() -> QuadratureSpec {
    QuadratureSpec::new(6, 16, 1).unwrap()
}

#[test]
fn ibp_rigid_any_phi() {
    let opts = TraceOptions::default();
    for d in [unit_square().unwrap(), sine_domain().unwrap()] {
        for phi in [polynomial_phi().unwrap(), trig_phi().unwrap()] {
            let r = ibp_residual(&rigid().unwrap(), &d, &phi, &spec(), &opts).unwrap();
            assert!(r.residual.frobenius() <= 1e-6 * r.scale);
            assert_eq!(r.measure.total.frobenius(), 0.0);
        }
    }
}

#[test]
fn ibp_affine_polynomial_on_the_square_is_exact() {
    let r = ibp_residual(&affine().unwrap(), &unit_square().unwrap(), &polynomial_phi().unwrap(), &spec(), &TraceOptions::default())
        .unwrap();
    assert!(r.residual.frobenius() <= 1e-8, "{:?}", r.residual);
}

#[test]
fn ibp_jump_meeting_the_boundary() {
    let d = unit_square().unwrap();
    let reports = ibp_check(&constant_jump(0.5).unwrap(), &d, &polynomial_phi().unwrap(), &spec(), &TraceOptions::default(), 1e-5)
        .unwrap();
    assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    // only the jump part contributes: (c+ - c-) ⊙ e2 int_0^1 phi(x1, 1/2) dx1
    let r = ibp_residual(&constant_jump(0.5).unwrap(), &d, &polynomial_phi().unwrap(), &spec(), &TraceOptions::default())
        .unwrap();
    let surface = 1.0 + 0.25 - 0.15 + 0.25;
    let expect = sym_outer(&Vector::from_slice(&[0.5, 0.6]), &Vector::unit(2, 1)).unwrap() * surface;
    assert!((r.measure.jump_part - expect).frobenius() <= 1e-12);
}

#[test]
fn directional_ibp_examples() {
    let opts = TraceOptions::default();
    let d = unit_square().unwrap();
    let phi = bump(0.5, 1.0, 0.2).unwrap();
    let r = directional_ibp_residual(&trig().unwrap(), &d, &phi, &Vector::unit(2, 1), &spec(), &opts).unwrap();
    assert!(r.report(LIMIT_TOL, &opts).iter().all(|c| c.pass));
    assert!((r.residual_g - r.residual_gamma).abs() <= LIMIT_TOL * r.scale);

    let xi = Vector::from_slice(&[0.2, 1.0]).normalized().unwrap();
    let r = directional_ibp_residual(&affine_jump(flat_interface(0.9).unwrap()).unwrap(), &d, &phi, &xi, &spec(), &opts).unwrap();
    assert!(r.report(LIMIT_TOL, &opts).iter().all(|c| c.pass), "{r:?}");

    let z = directional_ibp_residual(&BDTestField::zero(2), &d, &phi, &xi, &spec(), &opts).unwrap();
    assert_eq!((z.residual_g, z.residual_gamma), (0.0, 0.0));
}

#[test]
fn trace_norm_of_zero_field_is_not_applicable() {
    let t = trace_norm_bound(&BDTestField::zero(2), &unit_square().unwrap(), &spec(), &TraceOptions::default()).unwrap();
    assert!(t.ratio().is_none());
    let rep = t.report();
    assert!(rep.pass);
    assert!(rep.metadata.iter().any(|(k, v)| k == "ratio" && v == "n/a"));
}

#[test]
fn trace_norm_of_constant_field_is_the_perimeter_ratio() {
    let u = BDTestField::closed(ClosedForm::constant(Vector::from_slice(&[0.6, -0.8])));
    let t = trace_norm_bound(&u, &unit_square().unwrap(), &spec(), &TraceOptions::default()).unwrap();
    let (_, lhs, bd) = *t.levels.last().unwrap();
    assert!((lhs - 4.0).abs() <= 1e-10 && (bd - 1.0).abs() <= 1e-12);
    assert!((t.ratio().unwrap() - 4.0).abs() <= 1e-10);
    assert!(t.report().pass);
}

#[test]
fn trace_norm_ratio_is_stable_for_the_zoo() {
    let opts = TraceOptions::default();
    for d in [unit_square().unwrap(), sine_domain().unwrap()] {
        for u in [affine().unwrap(), trig().unwrap(), constant_jump(-0.5).unwrap()] {
            let t = trace_norm_bound(&u, &d, &QuadratureSpec::new(4, 8, 1).unwrap(), &opts).unwrap();
            assert!(t.report().pass, "{t:?}");
        }
    }
}

#[test]
fn strict_convergence_of_a_constant_field_is_trivial() {
    let u = BDTestField::closed(ClosedForm::constant(Vector::from_slice(&[1.0, 2.0])));
    let s = strict_convergence_experiment(&u, &unit_square().unwrap(), &[0.1, 0.05], &QuadratureSpec::new(4, 8, 1).unwrap(), &TraceOptions::default())
        .unwrap();
    for row in &s.rows {
        assert!(row.l1 <= 1e-12 && row.variation_gap <= 1e-12 && row.trace_gap <= 1e-10, "{row:?}");
    }
    assert!(s.report(QUADRATURE_TOL).iter().all(|c| c.pass));
}

#[test]
fn strict_convergence_recovers_the_jump_variation() {
    let pad = BoxWindow::from_bounds(&[(-0.25, 1.25), (-0.25, 1.25)]).unwrap();
    let u = affine_jump(flat_interface(0.5).unwrap()).unwrap().with_domain(pad).unwrap();
    let s = strict_convergence_experiment(&u, &unit_square().unwrap(), &[0.04, 0.02], &QuadratureSpec::new(4, 16, 1).unwrap(), &TraceOptions::default())
        .unwrap();
    // e = diag(0.1, 0.5); |Eu|(Omega) = |e| + |(0, 0.2) ⊙ e2|
    let e = 0.1f64.hypot(0.5);
    assert!((s.variation - (e + 0.2)).abs() <= 1e-10, "{}", s.variation);
    assert!(s.report(2e-3).iter().all(|c| c.pass), "{:?}", s.report(2e-3));
}

#[test]
fn jump_reconstruction_examples() {
    let half = HalfBallOptions::default();
    let d = unit_square().unwrap();
    let phi = bump(0.5, 0.5, 0.3).unwrap();

    let r = jump_reconstruction_check(&trig().unwrap(), &d, &phi, &spec(), &half).unwrap();
    assert!(r.a.frobenius() <= LIMIT_TOL * r.scale && r.b.frobenius() == 0.0);

    let r = jump_reconstruction_check(&constant_jump(0.5).unwrap(), &d, &phi, &spec(), &half).unwrap();
    let expect = sym_outer(&Vector::from_slice(&[0.5, 0.6]), &Vector::unit(2, 1)).unwrap() * (256.0 * 0.3 / 315.0);
    assert!((r.a - expect).frobenius() <= 1e-10 && (r.b - expect).frobenius() <= 1e-8);
    assert!(r.report(LIMIT_TOL).iter().all(|c| c.pass));

    let r = jump_reconstruction_check(
        &affine_jump(sine_interface().unwrap()).unwrap(),
        &centered_square().unwrap(),
        &bump(0.5, 0.1, 0.35).unwrap(),
        &spec(),
        &half,
    )
    .unwrap();
    assert!((r.a - r.b).frobenius() <= 1e-4 * r.scale);
    assert_eq!(r.flip_swaps, Some(true));
}

proptest! {
    #[test]
    fn report_passes_iff_residual_within_tolerance(residual in prop_oneof![0.0f64..2.0, Just(f64::INFINITY), Just(f64::NAN)], tol in 0.0f64..2.0) {
        let r = CheckReport::new("x", residual, tol);
        prop_assert_eq!(r.pass, residual <= tol);
    }
}
