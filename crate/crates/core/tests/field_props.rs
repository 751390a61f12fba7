use bdtrace::fields::zoo::{self, bump, constant_jump, flat_interface, sine_interface};
use bdtrace::fields::{distributional_strain, fd_strain, strain_measure, BDTestField, ClosedForm, TestFunction};
use bdtrace::geometry::Domain;
use bdtrace::quadrature::QuadratureSpec;
use bdtrace::symcalc::{SkewTensor, Vector};
use proptest::prelude::*;

fn spec() -> QuadratureSpec {
    QuadratureSpec::new(6, 16, 1).unwrap()
}

fn smooth_fields() -> Vec<ClosedForm> {
    vec![
        ClosedForm::parse(
            2,
            &["sin(2*x1)*cos(x2)", "cos(x1 + 0.5*x2)"],
            Some(&["2*cos(2*x1)*cos(x2)", "-0.5*(sin(2*x1)*sin(x2) + sin(x1 + 0.5*x2))", "-0.5*sin(x1 + 0.5*x2)"]),
        )
        .unwrap(),
        ClosedForm::parse(2, &["x1^2*x2", "exp(x1 - x2)"], Some(&["2*x1*x2", "0.5*(x1^2 + exp(x1 - x2))", "-exp(x1 - x2)"]))
            .unwrap(),
        ClosedForm::parse(
            3,
            &["x2*x3", "sin(x1)", "x1*x2*x3"],
            Some(&["0", "0.5*(x3 + cos(x1))", "0.5*(x2 + x2*x3)", "0", "0.5*x1*x3", "x1*x2"]),
        )
        .unwrap(),
    ]
}

fn test_functions() -> Vec<TestFunction> {
    vec![
        bump(0.5, 0.5, 0.3).unwrap(),
        bump(0.35, 0.6, 0.25).unwrap(),
        TestFunction::bump(Vector::from_slice(&[0.55, 0.45]), 0.4, 3).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_strain_matches_differences(k in 0usize..3, c in proptest::collection::vec(0.05f64..0.95, 3)) {
        let f = &smooth_fields()[k];
        let x = Vector::from_slice(&c[..f.dim()]);
        let exact = f.strain(&x).unwrap();
        let fd = fd_strain(&|y| f.eval(y), &x);
        prop_assert!((exact - fd).frobenius() <= 1e-6 * (1.0 + exact.frobenius()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rigid_motions_have_no_distributional_strain(
        b in proptest::collection::vec(-2.0f64..2.0, 2),
        w in -3.0f64..3.0,
    ) {
        let d = Domain::unit_box(2).unwrap();
        let u = BDTestField::closed(ClosedForm::rigid(Vector::from_slice(&b), SkewTensor::new(2, &[w]).unwrap()).unwrap());
        for phi in test_functions() {
            let scale = phi.c1_norm(&d.bounding_box());
            let s = distributional_strain(&u, &phi, &d, &spec()).unwrap().frobenius();
            prop_assert!(s <= 1e-10 * scale, "{s:e}");
        }
    }

    #[test]
    fn measure_matches_distributional_strain(
        cx in 0.35f64..0.65,
        cy in 0.35f64..0.65,
        r in 0.1f64..0.3,
        curved in any::<bool>(),
    ) {
        let (d, u) = if curved {
            (zoo::centered_square().unwrap(), zoo::affine_jump(sine_interface().unwrap()).unwrap())
        } else {
            (Domain::unit_box(2).unwrap(), zoo::affine_jump(flat_interface(0.5).unwrap()).unwrap())
        };
        let cy = if curved { cy - 0.5 } else { cy };
        let phi = bump(cx, cy, r).unwrap();
        let m = strain_measure(&u, &phi, &d, &spec()).unwrap();
        let ds = distributional_strain(&u, &phi, &d, &spec()).unwrap();
        prop_assert!((m.total - ds).frobenius() <= 1e-6 * ds.frobenius().max(1e-12), "{:?} vs {:?}", m.total, ds);
    }
}

#[test]
fn constant_jump_measure_is_jump_times_surface_integral() {
    let d = Domain::unit_box(2).unwrap();
    let u = constant_jump(0.5).unwrap();
    let phi = bump(0.5, 0.5, 0.3).unwrap();
    let m = strain_measure(&u, &phi, &d, &spec()).unwrap();
    // int_{-R}^{R} (1 - s^2/R^2)^4 ds = 256 R / 315
    let surface = 256.0 * 0.3 / 315.0;
    let jump = Vector::from_slice(&[0.5, 0.6]);
    let expect = bdtrace::symcalc::sym_outer(&jump, &Vector::unit(2, 1)).unwrap() * surface;
    assert!((m.jump_part - expect).frobenius() < 1e-13);
    assert_eq!(m.ac_part.frobenius(), 0.0);
}

#[test]
fn mollified_fields_are_smooth_and_close() {
    let u = zoo::affine_jump(flat_interface(0.5).unwrap()).unwrap();
    let ur = u.mollify(0.05).unwrap();
    // far from the interface mollification reproduces the affine pieces
    for x in [[0.3, 0.2], [0.7, 0.8]] {
        let x = Vector::from_slice(&x);
        assert!((ur.eval(&x).unwrap() - u.eval(&x).unwrap()).norm() < 1e-13);
    }
    // on the interface the value is the average of the two sides
    let x = Vector::from_slice(&[0.4, 0.5]);
    let mid = (u.eval_side(&x, bdtrace::fields::Side::Plus).unwrap() + u.eval_side(&x, bdtrace::fields::Side::Minus).unwrap()) * 0.5;
    assert!((ur.eval(&x).unwrap() - mid).norm() < 1e-12);
}
