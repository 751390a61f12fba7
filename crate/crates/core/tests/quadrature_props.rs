use bdtrace::quadrature::{composite_rule, limit_extrapolate, refine, true_intervals, GaussLegendre, QuadratureSpec};
use proptest::prelude::*;

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_integral(c: &[f64], a: f64, b: f64) -> f64 {
    c.iter().enumerate().map(|(k, ck)| ck * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gauss_is_exact_to_degree_2n_minus_1(n in 1usize..12, c in proptest::collection::vec(-1.0f64..1.0, 24)) {
        let g = GaussLegendre::new(n);
        let c = &c[..2 * n];
        let q: f64 = g.nodes().iter().zip(g.weights()).map(|(x, w)| w * poly(c, *x)).sum();
        let exact = poly_integral(c, -1.0, 1.0);
        prop_assert!((q - exact).abs() <= 1e-13 * (1.0 + c.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn composite_rule_with_breaks_integrates_piecewise_polynomials(
        cells in 1usize..20,
        b in 0.05f64..0.95,
        left in proptest::collection::vec(-1.0f64..1.0, 6),
        right in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let rule = composite_rule(0.0, 1.0, cells, &[b], 3);
        let q: f64 = rule.iter().map(|(x, w)| w * if *x < b { poly(&left, *x) } else { poly(&right, *x) }).sum();
        let exact = poly_integral(&left, 0.0, b) + poly_integral(&right, b, 1.0);
        prop_assert!((q - exact).abs() <= 1e-13);
    }

    #[test]
    fn extrapolation_recovers_power_law_limits(
        v in -5.0f64..5.0,
        c in 0.1f64..2.0,
        p in 0.5f64..3.0,
    ) {
        let samples: Vec<(f64, f64)> = (0..8).map(|j| {
            let h = 0.1 * 0.5f64.powi(j);
            (h, v + c * h.powf(p))
        }).collect();
        let tail = c * samples[7].0.powf(p);
        let est = limit_extrapolate(&samples, 2.0 * tail).unwrap();
        prop_assert!(est.converged);
        prop_assert!((est.residual - tail).abs() <= 1e-8);
        prop_assert!((est.value - v).abs() <= 1e-8 * (1.0 + v.abs()));
        prop_assert!((est.rate - p).abs() <= 1e-4);
    }

    #[test]
    fn true_intervals_locate_sign_changes(a in 0.05f64..0.45, b in 0.55f64..0.95) {
        let iv = true_intervals(&|x| x > a && x < b, 0.0, 1.0, 64);
        prop_assert_eq!(iv.len(), 1);
        prop_assert!((iv[0].0 - a).abs() < 1e-12 && (iv[0].1 - b).abs() < 1e-12);
    }
}

#[test]
fn oscillating_sequences_do_not_converge() {
    let samples: Vec<(f64, f64)> = (0..8).map(|j| (0.5f64.powi(j), if j % 2 == 0 { 1.0 } else { -1.0 })).collect();
    let est = limit_extrapolate(&samples, 1e-6).unwrap();
    assert!(!est.converged);
}

#[test]
fn refinement_error_shrinks_for_smooth_integrands() {
    let spec = QuadratureSpec::new(2, 4, 4).unwrap();
    let r = refine(&spec, |s| {
        Ok(composite_rule(0.0, 1.0, s.cells_per_axis, &[], s.order).iter().map(|(x, w)| w * (5.0 * x).sin()).sum::<f64>())
    })
    .unwrap();
    let exact = (1.0 - 5f64.cos()) / 5.0;
    let errs: Vec<f64> = r.levels.iter().map(|(_, v)| (v - exact).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(r.error_estimate < 1e-4);
}
