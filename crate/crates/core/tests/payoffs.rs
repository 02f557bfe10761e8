use lcop_core::fourier::exp_indicator_value;
use lcop_core::models::LevyModel;
use lcop_core::payoffs::{
    check_assumption2, damped_bound, derivative_transform, digital_transform, sqrt_part_closed_form,
    sqrt_parts_transform, CustomPayoff, Part, PayoffDecomposition,
};
use lcop_core::quadrature::{self, Tolerance};
use lcop_core::{DampedPayoff, PayoffKind, QuadratureGrid};
use num_complex::Complex64;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::Arc;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `int_{c-x}^inf e^{izy} dy` by quadrature.
fn digital_by_quadrature(level: f64, x: f64, z: Complex64) -> Complex64 {
    let tol = Tolerance::new(1e-14, 1e-12);
    quadrature::adaptive_semi_infinite(|y: f64| (Complex64::i() * z * y).exp(), level - x, true, tol).unwrap().value
}

#[test]
fn digital_reference_values() {
    assert!((digital_transform(0.0, 0.0, c(0.0, 1.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    let z = c(0.0, 2.0);
    let got = digital_transform(1.0, 1.0, z).unwrap();
    assert!((got - c(0.5, 0.0)).norm() < 1e-15);
    assert!((got - digital_by_quadrature(1.0, 1.0, z)).norm() < 1e-8);
    assert!(digital_transform(0.0, 0.0, c(1.0, 0.0)).is_err());
    assert!(digital_transform(0.0, 0.0, c(1.0, -0.5)).is_err());
}

#[test]
fn digital_matches_quadrature_off_axis() {
    for (level, x, z) in [(0.3, -0.2, c(2.0, 1.0)), (-1.0, 0.5, c(-7.0, 0.4)), (0.0, 0.0, c(0.5, 3.0))] {
        let got = digital_transform(level, x, z).unwrap();
        assert!((got - digital_by_quadrature(level, x, z)).norm() <= 1e-8 * got.norm());
    }
}

#[test]
fn sqrt_plus_is_a_gamma_integral() {
    let g = sqrt_parts_transform(Part::Plus, 0.0, c(0.0, 1.0)).unwrap();
    let expected = std::f64::consts::PI.sqrt() / 2.0;
    assert!((g - c(expected, 0.0)).norm() < 1e-12);
    assert!((expected - 0.886_226_925_452_758).abs() < 1e-15);
    // the closed form covers the rest of the half plane
    for z in [c(3.0, 0.5), c(-20.0, 2.0), c(0.1, 0.01)] {
        let num = sqrt_parts_transform(Part::Plus, 0.0, z).unwrap();
        let cf = sqrt_part_closed_form(Part::Plus, z);
        assert!((num - cf).norm() <= 1e-10 * cf.norm(), "{z}");
        let num = sqrt_parts_transform(Part::Minus, 0.0, z.conj()).unwrap();
        let cf = sqrt_part_closed_form(Part::Minus, z.conj());
        assert!((num - cf).norm() <= 1e-10 * cf.norm(), "{z}");
    }
    assert!(sqrt_parts_transform(Part::Plus, 0.0, c(1.0, -1.0)).is_err());
    assert!(sqrt_parts_transform(Part::Minus, 0.0, c(1.0, 1.0)).is_err());
}

#[test]
fn decomposition_reproduces_sqrt_abs() {
    let target = DampedPayoff::new(PayoffKind::SqrtAbs, 1.0);
    let parts = PayoffDecomposition::expand(&target);
    assert_eq!(parts.parts.len(), 2);
    for k in 0..1000 {
        let x = -50.0 + 100.0 * k as f64 / 999.0;
        assert_eq!(parts.value(x), x.abs().sqrt());
    }
}

#[test]
fn damped_boundedness_on_wide_grid() {
    for p in [
        DampedPayoff::digital(0.0, 1.0),
        DampedPayoff::digital(0.7, 0.3),
        DampedPayoff::new(PayoffKind::SqrtAbsPlus, 1.0),
        DampedPayoff::new(PayoffKind::SqrtAbsMinus, -1.0),
    ] {
        let bound = damped_bound(&p, 1e4, 4000).unwrap();
        assert!(bound.is_finite() && bound > 0.0, "{:?}", p.kind);
        // the digital has |z g(0, -iz)| = e^{-alpha c} exactly
        if let PayoffKind::Digital { c } = p.kind {
            assert!((bound - (-p.alpha * c).exp()).abs() < 1e-12);
        }
    }
}

#[test]
fn assumption2_verdicts() {
    let m = LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap();
    for alpha in [0.1, 1.0, 3.0] {
        assert!(check_assumption2(&DampedPayoff::digital(0.4, alpha), &m).holds);
        assert!(!check_assumption2(&DampedPayoff::new(PayoffKind::SqrtAbs, alpha), &m).holds);
    }
    assert!(check_assumption2(&DampedPayoff::new(PayoffKind::Constant(0.0), 1.0), &m).holds);
    assert!(check_assumption2(&DampedPayoff::new(PayoffKind::Polynomial(vec![0.0, 0.0]), 1.0), &m).holds);
    assert!(check_assumption2(&DampedPayoff::new(PayoffKind::SqrtAbsPlus, 1.0), &m).holds);
    let custom = CustomPayoff {
        name: "tent".into(),
        f: Arc::new(|x: f64| (1.0 - x.abs()).max(0.0)),
        transform: None,
        breakpoints: vec![-1.0, 0.0, 1.0],
    };
    let r = check_assumption2(&DampedPayoff::new(PayoffKind::Custom(custom), 0.5), &m);
    assert!(r.holds);
    let l1 = r.damped_l1.unwrap();
    // int (1 - |x|) e^{-x/2} dx over [-1, 1]
    let exact = 4.0 * ((0.5f64).exp() + (-0.5f64).exp() - 2.0) / 0.25 / 4.0;
    assert!((l1 - exact).abs() < 1e-7, "{l1} vs {exact}");
}

#[test]
fn custom_numeric_transform_agrees_with_closed_form() {
    let custom = CustomPayoff {
        name: "digital".into(),
        f: Arc::new(|x: f64| if x >= 0.2 { 1.0 } else { 0.0 }),
        transform: None,
        breakpoints: vec![0.2],
    };
    let p = DampedPayoff::new(PayoffKind::Custom(custom), 1.0);
    for z in [c(0.0, 1.0), c(2.5, 1.0), c(-6.0, 1.0)] {
        let got = p.transform0(z).unwrap();
        let exact = digital_transform(0.2, 0.0, z).unwrap();
        assert!((got - exact).norm() <= 1e-6 * exact.norm().max(1.0), "{z}: {got} vs {exact}");
    }
}

#[test]
fn exp_indicator_matches_lognormal_partial_expectation() {
    let (mu, s): (f64, f64) = (0.05, 0.3);
    let m = LevyModel::brownian(mu, s);
    let grid = QuadratureGrid::default();
    let n = Normal::new(0.0, 1.0).unwrap();
    for (t, x) in [(0.0, 0.0), (0.5, -0.3), (0.8, 0.4)] {
        let tau: f64 = 1.0 - t;
        let sd = s * tau.sqrt();
        let closed = (x + mu * tau + 0.5 * sd * sd).exp() * n.cdf((x + mu * tau + sd * sd) / sd);
        let (f, _) = exp_indicator_value(&m, &grid, t, x, 1.0).unwrap();
        assert!((f - closed).abs() < 1e-9, "t={t} x={x}: {f} vs {closed}");
    }
    let (far, _) = exp_indicator_value(&m, &grid, 0.0, -25.0, 1.0).unwrap();
    assert!(far.abs() < 1e-12);
}

#[test]
fn exp_indicator_derivative_identity() {
    let m = LevyModel::nig(10.0, 1.0, 1.0, 0.0).unwrap();
    let grid = QuadratureGrid::default();
    for (t, x) in [(0.0, 0.1), (0.5, -0.2)] {
        let h = 1e-4;
        let (_, dfdx) = exp_indicator_value(&m, &grid, t, x, 1.0).unwrap();
        let (fp, _) = exp_indicator_value(&m, &grid, t, x + h, 1.0).unwrap();
        let (fm, _) = exp_indicator_value(&m, &grid, t, x - h, 1.0).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        assert!((dfdx - fd).abs() <= 1e-5 * fd.abs(), "{dfdx} vs {fd}");
    }
}

fn transform_kinds() -> Vec<DampedPayoff> {
    vec![
        DampedPayoff::digital(0.3, 1.0),
        DampedPayoff::new(PayoffKind::ExpIndicator, 2.0),
        DampedPayoff::new(PayoffKind::SqrtAbsPlus, 1.0),
        DampedPayoff::new(PayoffKind::SqrtAbsMinus, -1.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn translation_identity(idx in 0usize..4, x in -3.0f64..3.0, v in -40.0f64..40.0) {
        let p = &transform_kinds()[idx];
        let z = c(v, p.alpha);
        let shifted = p.transform(x, z).unwrap();
        let expected = (-Complex64::i() * z * x).exp() * p.transform0(z).unwrap();
        prop_assert!((shifted - expected).norm() <= 1e-10 * expected.norm());
        if let PayoffKind::Digital { c: level } = p.kind {
            let direct = digital_transform(level, x, z).unwrap();
            prop_assert!((shifted - direct).norm() <= 1e-10 * direct.norm());
        }
    }

    #[test]
    fn derivative_transform_identity(plus in any::<bool>(), x in -3.0f64..3.0, v in -40.0f64..40.0, a in 0.1f64..3.0) {
        let (part, z) = if plus { (Part::Plus, c(v, a)) } else { (Part::Minus, c(v, -a)) };
        let g = sqrt_parts_transform(part, x, z).unwrap();
        let d = derivative_transform(part, x, z).unwrap();
        prop_assert!((d - (-Complex64::i() * z * g)).norm() <= 1e-10 * d.norm().max(1e-300));
    }
}
