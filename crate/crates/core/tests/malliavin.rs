use lcop_core::malliavin::{malliavin_classify, truncated_abs_moment, MalliavinVerdict, TRUNCATION_LEVELS};
use lcop_core::models::LevyModel;

#[test]
fn verdict_matrix() {
    let cases = [
        (LevyModel::brownian(0.0, 0.2), MalliavinVerdict::NotDifferentiable),
        (LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap(), MalliavinVerdict::NotDifferentiable),
        (LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.0).unwrap(), MalliavinVerdict::Differentiable),
        (LevyModel::variance_gamma(1.0, 5.0, 8.0, 0.0).unwrap(), MalliavinVerdict::Differentiable),
        (LevyModel::nig(5.0, -1.0, 1.0, 0.0).unwrap(), MalliavinVerdict::NotDifferentiable),
    ];
    for (model, expected) in cases {
        let r = malliavin_classify(&model).unwrap();
        assert_eq!(r.verdict, expected, "{}: {}", model.label(), r.reason);
        assert_eq!(r.truncated.len(), TRUNCATION_LEVELS.len());
    }
}

#[test]
fn brownian_has_no_truncated_moment() {
    let r = malliavin_classify(&LevyModel::brownian(0.0, 0.2)).unwrap();
    assert!(r.truncated.iter().all(|t| t.value == 0.0));
    assert_eq!(r.ratio, 1.0);
}

#[test]
fn truncated_moments_grow_as_the_cutoff_shrinks() {
    for model in [
        LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.0).unwrap(),
        LevyModel::variance_gamma(1.0, 5.0, 8.0, 0.0).unwrap(),
        LevyModel::nig(5.0, -1.0, 1.0, 0.0).unwrap(),
    ] {
        let r = malliavin_classify(&model).unwrap();
        assert!(r.truncated.windows(2).all(|w| w[1].value >= w[0].value), "{}", model.label());
    }
}

#[test]
fn variance_gamma_matches_closed_form() {
    let (c, g, m) = (1.3, 5.0, 8.0);
    let model = LevyModel::variance_gamma(c, g, m, 0.0).unwrap();
    // |x| nu(dx) = c e^{-M x} dx on x > 0 and c e^{G x} dx on x < 0
    let exact = |eps: f64| c * ((-m * eps).exp() - (-m).exp()) / m + c * ((-g * eps).exp() - (-g).exp()) / g;
    for eps in TRUNCATION_LEVELS {
        let v = truncated_abs_moment(&model, eps).unwrap();
        assert!((v - exact(eps)).abs() < 1e-10, "eps={eps}: {v} vs {}", exact(eps));
    }
}

#[test]
fn variance_gamma_decade_gaps_shrink() {
    let r = malliavin_classify(&LevyModel::variance_gamma(1.0, 5.0, 8.0, 0.0).unwrap()).unwrap();
    let gaps: Vec<f64> = r.truncated.windows(2).map(|w| w[1].value - w[0].value).collect();
    for w in gaps.windows(2) {
        assert!(w[1] * 5.0 <= w[0], "{gaps:?}");
    }
}

#[test]
fn nig_grows_logarithmically() {
    let delta = 1.0;
    let r = malliavin_classify(&LevyModel::nig(5.0, -1.0, delta, 0.0).unwrap()).unwrap();
    // nu(dx) ~ delta / (pi x^2) near zero, so each decade adds about 2 delta ln(10) / pi
    let per_decade = 2.0 * delta * 10f64.ln() / std::f64::consts::PI;
    let n = r.truncated.len();
    let last = r.truncated[n - 1].value - r.truncated[n - 2].value;
    assert!((last - per_decade).abs() < 1e-2 * per_decade, "{last} vs {per_decade}");
    assert!(r.ratio > 10.0, "{}", r.ratio);
}
