use lcop_core::fourier::density;
use lcop_core::models::LevyModel;
use lcop_core::representation::{
    build_integrands, default_state_range, polynomial_conditional, polynomial_integrands_mc, raw_moments,
    replicate_on_path, replication_study, scheme_epsilon, step_times, IntegrandRoute, ReplicationPlan,
};
use lcop_core::simulator::{SimulationLaw, Simulator, DEFAULT_EPSILON_JUMP};
use lcop_core::{DampedPayoff, PayoffKind, QuadratureGrid};
use proptest::prelude::*;

fn merton() -> LevyModel {
    LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap()
}

#[test]
fn constant_payoff_has_no_integrands() {
    let model = merton();
    let payoff = DampedPayoff::new(PayoffKind::Constant(3.0), 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    assert_eq!(it.mean, 3.0);
    for (s, x) in [(0.0, 0.0), (0.5, -1.0), (0.9, 2.0)] {
        assert_eq!(it.u(s, x).unwrap(), 0.0);
        assert_eq!(it.theta(s, x, 0.3).unwrap(), 0.0);
    }
}

#[test]
fn pure_jump_model_has_no_diffusion_integrand() {
    let model = LevyModel::nig(3.0, -1.0, 1.0, 0.1).unwrap();
    let payoff = DampedPayoff::digital(0.0, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    for x in [-0.5, 0.0, 0.5] {
        assert_eq!(it.u(0.3, x).unwrap(), 0.0);
        assert_eq!(it.theta(0.3, x, 0.0).unwrap(), 0.0);
    }
}

#[test]
fn digital_diffusion_integrand_is_scaled_density() {
    let model = merton();
    let c = 0.15;
    let payoff = DampedPayoff::digital(c, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    for (s, x) in [(0.0, 0.0), (0.4, 0.3), (0.8, -0.2)] {
        let p = density(&model, &grid, s, 1.0, c - x).unwrap().value;
        assert!((it.u(s, x).unwrap() - model.sigma * p).abs() < 1e-7);
    }
}

#[test]
fn theta_is_lipschitz_near_zero_jump() {
    let model = merton();
    let payoff = DampedPayoff::digital(0.0, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    let (s, x) = (0.3, 0.4);
    let slope = it.u(s, x).unwrap() / model.sigma;
    for y in [1e-2, 1e-3, 1e-4, 1e-5] {
        let th = it.theta(s, x, y).unwrap();
        assert!(th.abs() <= 1.1 * slope.abs() * y, "y={y}: {th}");
        assert!((th / y - slope).abs() < 5.0 * y * slope.abs().max(1.0));
    }
}

#[test]
fn deterministic_path_replicates_to_the_mean() {
    let model = LevyModel::brownian(0.2, 0.0);
    let payoff = DampedPayoff::digital(0.1, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    assert_eq!(it.mean, 1.0);
    let sim = Simulator::new(SimulationLaw::physical(&model), 1.0, 20, 3, DEFAULT_EPSILON_JUMP).unwrap();
    let path = sim.path(0);
    assert_eq!(replicate_on_path(&it, &path, 0.0).unwrap(), 1.0);
}

#[test]
fn raw_moments_of_a_gaussian() {
    let (m, v) = (0.3, 0.5);
    let r = raw_moments([m, v, 0.0, 0.0]);
    let expected = [1.0, m, m * m + v, m.powi(3) + 3.0 * m * v, m.powi(4) + 6.0 * m * m * v + 3.0 * v * v];
    for (a, b) in r.iter().zip(expected) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn polynomial_route_agrees_with_monte_carlo() {
    let model = merton();
    let coeffs = vec![0.5, -1.0, 0.3, 0.2];
    let payoff = DampedPayoff::new(PayoffKind::Polynomial(coeffs.clone()), 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    assert_eq!(it.route, IntegrandRoute::Moments);
    for (k, (s, x, y)) in [(0.0, 0.0, 0.2), (0.5, 0.4, -0.3)].into_iter().enumerate() {
        let ((u, u_se), (th, th_se)) =
            polynomial_integrands_mc(&coeffs, &model, 1.0 - s, x, y, 400_000, 70 + k as u64).unwrap();
        let u_exact = it.u(s, x).unwrap();
        let th_exact = it.theta(s, x, y).unwrap();
        assert!((u - u_exact).abs() < 4.0 * u_se, "u {u} +- {u_se} vs {u_exact}");
        assert!((th - th_exact).abs() < 4.0 * th_se, "theta {th} +- {th_se} vs {th_exact}");
    }
    assert!(polynomial_conditional(&[0.0; 6], &model, 1.0, 0.0, 0).is_err());
}

#[test]
fn surface_slice_matches_pointwise() {
    let model = merton();
    let payoff = DampedPayoff::digital(0.0, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    let xs = [-0.4, -0.1, 0.0, 0.25, 0.6];
    let ys = [-0.2, 0.0, 0.1];
    let slice = it.surface_slice(0.35, &xs, &ys).unwrap();
    for p in &slice {
        assert!((p.value - it.value(0.35, p.x).unwrap()).abs() < 1e-9);
        assert!((p.u - it.u(0.35, p.x).unwrap()).abs() < 1e-9);
        for (th, y) in p.theta.iter().zip(ys) {
            assert!((th - it.theta(0.35, p.x, y).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn batch_replication_matches_pointwise() {
    let model = merton();
    let payoff = DampedPayoff::digital(0.0, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    let sim = Simulator::new(SimulationLaw::physical(&model), 1.0, 20, 11, DEFAULT_EPSILON_JUMP).unwrap();
    let eps = scheme_epsilon(&sim);
    let (range, y_max) = default_state_range(&model, 1.0).unwrap();
    let plan = ReplicationPlan::new(&it, 20, range, y_max, eps).unwrap();
    for k in 0..3 {
        let path = sim.path(k);
        let batch = plan.replicate(&path).unwrap();
        let pointwise = replicate_on_path(&it, &path, eps).unwrap();
        assert_eq!(batch.fallbacks, 0);
        assert!((batch.replication - pointwise).abs() < 1e-7, "{} vs {pointwise}", batch.replication);
    }
}

#[test]
fn small_replication_study_is_unbiased_and_converges() {
    let model = merton();
    let payoff = DampedPayoff::digital(0.0, 1.0);
    let grid = QuadratureGrid::default();
    let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
    let reports = replication_study(&it, 2000, &[25, 100], 21, DEFAULT_EPSILON_JUMP).unwrap();
    for r in &reports {
        assert!((r.mean_replication - r.analytic_mean).abs() < 3.0 * r.se, "{r:?}");
    }
    assert!(reports[1].mse < reports[0].mse, "{} vs {}", reports[1].mse, reports[0].mse);
}

#[test]
fn steps_below_the_maturity_cutoff_are_rejected() {
    assert!(step_times(1.0, 20_000).is_err());
    assert_eq!(step_times(1.0, 4).unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jump_integrand_is_antisymmetric(s in 0.0f64..0.9, x in -0.6f64..0.6, y in -0.8f64..0.8) {
        let model = merton();
        let payoff = DampedPayoff::digital(0.0, 1.0);
        let grid = QuadratureGrid::default();
        let it = build_integrands(&model, &payoff, &grid, 1.0).unwrap();
        let forward = it.theta(s, x, y).unwrap();
        let back = it.theta(s, x + y, -y).unwrap();
        prop_assert!((forward + back).abs() < 1e-9);
        prop_assert!(forward.abs() <= 1.0 + 1e-9);
    }
}
