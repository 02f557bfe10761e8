use lcop_core::mmm::{build_mmm, MarketSpec};
use lcop_core::models::{LevyExponent, LevyModel};
use lcop_core::simulator::{
    read_paths, sample_moments, sample_terminal, simulate, terminal_stats, write_paths, Measure, Scheme,
    SimulationLaw, Simulator, DEFAULT_EPSILON_JUMP,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn merton() -> LevyModel {
    LevyModel::merton(2.0, -0.1, 0.2, 0.05, 0.2).unwrap().with_x0(0.3)
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn terminal_moments_match_cumulants() {
    let model = merton();
    let maturity = 0.8;
    let sim = Simulator::new(SimulationLaw::physical(&model), maturity, 16, 5, DEFAULT_EPSILON_JUMP).unwrap();
    let paths: Vec<_> = sim.paths(100_000).collect();
    let st = terminal_stats(&paths);
    // compound Poisson with N(m, d^2) marks: kappa_n = rate * E[Y^n]
    let (rate, m, d, sigma): (f64, f64, f64, f64) = (2.0, -0.1, 0.2, 0.2);
    let var = (sigma * sigma + rate * (m * m + d * d)) * maturity;
    let mean = model.x0 + model.mu * maturity;
    assert!((st.mean - mean).abs() < 4.0 * (var / 1e5).sqrt(), "{} vs {mean}", st.mean);
    assert!((st.variance / var - 1.0).abs() < 0.02, "{} vs {var}", st.variance);
    let skew = rate * (m.powi(3) + 3.0 * m * d * d) * maturity / var.powf(1.5);
    assert!((st.skewness - skew).abs() < 0.05, "{} vs {skew}", st.skewness);
    assert!((st.mean_jumps - 2.0 * maturity).abs() < 0.02);
}

#[test]
fn same_seed_same_paths() {
    let law = SimulationLaw::physical(&LevyModel::nig(3.0, -1.0, 1.0, 0.0).unwrap());
    let a = Simulator::new(law.clone(), 1.0, 20, 9, DEFAULT_EPSILON_JUMP).unwrap();
    let b = Simulator::new(law.clone(), 1.0, 20, 9, DEFAULT_EPSILON_JUMP).unwrap();
    let c = Simulator::new(law, 1.0, 20, 10, DEFAULT_EPSILON_JUMP).unwrap();
    for k in [0, 7, 123] {
        assert_eq!(a.path(k), b.path(k));
        assert_ne!(a.path(k).x_values, c.path(k).x_values);
    }
    let streamed: Vec<_> = simulate(a.law.clone(), 1.0, 20, 3, 9, DEFAULT_EPSILON_JUMP).unwrap().collect();
    assert_eq!(streamed, a.paths(3).collect::<Vec<_>>());
}

#[test]
fn dump_round_trips() {
    let sim = Simulator::new(SimulationLaw::physical(&merton()), 1.0, 12, 4, DEFAULT_EPSILON_JUMP).unwrap();
    let paths: Vec<_> = sim.paths(25).collect();
    let mut buf = Vec::new();
    write_paths(&mut buf, 4, &paths).unwrap();
    let back = read_paths(buf.as_slice()).unwrap();
    assert_eq!(back, paths);
    buf[0] = b'X';
    assert!(read_paths(buf.as_slice()).is_err());
}

#[test]
fn reconstruction_reproduces_states() {
    let sim = Simulator::new(SimulationLaw::physical(&merton()), 1.0, 30, 2, DEFAULT_EPSILON_JUMP).unwrap();
    for p in sim.paths(20) {
        for (a, b) in p.reconstruct().iter().zip(&p.x_values) {
            assert!((a - b).abs() < 1e-12);
        }
        for j in &p.jump_marks {
            assert!(j.time >= p.times[j.step] && j.time <= p.times[j.step + 1]);
        }
    }
}

#[test]
fn nig_paths_match_the_characteristic_function() {
    let model = LevyModel::nig(3.0, -1.0, 1.0, 0.1).unwrap();
    let law = SimulationLaw::physical(&model);
    let sim = Simulator::new(law.clone(), 1.0, 8, 17, DEFAULT_EPSILON_JUMP).unwrap();
    assert!(matches!(sim.scheme, Scheme::Truncated { gaussian_correction: true, .. }));
    let n = 60_000;
    let from_paths: Vec<f64> = sim.paths(n).map(|p| p.terminal()).collect();
    let exact = sample_terminal(&law, 1.0, n as usize, 17).unwrap();
    for xs in [&from_paths, &exact] {
        for u in [0.5, 1.5, 3.0] {
            let phi = model.char_function(0.0, 1.0, Complex64::new(u, 0.0)).unwrap();
            let emp = xs.iter().map(|x| Complex64::new(0.0, u * x).exp()).sum::<Complex64>() / n as f64;
            assert!((emp - phi).norm() < 4.0 / (n as f64).sqrt(), "u={u}: {emp} vs {phi}");
        }
    }
}

#[test]
fn increments_are_stationary() {
    let model = LevyModel::nig(3.0, -1.0, 1.0, 0.0).unwrap();
    let sim = Simulator::new(SimulationLaw::physical(&model), 1.0, 10, 23, DEFAULT_EPSILON_JUMP).unwrap();
    let (mut first, mut last) = (Vec::new(), Vec::new());
    for p in sim.paths(20_000) {
        first.push(p.x_values[1] - p.x_values[0]);
        last.push(p.x_values[10] - p.x_values[9]);
    }
    let d = ks_statistic(&first, &last);
    // 1% critical value
    assert!(d < 1.63 * (2.0 / 20_000.0f64).sqrt(), "{d}");
    let a = sample_moments(&first);
    let b = sample_moments(&last);
    assert!((a.variance / b.variance - 1.0).abs() < 0.05);
}

#[test]
fn star_law_discounted_price_is_a_martingale() {
    let m = MarketSpec::new(0.01, 1.0, 1.0, LevyModel::nig(3.0, -1.0, 1.0, -0.25).unwrap()).unwrap();
    let t = build_mmm(&m).unwrap();
    let law = t.simulation_law().unwrap();
    assert_eq!(law.measure, Measure::Mmm);
    let sim = Simulator::new(law, 1.0, 10, 31, DEFAULT_EPSILON_JUMP).unwrap();
    let xs: Vec<f64> = sim.paths(80_000).map(|p| p.terminal().exp()).collect();
    let st = sample_moments(&xs);
    let target = m.model.x0.exp();
    assert!((st.mean - target).abs() < 4.0 * (st.variance / 8e4).sqrt(), "{} vs {target}", st.mean);
}

#[test]
fn coarsening_keeps_the_path() {
    let sim = Simulator::new(SimulationLaw::physical(&merton()), 1.0, 24, 8, DEFAULT_EPSILON_JUMP).unwrap();
    let p = sim.path(3);
    let c = p.coarsen(4).unwrap();
    assert_eq!(c.n_steps(), 6);
    assert_eq!(c.terminal(), p.terminal());
    assert_eq!(c.jump_marks.len(), p.jump_marks.len());
    for (a, b) in c.reconstruct().iter().zip(&c.x_values) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(p.coarsen(5).is_err());
}

#[test]
fn invalid_settings_are_rejected() {
    let law = SimulationLaw::physical(&merton());
    assert!(Simulator::new(law.clone(), 1.0, 0, 1, DEFAULT_EPSILON_JUMP).is_err());
    assert!(Simulator::new(law, -1.0, 5, 1, DEFAULT_EPSILON_JUMP).is_err());
    let vg = SimulationLaw::physical(&LevyModel::variance_gamma(1.0, 5.0, 8.0, 0.0).unwrap());
    assert!(Simulator::new(vg, 1.0, 5, 1, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn grid_ends_at_maturity(n in 1usize..60, maturity in 0.05f64..3.0, seed in 0u64..1000) {
        let sim = Simulator::new(SimulationLaw::physical(&merton()), maturity, n, seed, DEFAULT_EPSILON_JUMP).unwrap();
        let p = sim.path(seed);
        prop_assert_eq!(p.n_steps(), n);
        prop_assert_eq!(*p.times.last().unwrap(), maturity);
        prop_assert!(p.times.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(p.x_values[0], 0.3);
    }
}
