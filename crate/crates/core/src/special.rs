//! Special functions used by the model catalog.
//!
//! `bessel_k1` covers the whole positive axis with three regimes: the
//! ascending series up to x = 2, Steed's continued fraction on (2, 20) and
//! the large-argument asymptotic expansion from x = 20 on.

use num_complex::Complex64;
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series/asymptotic crossover.
pub const K1_SERIES_LIMIT: f64 = 2.0;
const K1_ASYMPTOTIC_FROM: f64 = 20.0;

/// Modified Bessel function of the second kind of order one, `x > 0`.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x <= K1_SERIES_LIMIT {
        k1_series(x)
    } else if x < K1_ASYMPTOTIC_FROM {
        k1_steed(x)
    } else {
        k1_asymptotic(x)
    }
}

/// Leading-order large-argument form `e^{-x} sqrt(pi / 2x)`.
pub fn bessel_k1_leading(x: f64) -> f64 {
    (-x).exp() * (PI / (2.0 * x)).sqrt()
}

fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    // I1(x) = (x/2) sum q^k / (k! (k+1)!)
    // tail = sum (psi(k+1) + psi(k+2)) q^k / (k! (k+1)!)
    let mut term = 1.0; // q^k / (k! (k+1)!)
    let mut harmonic_k = 0.0; // H_k
    let mut i_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term *= q / (kf * (kf + 1.0));
            harmonic_k += 1.0 / kf;
        }
        let psi_k1 = -EULER_GAMMA + harmonic_k;
        let psi_k2 = psi_k1 + 1.0 / (kf + 1.0);
        i_sum += term;
        psi_sum += (psi_k1 + psi_k2) * term;
        if term < 1e-18 * i_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i_sum;
    1.0 / x + i1 * (0.5 * x).ln() - 0.25 * x * psi_sum
}

/// Steed's algorithm for the second continued fraction (Temme 1975).
/// Runs at order zero and recovers K1 from the ratio K1/K0.
fn k1_steed(x: f64) -> f64 {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut a = -a1;
    let mut c = a1;
    let mut q = a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    k0 * (x + 0.5 - a1 * h) / x
}

fn k1_asymptotic(x: f64) -> f64 {
    let mu = 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    bessel_k1_leading(x) * sum
}

/// `e^w - 1 - w`, accurate for small `|w|`.
pub fn exp_m1_m_lin(w: Complex64) -> Complex64 {
    if w.norm() < 0.5 {
        // sum_{k>=2} w^k / k!
        let mut term = w * w * 0.5;
        let mut sum = term;
        for k in 3..40 {
            term = term * w / k as f64;
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        w.exp() - 1.0 - w
    }
}

/// `Gamma(3/2) = sqrt(pi) / 2`.
pub const GAMMA_3_2: f64 = 0.886_226_925_452_758;

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values: scipy.special.k1
    const TABLE: [(f64, f64); 13] = [
        (1e-3, 999.996_238_156_085_5),
        (0.1, 9.853_844_780_870_606),
        (0.5, 1.656_441_120_003_300_7),
        (1.0, 0.601_907_230_197_234_6),
        (1.9, 0.159_660_153_032_667_56),
        (2.0, 0.139_865_881_816_522_46),
        (2.1, 0.122_746_411_533_507_9),
        (5.0, 0.004_044_613_445_452_163),
        (10.0, 1.864_877_345_382_558_5e-5),
        (19.9, 6.518_685_500_851_477e-10),
        (20.0, 5.883_057_969_557_038e-10),
        (25.0, 3.532_778_073_199_933_7e-12),
        (50.0, 3.444_102_226_717_555_5e-23),
    ];

    #[test]
    fn k1_matches_table() {
        for (x, expected) in TABLE {
            let got = bessel_k1(x);
            let rel = ((got - expected) / expected).abs();
            assert!(rel < 1e-12, "K1({x}) = {got}, expected {expected}, rel {rel}");
        }
    }

    #[test]
    fn k1_continuous_across_regimes() {
        for x in [K1_SERIES_LIMIT, K1_ASYMPTOTIC_FROM] {
            let lo = bessel_k1(x * (1.0 - 1e-12));
            let hi = bessel_k1(x * (1.0 + 1e-12));
            assert!(((lo - hi) / lo).abs() < 1e-10);
        }
    }

    #[test]
    fn k1_large_argument_leading_term_within_ten_percent() {
        for i in 0..50 {
            let x = 10.0 + i as f64 * 2.0;
            let ratio = bessel_k1(x) / bessel_k1_leading(x);
            assert!((ratio - 1.0).abs() < 0.1, "x={x} ratio={ratio}");
        }
    }

    #[test]
    fn k1_nonpositive_is_nan() {
        assert!(bessel_k1(0.0).is_nan());
        assert!(bessel_k1(-1.0).is_nan());
    }

    #[test]
    fn exp_m1_m_lin_small_and_large() {
        let w = Complex64::new(1e-5, -2e-5);
        let direct = w * w / 2.0 + w * w * w / 6.0 + w * w * w * w / 24.0;
        assert!((exp_m1_m_lin(w) - direct).norm() < 1e-24);
        let w = Complex64::new(0.7, 1.3);
        assert!((exp_m1_m_lin(w) - (w.exp() - 1.0 - w)).norm() < 1e-15);
    }
}
