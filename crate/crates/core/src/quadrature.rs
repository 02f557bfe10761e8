//! Gauss–Kronrod quadrature over real and complex valued integrands.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// Kronrod abscissae of the 21-point rule on [-1, 1] (positive half, the
/// last entry is the centre). Odd indices are the 10-point Gauss nodes.
pub const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

pub const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

pub const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_931_782_400,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Values that can be integrated: `f64` and `Complex64`.
pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn norm(self) -> f64;
}

impl Scalar for f64 {
    fn norm(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn norm(self) -> f64 {
        Complex64::norm(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 2000 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, ..Default::default() }
    }

    fn target(&self, value_norm: f64) -> f64 {
        self.abs.max(self.rel * value_norm)
    }
}

/// Node positions and weights of the 21-point Kronrod rule mapped to [a, b].
/// The Gauss weights are zero at the Kronrod-only nodes.
pub fn gk21_nodes(a: f64, b: f64) -> ([f64; 21], [f64; 21], [f64; 21]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 21];
    let mut wk = [0.0; 21];
    let mut wg = [0.0; 21];
    for j in 0..10 {
        x[2 * j] = c - h * XGK[j];
        x[2 * j + 1] = c + h * XGK[j];
        wk[2 * j] = h * WGK[j];
        wk[2 * j + 1] = h * WGK[j];
        if j % 2 == 1 {
            wg[2 * j] = h * WG[j / 2];
            wg[2 * j + 1] = h * WG[j / 2];
        }
    }
    x[20] = c;
    wk[20] = h * WGK[10];
    (x, wk, wg)
}

/// One application of the 21-point rule. Returns (kronrod, error estimate).
pub fn gk21<T: Scalar, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut res_k = fc * WGK[10];
    let mut res_g = T::default();
    let mut res_abs = fc.norm() * WGK[10];
    let mut fv = [(T::default(), T::default()); 10];
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[j] = (f1, f2);
        let s = f1 + f2;
        res_k = res_k + s * WGK[j];
        if j % 2 == 1 {
            res_g = res_g + s * WG[j / 2];
        }
        res_abs += WGK[j] * (f1.norm() + f2.norm());
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).norm();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv[j].0 - mean).norm() + (fv[j].1 - mean).norm());
    }
    let ah = h.abs();
    let mut err = (res_k - res_g).norm() * ah;
    let res_abs = res_abs * ah;
    let res_asc = res_asc * ah;
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (res_k * h, err)
}

struct Piece<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

/// Globally adaptive bisection on [a, b].
pub fn adaptive<T: Scalar, F: Fn(f64) -> T>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate { value: T::default(), error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk21(&f, a, b);
    let mut pieces = vec![Piece { a, b, value: v, error: e }];
    let mut evaluations = 21;
    loop {
        let mut total = T::default();
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in pieces.iter().enumerate() {
            total = total + p.value;
            err += p.error;
            if p.error > pieces[worst].error {
                worst = i;
            }
        }
        if !total.norm().is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= tol.target(total.norm()) {
            return Ok(Estimate { value: total, error: err, evaluations });
        }
        if pieces.len() >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "[{a}, {b}]: error {err:.3e} above target after {} intervals",
                pieces.len()
            )));
        }
        let p = pieces.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a.min(p.b) || m >= p.a.max(p.b) {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature(format!("interval [{}, {}] exhausted", p.a, p.b)));
        }
        let (v1, e1) = gk21(&f, p.a, m);
        let (v2, e2) = gk21(&f, m, p.b);
        evaluations += 42;
        pieces.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        pieces.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
}

/// Integral over [a, +inf) (`upward`) or (-inf, a] via x = a ± (1-t)/t.
pub fn adaptive_semi_infinite<T: Scalar, F: Fn(f64) -> T>(
    f: F,
    a: f64,
    upward: bool,
    tol: Tolerance,
) -> Result<Estimate<T>> {
    let sign = if upward { 1.0 } else { -1.0 };
    let g = |t: f64| {
        let x = a + sign * (1.0 - t) / t;
        let v = f(x);
        if v.norm() == 0.0 {
            T::default()
        } else {
            v * (1.0 / (t * t))
        }
    };
    adaptive(g, 0.0, 1.0, tol)
}

/// Integral of `f` over the punctured line |x| >= `inner`, organised for
/// Lévy densities: geometric panels towards the origin, breakpoints kept as
/// panel edges and semi-infinite tails past the outermost breakpoint.
pub fn levy_integral<T: Scalar, F: Fn(f64) -> T>(
    f: F,
    inner: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>> {
    let mut total = T::default();
    let mut error = 0.0;
    let mut evaluations = 0;
    for side in [1.0, -1.0] {
        let mut edges = vec![inner];
        let mut e = inner;
        while e < 1.0 {
            e = (2.0 * e).min(1.0);
            edges.push(e);
        }
        for &bp in breakpoints {
            let s = bp * side;
            if s > inner {
                edges.push(s);
            }
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
        let n = edges.len() as f64;
        let panel_tol = Tolerance { abs: tol.abs / (n + 2.0), ..tol };
        for w in edges.windows(2) {
            let est = adaptive(|x| f(side * x), w[0], w[1], panel_tol)?;
            total = total + est.value;
            error += est.error;
            evaluations += est.evaluations;
        }
        let last = *edges.last().unwrap();
        let est = adaptive_semi_infinite(|x| f(side * x), last, true, panel_tol)?;
        total = total + est.value;
        error += est.error;
        evaluations += est.evaluations;
    }
    Ok(Estimate { value: total, error, evaluations })
}

/// Integral of a non-negative real function near the origin over
/// (0, `upper`) using geometrically shrinking panels down to `upper` * 2^-60.
pub fn integral_towards_zero<F: Fn(f64) -> f64>(f: F, upper: f64, tol: Tolerance) -> Result<Estimate<f64>> {
    let mut total = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut hi = upper;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        let est = adaptive(&f, lo, hi, Tolerance { abs: tol.abs / 60.0, ..tol })?;
        total += est.value;
        error += est.error;
        evaluations += est.evaluations;
        hi = lo;
        if est.value.abs() <= 1e-3 * tol.abs.max(tol.rel * total.abs()) {
            break;
        }
    }
    Ok(Estimate { value: total, error, evaluations })
}
