//! Square-integrable Lévy models, their characteristic exponents and the
//! integrability checks needed by the Fourier engine.
//!
//! Throughout, the process is `X_t = X_0 + mu t + sigma W_t + int x Ñ(dt,dx)`,
//! so `mu` is the mean drift and
//! `psi(z) = i z mu - sigma^2 z^2 / 2 + J(z)` with
//! `J(z) = int (e^{izx} - 1 - izx) nu(dx)`.

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::special::{bessel_k1, exp_m1_m_lin};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Split point for numerically integrated Lévy densities; below it the
/// compensated exponential is replaced by its second-order term.
pub const CUSTOM_EPS0: f64 = 1e-4;

/// Anything with a Lévy–Khintchine exponent the engine can invert.
pub trait LevyExponent: Sync {
    /// Mean drift per unit time.
    fn drift(&self) -> f64;
    fn sigma(&self) -> f64;
    /// Density of the Lévy measure at `x != 0`.
    fn levy_density(&self, x: f64) -> f64;
    /// `J(z) = int (e^{izx} - 1 - izx) nu(dx)`.
    fn jump_exponent(&self, z: Complex64) -> Result<Complex64>;
    /// Open interval of real `u` with `int_{|x|>=1} e^{ux} nu(dx) < inf`.
    fn moment_interval(&self) -> (f64, f64);
    /// True when nu is the zero measure.
    fn jump_free(&self) -> bool;
    /// Points where the Lévy density is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Errors unless `E[e^{-Im(z) X_1}]` is finite.
    fn check_domain(&self, z: Complex64) -> Result<()> {
        if self.jump_free() {
            return Ok(());
        }
        let u = -z.im;
        let (lo, hi) = self.moment_interval();
        if u > lo && u < hi {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "exponential moment of order {u} is infinite (admissible interval ({lo}, {hi}))"
            )))
        }
    }

    fn psi(&self, z: Complex64) -> Result<Complex64> {
        let s = self.sigma();
        let j = if self.jump_free() { Complex64::new(0.0, 0.0) } else { self.jump_exponent(z)? };
        Ok(I * z * self.drift() - 0.5 * s * s * z * z + j)
    }

    /// `phi(t, z) = exp((T - t) psi(z))`.
    fn char_function(&self, t: f64, maturity: f64, z: Complex64) -> Result<Complex64> {
        if t == maturity {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(((maturity - t) * self.psi(z)?).exp())
    }
}

/// Piecewise exponential Lévy density: log-linear between knots, zero
/// outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseExpDensity {
    pub knots: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl PiecewiseExpDensity {
    pub fn new(knots: Vec<f64>, log_values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != log_values.len() {
            return Err(Error::Parameter("custom density needs >= 2 knots with matching values".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("custom density knots must be strictly increasing".into()));
        }
        if knots.iter().chain(log_values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("custom density entries must be finite".into()));
        }
        Ok(PiecewiseExpDensity { knots, log_values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x < k[0] || x > k[k.len() - 1] || x == 0.0 {
            return 0.0;
        }
        let j = match k.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= k.len() => k.len() - 2,
            p => p - 1,
        };
        let w = (x - k[j]) / (k[j + 1] - k[j]);
        ((1.0 - w) * self.log_values[j] + w * self.log_values[j + 1]).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Merton { gamma: f64, m: f64, delta: f64 },
    #[serde(rename = "vg")]
    VarianceGamma { c: f64, g: f64, m: f64 },
    Nig { a: f64, b: f64, delta: f64 },
    Brownian,
    Custom(PiecewiseExpDensity),
}

impl ModelKind {
    /// Same family with the Lévy measure multiplied by `w > 0`.
    pub fn scaled(&self, w: f64) -> Result<ModelKind> {
        if !(w > 0.0) {
            return Err(Error::Parameter(format!("Lévy measure weight must be positive, got {w}")));
        }
        Ok(match self {
            ModelKind::Merton { gamma, m, delta } => ModelKind::Merton { gamma: gamma * w, m: *m, delta: *delta },
            ModelKind::VarianceGamma { c, g, m } => ModelKind::VarianceGamma { c: c * w, g: *g, m: *m },
            ModelKind::Nig { a, b, delta } => ModelKind::Nig { a: *a, b: *b, delta: delta * w },
            ModelKind::Brownian => ModelKind::Brownian,
            ModelKind::Custom(d) => ModelKind::Custom(PiecewiseExpDensity::new(
                d.knots.clone(),
                d.log_values.iter().map(|l| l + w.ln()).collect(),
            )?),
        })
    }

    /// Family member with Lévy measure `e^x nu(dx)`.
    pub fn exp_tilted(&self) -> Result<ModelKind> {
        Ok(match self {
            ModelKind::Merton { gamma, m, delta } => ModelKind::Merton {
                gamma: gamma * (m + 0.5 * delta * delta).exp(),
                m: m + delta * delta,
                delta: *delta,
            },
            ModelKind::VarianceGamma { c, g, m } => {
                if *m <= 1.0 {
                    return Err(Error::Domain(format!("e^x nu is not a VG measure for M = {m} <= 1")));
                }
                ModelKind::VarianceGamma { c: *c, g: g + 1.0, m: m - 1.0 }
            }
            ModelKind::Nig { a, b, delta } => {
                if (b + 1.0).abs() >= *a {
                    return Err(Error::Domain(format!("e^x nu is not an NIG measure for |b + 1| >= a (a={a}, b={b})")));
                }
                ModelKind::Nig { a: *a, b: b + 1.0, delta: *delta }
            }
            ModelKind::Brownian => ModelKind::Brownian,
            ModelKind::Custom(d) => ModelKind::Custom(PiecewiseExpDensity::new(
                d.knots.clone(),
                d.knots.iter().zip(&d.log_values).map(|(x, l)| l + x).collect(),
            )?),
        })
    }

    pub fn finite_activity(&self) -> bool {
        !matches!(self, ModelKind::VarianceGamma { .. } | ModelKind::Nig { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyModel {
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub kind: ModelKind,
    /// `int_{|x| < CUSTOM_EPS0} x^2 nu(dx)`, only used for custom densities.
    #[serde(skip)]
    small_second_moment: f64,
}

impl LevyModel {
    pub fn new(kind: ModelKind, mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if !mu.is_finite() || !x0.is_finite() {
            return Err(Error::Parameter("mu and x0 must be finite".into()));
        }
        match &kind {
            ModelKind::Merton { gamma, m, delta } => {
                if !(*gamma > 0.0 && *delta > 0.0 && m.is_finite()) {
                    return Err(Error::Parameter("Merton needs gamma > 0, delta > 0".into()));
                }
            }
            ModelKind::VarianceGamma { c, g, m } => {
                if !(*c > 0.0 && *g > 0.0 && *m > 0.0) {
                    return Err(Error::Parameter("VG needs C, G, M > 0".into()));
                }
                if sigma != 0.0 {
                    return Err(Error::Parameter("VG is pure jump: sigma must be 0".into()));
                }
            }
            ModelKind::Nig { a, b, delta } => {
                if !(*a > 0.0 && *delta > 0.0 && b.abs() < *a) {
                    return Err(Error::Parameter("NIG needs a > 0, |b| < a, delta > 0".into()));
                }
                if sigma != 0.0 {
                    return Err(Error::Parameter("NIG is pure jump: sigma must be 0".into()));
                }
            }
            ModelKind::Brownian | ModelKind::Custom(_) => {}
        }
        let mut model = LevyModel { x0, mu, sigma, kind, small_second_moment: 0.0 };
        if let ModelKind::Custom(_) = model.kind {
            let tol = Tolerance::new(1e-16, 1e-10);
            let pos = quadrature::integral_towards_zero(|x| x * x * model.levy_density(x), CUSTOM_EPS0, tol)?;
            let neg = quadrature::integral_towards_zero(|x| x * x * model.levy_density(-x), CUSTOM_EPS0, tol)?;
            model.small_second_moment = pos.value + neg.value;
        }
        Ok(model)
    }

    pub fn brownian(mu: f64, sigma: f64) -> Self {
        LevyModel { x0: 0.0, mu, sigma, kind: ModelKind::Brownian, small_second_moment: 0.0 }
    }

    pub fn merton(gamma: f64, m: f64, delta: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::new(ModelKind::Merton { gamma, m, delta }, mu, sigma, 0.0)
    }

    pub fn variance_gamma(c: f64, g: f64, m: f64, mu: f64) -> Result<Self> {
        Self::new(ModelKind::VarianceGamma { c, g, m }, mu, 0.0, 0.0)
    }

    pub fn nig(a: f64, b: f64, delta: f64, mu: f64) -> Result<Self> {
        Self::new(ModelKind::Nig { a, b, delta }, mu, 0.0, 0.0)
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Short label for reports.
    pub fn label(&self) -> &'static str {
        match self.kind {
            ModelKind::Merton { .. } => "merton",
            ModelKind::VarianceGamma { .. } => "vg",
            ModelKind::Nig { .. } => "nig",
            ModelKind::Brownian => "brownian",
            ModelKind::Custom(_) => "custom",
        }
    }

    /// True if the Lévy measure has finite total mass.
    pub fn finite_activity(&self) -> bool {
        self.kind.finite_activity()
    }

    /// `int x nu(dx)` is finite (pure-jump finite variation candidate).
    pub fn finite_variation_jumps(&self) -> bool {
        !matches!(self.kind, ModelKind::Nig { .. })
    }

    fn custom_jump_exponent(&self, d: &PiecewiseExpDensity, z: Complex64) -> Result<Complex64> {
        let tol = Tolerance { abs: 1e-14, rel: 1e-11, max_intervals: 4000 };
        let est = quadrature::levy_integral(
            |x| exp_m1_m_lin(I * z * x) * d.eval(x),
            CUSTOM_EPS0,
            &d.knots,
            tol,
        )?;
        Ok(est.value - 0.5 * z * z * self.small_second_moment)
    }

    /// Cumulants per unit time `kappa_1..kappa_4` of `X_1 - X_0`.
    pub fn cumulants(&self) -> Result<[f64; 4]> {
        let s2 = self.sigma * self.sigma;
        let jumps = match &self.kind {
            ModelKind::Brownian => [0.0; 3],
            ModelKind::Merton { gamma, m, delta } => {
                let (m2, d2) = (m * m, delta * delta);
                [
                    gamma * (m2 + d2),
                    gamma * (m * m2 + 3.0 * m * d2),
                    gamma * (m2 * m2 + 6.0 * m2 * d2 + 3.0 * d2 * d2),
                ]
            }
            ModelKind::VarianceGamma { c, g, m } => {
                let k = |n: i32, fact: f64| c * fact * (m.powi(-n) + (-1f64).powi(n) * g.powi(-n));
                [k(2, 1.0), k(3, 2.0), k(4, 6.0)]
            }
            ModelKind::Nig { a, b, delta } => {
                let g = (a * a - b * b).sqrt();
                let a2 = a * a;
                [
                    delta * a2 / g.powi(3),
                    3.0 * delta * a2 * b / g.powi(5),
                    3.0 * delta * a2 * (a2 + 4.0 * b * b) / g.powi(7),
                ]
            }
            ModelKind::Custom(d) => {
                let mut out = [0.0; 3];
                for (i, n) in [2, 3, 4].into_iter().enumerate() {
                    let est = quadrature::levy_integral(
                        |x| x.powi(n) * d.eval(x),
                        CUSTOM_EPS0,
                        &d.knots,
                        Tolerance::new(1e-14, 1e-11),
                    )?;
                    out[i] = est.value;
                }
                out[0] += self.small_second_moment;
                out
            }
        };
        Ok([self.mu, s2 + jumps[0], jumps[1], jumps[2]])
    }

    /// Cumulants of order `1..=order` (at most four).
    pub fn moments_from_psi(&self, order: usize) -> Result<Vec<f64>> {
        if order == 0 || order > 4 {
            return Err(Error::Parameter(format!("cumulant order must be in 1..=4, got {order}")));
        }
        Ok(self.cumulants()?[..order].to_vec())
    }
}

impl LevyExponent for LevyModel {
    fn drift(&self) -> f64 {
        self.mu
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn levy_density(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match &self.kind {
            ModelKind::Brownian => 0.0,
            ModelKind::Merton { gamma, m, delta } => {
                gamma / ((2.0 * PI).sqrt() * delta) * (-(x - m) * (x - m) / (2.0 * delta * delta)).exp()
            }
            ModelKind::VarianceGamma { c, g, m } => {
                if x < 0.0 {
                    c * (g * x).exp() / x.abs()
                } else {
                    c * (-m * x).exp() / x
                }
            }
            ModelKind::Nig { a, b, delta } => {
                let ax = a * x.abs();
                // e^{bx} K1(a|x|) overflows/underflows separately for large |x|
                if ax > 700.0 {
                    let log = (b * x) - ax + (PI / (2.0 * ax)).ln() * 0.5;
                    return delta * a / PI * log.exp() / x.abs();
                }
                delta * a / PI * (b * x).exp() * bessel_k1(ax) / x.abs()
            }
            ModelKind::Custom(d) => d.eval(x),
        }
    }

    fn jump_exponent(&self, z: Complex64) -> Result<Complex64> {
        self.check_domain(z)?;
        let iz = I * z;
        Ok(match &self.kind {
            ModelKind::Brownian => Complex64::new(0.0, 0.0),
            ModelKind::Merton { gamma, m, delta } => {
                let w = iz * m - 0.5 * delta * delta * z * z;
                *gamma * (exp_m1_m_lin(w) + w - iz * m)
            }
            ModelKind::VarianceGamma { c, g, m } => {
                let p = iz / m;
                let q = -iz / g;
                *c * (-(1.0 - p).ln() - p - (1.0 - q).ln() - q)
            }
            ModelKind::Nig { a, b, delta } => {
                let g0 = (a * a - b * b).sqrt();
                let bz = *b + iz;
                *delta * (g0 - (a * a - bz * bz).sqrt()) - iz * delta * b / g0
            }
            ModelKind::Custom(d) => return self.custom_jump_exponent(d, z),
        })
    }

    fn moment_interval(&self) -> (f64, f64) {
        match &self.kind {
            ModelKind::VarianceGamma { g, m, .. } => (-g, *m),
            ModelKind::Nig { a, b, .. } => (-a - b, a - b),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn jump_free(&self) -> bool {
        matches!(self.kind, ModelKind::Brownian)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            ModelKind::Merton { m, delta, .. } => vec![*m, m - 3.0 * delta, m + 3.0 * delta],
            ModelKind::Custom(d) => d.knots.clone(),
            _ => Vec::new(),
        }
    }
}

/// Brute-force `J(z)` by direct quadrature of the Lévy density. Used as an
/// independent oracle for the closed forms.
pub fn jump_exponent_by_quadrature<E: LevyExponent + ?Sized>(model: &E, z: Complex64) -> Result<Complex64> {
    model.check_domain(z)?;
    let tol = Tolerance { abs: 1e-15, rel: 1e-12, max_intervals: 4000 };
    let inner = 1e-9;
    let est = quadrature::levy_integral(
        |x| {
            let d = model.levy_density(x);
            if d == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                exp_m1_m_lin(I * z * x) * d
            }
        },
        inner,
        &model.breakpoints(),
        tol,
    )?;
    // The sliver |x| < inner contributes -z^2/2 int x^2 nu, bounded by
    // |z|^2 inner / 2 times the density scale; dropped.
    Ok(est.value)
}

/// Smallest `Y` (a power of two) with `int_{|y|>Y} (1 + |y|) nu(dy)` below
/// `tol`; jumps beyond it are negligible for quadrature in the jump size.
pub fn jump_extent<E: LevyExponent + ?Sized>(model: &E, tol: f64) -> f64 {
    if model.jump_free() {
        return 0.0;
    }
    let mut y: f64 = 1.0;
    while y < 1024.0 {
        let mut tail = 0.0;
        for upward in [true, false] {
            let start = if upward { y } else { -y };
            let f = |x: f64| (1.0 + x.abs()) * model.levy_density(x);
            tail += quadrature::adaptive_semi_infinite(f, start, upward, Tolerance::new(tol * 1e-2, 1e-6))
                .map(|e| e.value)
                .unwrap_or(f64::INFINITY);
        }
        if tail <= tol {
            return y;
        }
        y *= 2.0;
    }
    y
}

/// `int_{|x| >= eps} g(x) nu(dx)` (all of `nu` when `eps == 0`).
pub fn levy_integral_beyond<E: LevyExponent + ?Sized, G: Fn(f64) -> f64>(model: &E, eps: f64, g: G) -> Result<f64> {
    if model.jump_free() {
        return Ok(0.0);
    }
    let f = |x: f64| {
        let nu = model.levy_density(x);
        if nu == 0.0 {
            0.0
        } else {
            g(x) * nu
        }
    };
    let tol = Tolerance::new(1e-14, 1e-11);
    if eps == 0.0 {
        return Ok(quadrature::levy_integral(f, 1e-12, &model.breakpoints(), tol)?.value);
    }
    let extent = jump_extent(model, 1e-14).max(2.0 * eps);
    let mut total = 0.0;
    for side in [1.0, -1.0] {
        let mut edges = vec![eps];
        let mut e = eps;
        while e < extent {
            e = (4.0 * e).min(extent);
            edges.push(e);
        }
        for b in model.breakpoints() {
            if b * side > eps && b * side < extent {
                edges.push(b * side);
            }
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in edges.windows(2) {
            total += quadrature::adaptive(|u| f(side * u), w[0], w[1], tol)?.value;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentialMomentReport {
    pub alpha: f64,
    pub holds: bool,
    /// `int_{|x|>=1} e^{alpha x} nu(dx)` when finite.
    pub value: Option<f64>,
    pub admissible: (f64, f64),
}

/// Assumption on exponential moments: `int_{|x|>=1} e^{alpha x} nu(dx) < inf`.
pub fn check_exponential_moment<E: LevyExponent + ?Sized>(model: &E, alpha: f64) -> ExponentialMomentReport {
    let admissible = model.moment_interval();
    if model.jump_free() {
        return ExponentialMomentReport { alpha, holds: true, value: Some(0.0), admissible };
    }
    let holds = alpha > admissible.0 && alpha < admissible.1;
    let value = if holds {
        let f = |x: f64| {
            let d = model.levy_density(x);
            if d == 0.0 {
                0.0
            } else {
                (alpha * x + d.ln()).exp()
            }
        };
        let tol = Tolerance::new(1e-14, 1e-9);
        let bps: Vec<f64> = model.breakpoints().into_iter().filter(|b| b.abs() > 1.0).collect();
        let mut total = 0.0;
        let mut ok = true;
        for upward in [true, false] {
            let start = if upward { 1.0 } else { -1.0 };
            let mut edges = vec![start];
            edges.extend(bps.iter().copied().filter(|b| if upward { *b > 1.0 } else { *b < -1.0 }));
            edges.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
            for w in edges.windows(2) {
                match quadrature::adaptive(f, w[0], w[1], tol) {
                    Ok(e) => total += e.value.abs(),
                    Err(_) => ok = false,
                }
            }
            match quadrature::adaptive_semi_infinite(f, *edges.last().unwrap(), upward, tol) {
                Ok(e) => total += e.value.abs(),
                Err(_) => ok = false,
            }
        }
        ok.then_some(total)
    } else {
        None
    };
    ExponentialMomentReport { alpha, holds, value, admissible }
}

#[derive(Debug, Clone, Serialize)]
pub struct SquareIntegrabilityReport {
    pub holds: bool,
    pub second_moment: f64,
}

/// `int x^2 nu(dx) < inf`, analytic for named kinds and numeric for custom
/// densities with tolerance 1e-6 on the tail estimate.
pub fn check_square_integrable(model: &LevyModel) -> SquareIntegrabilityReport {
    match model.cumulants() {
        Ok(k) => {
            let m2 = k[1] - model.sigma * model.sigma;
            SquareIntegrabilityReport { holds: m2.is_finite(), second_moment: m2 }
        }
        Err(_) => SquareIntegrabilityReport { holds: false, second_moment: f64::INFINITY },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySample {
    pub t_bar: f64,
    pub integrable: bool,
    /// log2 growth rate of the integral over successive dyadic shells.
    pub shell_slope: f64,
    /// Extrapolated tail beyond the last shell, relative to the total.
    pub relative_tail: f64,
    pub v_reached: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub alpha: f64,
    pub t: f64,
    pub holds: bool,
    pub samples: Vec<DecaySample>,
}

const DECAY_V_CAP: f64 = 1.048_576e6;
const DECAY_TOL: f64 = 1e-8;
const DECAY_POWER_FROM: f64 = 4096.0;

/// Dominating function on the contour `z_v = iv - alpha`:
/// `|phi(t, i z_v)| (1 + |z_v| + |J(i z_v)| / |z_v|)`.
fn decay_envelope<E: LevyExponent + ?Sized>(model: &E, alpha: f64, t_bar: f64, maturity: f64, v: f64) -> Result<f64> {
    let zv = Complex64::new(-alpha, v);
    let w = I * zv;
    let phi = model.char_function(t_bar, maturity, w)?.norm();
    let j = if model.jump_free() { 0.0 } else { model.jump_exponent(w)?.norm() };
    Ok(phi * (1.0 + zv.norm() + j / zv.norm()))
}

fn shell_integral<E: LevyExponent + ?Sized>(
    model: &E,
    alpha: f64,
    t_bar: f64,
    maturity: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let panels = 4;
    let h = (hi - lo) / panels as f64;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        for sign in [1.0, -1.0] {
            let (x, wk, _) = quadrature::gk21_nodes(a, a + h);
            for k in 0..21 {
                total += wk[k] * decay_envelope(model, alpha, t_bar, maturity, sign * x[k])?;
            }
        }
    }
    Ok(total)
}

fn classify_decay<E: LevyExponent + ?Sized>(model: &E, alpha: f64, t_bar: f64, maturity: f64) -> Result<DecaySample> {
    let mut total = shell_integral(model, alpha, t_bar, maturity, 0.0, 1.0)?;
    let mut prev_shell = total;
    let mut slopes: Vec<f64> = Vec::new();
    let mut v = 1.0;
    while v < DECAY_V_CAP {
        let shell = shell_integral(model, alpha, t_bar, maturity, v, 2.0 * v)?;
        v *= 2.0;
        total += shell;
        if !total.is_finite() {
            return Ok(DecaySample { t_bar, integrable: false, shell_slope: f64::INFINITY, relative_tail: f64::INFINITY, v_reached: v });
        }
        let slope = if shell > 0.0 && prev_shell > 0.0 { (shell / prev_shell).log2() } else { f64::NEG_INFINITY };
        prev_shell = shell;
        slopes.push(slope);
        let n = slopes.len();
        if n >= 3 {
            let recent = &slopes[n - 3..];
            let worst = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if worst < 0.0 {
                let r = 2f64.powf(worst);
                let tail = shell * r / (1.0 - r);
                if tail <= DECAY_TOL * total {
                    return Ok(DecaySample { t_bar, integrable: true, shell_slope: worst, relative_tail: tail / total, v_reached: v });
                }
            }
        }
        if n >= 4 && v >= DECAY_POWER_FROM {
            let recent = &slopes[n - 4..];
            let best = recent.iter().cloned().fold(f64::INFINITY, f64::min);
            let worst = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // Shell integrals that stop shrinking at a steady rate mean a
            // power tail |v|^{-p} with p <= 1. Gaussian or exponential decay
            // shows up as ever steeper slopes instead.
            if best > -0.05 && worst - best < 0.1 {
                return Ok(DecaySample { t_bar, integrable: false, shell_slope: best, relative_tail: f64::INFINITY, v_reached: v });
            }
        }
    }
    let n = slopes.len();
    let worst = slopes[n - 3..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if worst < -0.2 {
        let r = 2f64.powf(worst);
        let tail = prev_shell * r / (1.0 - r);
        return Ok(DecaySample { t_bar, integrable: true, shell_slope: worst, relative_tail: tail / total, v_reached: v });
    }
    if slopes[n - 3..].iter().all(|s| *s > -0.05) {
        return Ok(DecaySample { t_bar, integrable: false, shell_slope: worst, relative_tail: f64::INFINITY, v_reached: v });
    }
    Err(Error::Inconclusive(format!(
        "decay at t_bar={t_bar}: shell slope {worst:.3} at |v|={v:.3e} neither integrable nor divergent"
    )))
}

/// Numeric test of the integrable-domination condition at times sampled
/// from `[t/2, (T+t)/2]`; the worst sample decides the verdict.
pub fn check_decay_condition<E: LevyExponent + ?Sized>(model: &E, alpha: f64, t: f64, maturity: f64) -> Result<DecayReport> {
    if !(t < maturity) || t < 0.0 {
        return Err(Error::Parameter(format!("decay check needs 0 <= t < T, got t={t}, T={maturity}")));
    }
    model.check_domain(Complex64::new(0.0, -alpha))?;
    let lo = 0.5 * t;
    let hi = 0.5 * (maturity + t);
    let n = 5;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t_bar = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        samples.push(classify_decay(model, alpha, t_bar, maturity)?);
    }
    let holds = samples.iter().all(|s| s.integrable);
    Ok(DecayReport { alpha, t, holds, samples })
}

/// Exponential-moment part together with the decay test at
/// `t in {0, T/2, 0.9T, 0.99T}`.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption1Report {
    pub moment: ExponentialMomentReport,
    pub decay: Vec<DecayReport>,
    /// Decay could not be classified at some t.
    pub inconclusive: Option<String>,
    pub moment_holds: bool,
    pub decay_holds: bool,
}

pub fn check_assumption1<E: LevyExponent + ?Sized>(model: &E, alpha: f64, maturity: f64) -> Assumption1Report {
    let moment = check_exponential_moment(model, alpha);
    let mut decay = Vec::new();
    let mut inconclusive = None;
    if moment.holds {
        for frac in [0.0, 0.5, 0.9, 0.99] {
            match check_decay_condition(model, alpha, frac * maturity, maturity) {
                Ok(r) => decay.push(r),
                Err(e) => {
                    inconclusive = Some(e.to_string());
                    break;
                }
            }
        }
    }
    let moment_holds = moment.holds;
    let decay_holds = moment_holds && inconclusive.is_none() && decay.iter().all(|d| d.holds);
    Assumption1Report { moment, decay, inconclusive, moment_holds, decay_holds }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn brownian_closed_form() {
        let m = LevyModel::brownian(0.0, 1.0);
        assert!((m.psi(c(1.0, 0.0)).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
        let phi = m.char_function(0.0, 1.0, c(1.0, 0.0)).unwrap();
        assert!((phi.re - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn merton_example_value() {
        let m = LevyModel::merton(1.0, 0.0, 0.5, 0.0, 0.2).unwrap();
        let got = m.psi(c(1.0, 0.0)).unwrap();
        let expected = -0.02 + ((-0.125f64).exp() - 1.0);
        assert!((got - c(expected, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn psi_zero_everywhere() {
        for m in [
            LevyModel::merton(1.0, -0.1, 0.3, 0.05, 0.2).unwrap(),
            LevyModel::variance_gamma(1.0, 5.0, 5.0, 0.1).unwrap(),
            LevyModel::nig(3.0, -1.0, 1.0, 0.1).unwrap(),
            LevyModel::brownian(0.3, 0.2),
        ] {
            assert_eq!(m.psi(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        }
    }

    #[test]
    fn domain_errors_outside_strip() {
        let vg = LevyModel::variance_gamma(1.0, 5.0, 5.0, 0.0).unwrap();
        assert!(matches!(vg.psi(c(0.0, -6.0)), Err(Error::Domain(_))));
        assert!(vg.psi(c(0.0, -4.0)).is_ok());
    }

    #[test]
    fn exponential_moment_examples() {
        let vg = LevyModel::variance_gamma(1.0, 5.0, 5.0, 0.0).unwrap();
        assert!(check_exponential_moment(&vg, 4.0).holds);
        assert!(!check_exponential_moment(&vg, 6.0).holds);
        let nig = LevyModel::nig(3.0, -1.0, 1.0, 0.0).unwrap();
        assert!(check_exponential_moment(&nig, 3.5).holds);
        assert!(!check_exponential_moment(&nig, 4.5).holds);
        let v = check_exponential_moment(&vg, 4.0).value.unwrap();
        // int_1^inf e^{-x}/x + int_1^inf e^{-9x}/x = E1(1) + E1(9)
        let expected = 0.219_383_934_395_520_3 + 1.244_735_417_800_627_4e-5;
        assert!((v - expected).abs() < 1e-8, "{v}");
    }

    #[test]
    fn piecewise_density_interpolates_log_linearly() {
        let d = PiecewiseExpDensity::new(vec![-1.0, 0.5, 2.0], vec![0.0, -1.0, -4.0]).unwrap();
        assert!((d.eval(-1.0) - 1.0).abs() < 1e-15);
        assert!((d.eval(1.25) - (-2.5f64).exp()).abs() < 1e-14);
        assert_eq!(d.eval(2.5), 0.0);
        assert_eq!(d.eval(-1.5), 0.0);
    }

    #[test]
    fn decay_verdicts_for_named_models() {
        let merton = LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap();
        assert!(check_decay_condition(&merton, 1.0, 0.5, 1.0).unwrap().holds);
        let nig = LevyModel::nig(3.0, -1.0, 1.0, 0.0).unwrap();
        assert!(check_decay_condition(&nig, 2.0, 0.5, 1.0).unwrap().holds);
        let vg = LevyModel::variance_gamma(0.5, 5.0, 5.0, 0.0).unwrap();
        assert!(!check_decay_condition(&vg, 1.0, 0.0, 1.0).unwrap().holds);
    }
}
