//! Payoff catalog with damped Fourier transforms
//! `g(x, z) = int e^{izy} f(x + y) dy = e^{-izx} g(0, z)`.

use crate::error::{Error, Result};
use crate::models::LevyExponent;
use crate::quadrature::{self, Tolerance};
use crate::special::GAMMA_3_2;
use num_complex::Complex64;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance of the numeric transform for custom payoffs.
pub const CUSTOM_TRANSFORM_TOL: f64 = 1e-7;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type TransformFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// User supplied payoff. Without an explicit transform the damped integral
/// is computed numerically.
#[derive(Clone)]
pub struct CustomPayoff {
    pub name: String,
    pub f: RealFn,
    /// `g(0, z)`.
    pub transform: Option<TransformFn>,
    /// Points where `f` is not smooth.
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for CustomPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPayoff")
            .field("name", &self.name)
            .field("has_transform", &self.transform.is_some())
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    Plus,
    Minus,
}

#[derive(Debug, Clone)]
pub enum PayoffKind {
    /// `1_{x >= c}`.
    Digital { c: f64 },
    /// `e^x 1_{x > 0}`.
    ExpIndicator,
    /// `sqrt(x v 0)`.
    SqrtAbsPlus,
    /// `sqrt((-x) v 0)`.
    SqrtAbsMinus,
    /// `sqrt|x|` before decomposition; has no damped transform.
    SqrtAbs,
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Constant(f64),
    Custom(CustomPayoff),
}

#[derive(Debug, Clone)]
pub struct DampedPayoff {
    pub kind: PayoffKind,
    /// Damping exponent. Negative for the reflected left-tail part.
    pub alpha: f64,
}

impl DampedPayoff {
    pub fn new(kind: PayoffKind, alpha: f64) -> Self {
        DampedPayoff { kind, alpha }
    }

    pub fn digital(c: f64, alpha: f64) -> Self {
        Self::new(PayoffKind::Digital { c }, alpha)
    }

    pub fn constant(k: f64) -> Self {
        Self::new(PayoffKind::Constant(k), 1.0)
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PayoffKind::Digital { .. } => "digital",
            PayoffKind::ExpIndicator => "exp_indicator",
            PayoffKind::SqrtAbsPlus => "sqrt_plus",
            PayoffKind::SqrtAbsMinus => "sqrt_minus",
            PayoffKind::SqrtAbs => "sqrt_abs",
            PayoffKind::Polynomial(_) => "polynomial",
            PayoffKind::Constant(_) => "constant",
            PayoffKind::Custom(_) => "custom",
        }
    }

    /// `f(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            PayoffKind::Digital { c } => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::ExpIndicator => {
                if x > 0.0 {
                    x.exp()
                } else {
                    0.0
                }
            }
            PayoffKind::SqrtAbsPlus => x.max(0.0).sqrt(),
            PayoffKind::SqrtAbsMinus => (-x).max(0.0).sqrt(),
            PayoffKind::SqrtAbs => x.abs().sqrt(),
            PayoffKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * x + a),
            PayoffKind::Constant(k) => *k,
            PayoffKind::Custom(p) => (p.f)(x),
        }
    }

    /// `Some(k)` when the payoff is the constant `k`.
    pub fn as_constant(&self) -> Option<f64> {
        match &self.kind {
            PayoffKind::Constant(k) => Some(*k),
            PayoffKind::Polynomial(c) if c.iter().skip(1).all(|a| *a == 0.0) => Some(c.first().copied().unwrap_or(0.0)),
            _ => None,
        }
    }

    /// Location of the kink/jump of `f`; sets the oscillation frequency of
    /// the transform.
    pub fn center(&self) -> f64 {
        match &self.kind {
            PayoffKind::Digital { c } => *c,
            PayoffKind::Custom(p) => p.breakpoints.first().copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Distance from the damping line `Im z = alpha` to the nearest
    /// singularity of `g(0, .)`.
    pub fn singularity_distance(&self, alpha: f64) -> f64 {
        match &self.kind {
            PayoffKind::ExpIndicator => alpha - 1.0,
            _ => alpha.abs(),
        }
    }

    /// Admissible damping exponents `(lo, hi)` of the transform.
    pub fn damping_interval(&self) -> (f64, f64) {
        match &self.kind {
            PayoffKind::Digital { .. } | PayoffKind::SqrtAbsPlus | PayoffKind::Custom(_) => (0.0, f64::INFINITY),
            PayoffKind::ExpIndicator => (1.0, f64::INFINITY),
            PayoffKind::SqrtAbsMinus => (f64::NEG_INFINITY, 0.0),
            PayoffKind::SqrtAbs | PayoffKind::Polynomial(_) | PayoffKind::Constant(_) => (0.0, 0.0),
        }
    }

    /// `g(0, z)`.
    pub fn transform0(&self, z: Complex64) -> Result<Complex64> {
        let (lo, hi) = self.damping_interval();
        if !(z.im > lo && z.im < hi) {
            return Err(Error::Domain(format!(
                "{} transform needs Im(z) in ({lo}, {hi}), got {}",
                self.label(),
                z.im
            )));
        }
        match &self.kind {
            PayoffKind::Digital { c } => Ok(-(I * z * c).exp() / (I * z)),
            PayoffKind::ExpIndicator => Ok(-1.0 / (I * z + 1.0)),
            PayoffKind::SqrtAbsPlus => sqrt_part_transform0(Part::Plus, z),
            PayoffKind::SqrtAbsMinus => sqrt_part_transform0(Part::Minus, z),
            PayoffKind::Custom(p) => match &p.transform {
                Some(t) => Ok(t(z)),
                None => numeric_transform0(&*p.f, &p.breakpoints, z),
            },
            _ => unreachable!("empty damping interval"),
        }
    }

    /// `g(x, z) = e^{-izx} g(0, z)`.
    pub fn transform(&self, x: f64, z: Complex64) -> Result<Complex64> {
        Ok((-I * z * x).exp() * self.transform0(z)?)
    }
}

/// `g(x, z)` for the digital `1_{x >= c}`.
pub fn digital_transform(c: f64, x: f64, z: Complex64) -> Result<Complex64> {
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("digital transform needs Im(z) > 0, got {}", z.im)));
    }
    Ok(-(I * z * (c - x)).exp() / (I * z))
}

/// `int_0^inf e^{-wy} sqrt(y) dy` for `Re w > 0`, integrated numerically on
/// the ray along which `wy` is real, with `y = u^2` removing the endpoint
/// singularity.
fn half_gamma_integral(w: Complex64) -> Result<Complex64> {
    if !(w.re > 0.0) {
        return Err(Error::Domain(format!("needs Re(w) > 0, got {w}")));
    }
    let r = w.norm();
    let theta = w.arg();
    // y = s e^{-i theta}: dy sqrt(y) = e^{-3i theta / 2} sqrt(s) ds
    let est = quadrature::adaptive_semi_infinite(
        |u: f64| 2.0 * u * u * (-r * u * u).exp(),
        0.0,
        true,
        Tolerance::new(1e-15, 1e-13),
    )?;
    Ok(Complex64::from_polar(est.value, -1.5 * theta))
}

fn sqrt_part_transform0(part: Part, z: Complex64) -> Result<Complex64> {
    match part {
        // int_0^inf e^{izy} sqrt(y) dy
        Part::Plus => half_gamma_integral(-I * z),
        // int_{-inf}^0 e^{izy} sqrt(-y) dy = int_0^inf e^{-izs} sqrt(s) ds
        Part::Minus => half_gamma_integral(I * z),
    }
}

/// `g_{+-}(x, z)` of `sqrt(+-x v 0)`.
pub fn sqrt_parts_transform(part: Part, x: f64, z: Complex64) -> Result<Complex64> {
    let ok = match part {
        Part::Plus => z.im > 0.0,
        Part::Minus => z.im < 0.0,
    };
    if !ok {
        return Err(Error::Domain(format!("{part:?} part needs damping of matching sign, Im(z)={}", z.im)));
    }
    Ok((-I * z * x).exp() * sqrt_part_transform0(part, z)?)
}

/// `g_{D+-}(x, z) = -iz g_{+-}(x, z)`.
pub fn derivative_transform(part: Part, x: f64, z: Complex64) -> Result<Complex64> {
    Ok(-I * z * sqrt_parts_transform(part, x, z)?)
}

/// Closed form `Gamma(3/2) w^{-3/2}` of the square-root transforms.
pub fn sqrt_part_closed_form(part: Part, z: Complex64) -> Complex64 {
    let w = match part {
        Part::Plus => -I * z,
        Part::Minus => I * z,
    };
    GAMMA_3_2 * w.powf(-1.5)
}

fn numeric_transform0(f: &(dyn Fn(f64) -> f64 + Send + Sync), breakpoints: &[f64], z: Complex64) -> Result<Complex64> {
    let g = |y: f64| {
        let v = f(y);
        if v == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            (I * z * y).exp() * v
        }
    };
    let tol = Tolerance { abs: CUSTOM_TRANSFORM_TOL, rel: CUSTOM_TRANSFORM_TOL, max_intervals: 20_000 };
    let mut edges: Vec<f64> = breakpoints.to_vec();
    if edges.is_empty() {
        edges.push(0.0);
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = Complex64::new(0.0, 0.0);
    for w in edges.windows(2) {
        total += quadrature::adaptive(g, w[0], w[1], tol)?.value;
    }
    total += quadrature::adaptive_semi_infinite(g, edges[edges.len() - 1], true, tol)?.value;
    total += quadrature::adaptive_semi_infinite(g, edges[0], false, tol)?.value;
    Ok(total)
}

/// Signed sum of damped parts reproducing a target payoff.
#[derive(Debug, Clone)]
pub struct PayoffDecomposition {
    pub parts: Vec<(f64, DampedPayoff)>,
}

impl PayoffDecomposition {
    /// Splits payoffs lacking a two-sided damped transform; others pass
    /// through as a single part.
    pub fn expand(payoff: &DampedPayoff) -> Self {
        match payoff.kind {
            PayoffKind::SqrtAbs => {
                let a = payoff.alpha.abs();
                PayoffDecomposition {
                    parts: vec![
                        (1.0, DampedPayoff::new(PayoffKind::SqrtAbsPlus, a)),
                        (1.0, DampedPayoff::new(PayoffKind::SqrtAbsMinus, -a)),
                    ],
                }
            }
            _ => PayoffDecomposition { parts: vec![(1.0, payoff.clone())] },
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.parts.iter().map(|(s, p)| s * p.value(x)).sum()
    }
}

/// Default damping: 1 when admissible for both payoff and model, otherwise
/// the midpoint of the admissible interval.
pub fn default_alpha<E: LevyExponent + ?Sized>(payoff: &PayoffKind, model: &E) -> f64 {
    let probe = DampedPayoff::new(payoff.clone(), 1.0);
    let (plo, phi) = probe.damping_interval();
    let (mlo, mhi) = if model.jump_free() { (f64::NEG_INFINITY, f64::INFINITY) } else { model.moment_interval() };
    let lo = plo.max(mlo);
    let hi = phi.min(mhi);
    let preferred = match payoff {
        PayoffKind::SqrtAbsMinus => -1.0,
        PayoffKind::ExpIndicator => 2.0,
        _ => 1.0,
    };
    if preferred > lo && preferred < hi {
        preferred
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo + 1.0
    } else {
        hi - 1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumption2Report {
    pub holds: bool,
    /// `int |f(x)| e^{-alpha x} dx` when finite.
    pub damped_l1: Option<f64>,
    /// Total variation of `f(x) e^{-alpha x}` when finite.
    pub damped_total_variation: Option<f64>,
    /// `f(X_T)` square integrable (`None` when not decidable).
    pub square_integrable: Option<bool>,
    pub note: String,
}

/// Square integrability of `f(X_T)` and the damped `L^1`/finite-variation
/// condition.
pub fn check_assumption2<E: LevyExponent + ?Sized>(payoff: &DampedPayoff, model: &E) -> Assumption2Report {
    let a = payoff.alpha;
    let (mlo, mhi) = if model.jump_free() { (f64::NEG_INFINITY, f64::INFINITY) } else { model.moment_interval() };
    let all_moments = mlo < 0.0 && mhi > 0.0;
    let report = |holds: bool, l1: Option<f64>, tv: Option<f64>, l2: Option<bool>, note: &str| Assumption2Report {
        holds: holds && l2.unwrap_or(true),
        damped_l1: l1,
        damped_total_variation: tv,
        square_integrable: l2,
        note: note.to_string(),
    };
    match &payoff.kind {
        PayoffKind::Digital { c } => {
            if a > 0.0 {
                let m = (-a * c).exp();
                report(true, Some(m / a), Some(2.0 * m), Some(true), "bounded payoff")
            } else {
                report(false, None, None, Some(true), "digital needs alpha > 0")
            }
        }
        PayoffKind::ExpIndicator => {
            let l2 = Some(mhi > 2.0);
            if a > 1.0 {
                report(true, Some(1.0 / (a - 1.0)), Some(2.0), l2, "needs E[e^{2 X_T}] finite")
            } else {
                report(false, None, None, l2, "e^x 1_{x>0} needs alpha > 1")
            }
        }
        PayoffKind::SqrtAbsPlus | PayoffKind::SqrtAbsMinus => {
            let s = if matches!(payoff.kind, PayoffKind::SqrtAbsPlus) { 1.0 } else { -1.0 };
            let b = s * a;
            if b > 0.0 {
                let l1 = GAMMA_3_2 * b.powf(-1.5);
                let peak = (0.5 / b).sqrt() * (-0.5f64).exp();
                report(true, Some(l1), Some(2.0 * peak), Some(true), "decomposed square-root part")
            } else {
                report(false, None, None, Some(true), "square-root part needs damping towards its support")
            }
        }
        PayoffKind::SqrtAbs => report(
            false,
            None,
            None,
            Some(true),
            "sqrt|x| e^{-alpha x} is not integrable for any alpha; decompose into sqrt(x v 0) and sqrt(-x v 0)",
        ),
        PayoffKind::Polynomial(c) => {
            if c.iter().all(|v| *v == 0.0) {
                return report(true, Some(0.0), Some(0.0), Some(true), "zero function");
            }
            report(
                false,
                None,
                None,
                Some(all_moments || c.len() <= 2),
                "polynomials are represented through conditional expectations",
            )
        }
        PayoffKind::Constant(k) => {
            if *k == 0.0 {
                report(true, Some(0.0), Some(0.0), Some(true), "zero function")
            } else {
                report(false, None, None, Some(true), "constant payoff is handled in closed form")
            }
        }
        PayoffKind::Custom(p) => {
            let (l1, tv) = numeric_l1_tv(&*p.f, a, &p.breakpoints);
            let holds = l1.is_finite() && tv.is_finite();
            Assumption2Report {
                holds,
                damped_l1: l1.is_finite().then_some(l1),
                damped_total_variation: tv.is_finite().then_some(tv),
                square_integrable: None,
                note: "numeric estimates; square integrability not verified".into(),
            }
        }
    }
}

fn numeric_l1_tv(f: &(dyn Fn(f64) -> f64 + Send + Sync), alpha: f64, breakpoints: &[f64]) -> (f64, f64) {
    let g = |x: f64| {
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * (-alpha * x).exp()
        }
    };
    let tol = Tolerance { abs: 1e-10, rel: 1e-8, max_intervals: 5000 };
    let mut edges: Vec<f64> = breakpoints.to_vec();
    edges.push(0.0);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();
    let mut l1 = 0.0;
    let abs_g = |x: f64| g(x).abs();
    for w in edges.windows(2) {
        l1 += quadrature::adaptive(abs_g, w[0], w[1], tol).map(|e| e.value).unwrap_or(f64::INFINITY);
    }
    l1 += quadrature::adaptive_semi_infinite(abs_g, edges[edges.len() - 1], true, tol)
        .map(|e| e.value)
        .unwrap_or(f64::INFINITY);
    l1 += quadrature::adaptive_semi_infinite(abs_g, edges[0], false, tol)
        .map(|e| e.value)
        .unwrap_or(f64::INFINITY);
    // total variation on a fine grid; growth at the grid ends signals an
    // unbounded function
    let span = 60.0 / alpha.abs().max(0.1);
    let n = 200_000;
    let h = 2.0 * span / n as f64;
    let mut tv = 0.0;
    let mut prev = g(-span);
    for i in 1..=n {
        let v = g(-span + i as f64 * h);
        tv += (v - prev).abs();
        prev = v;
    }
    let edge = g(-span).abs().max(g(span).abs());
    if !tv.is_finite() || edge > 1e-6 {
        tv = f64::INFINITY;
    }
    (l1, tv)
}

/// `sup_v |z_v g(0, -i z_v)|` over `v in [-v_max, v_max]` on `n` points.
pub fn damped_bound(payoff: &DampedPayoff, v_max: f64, n: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        let v = -v_max + 2.0 * v_max * k as f64 / n as f64;
        let zv = Complex64::new(-payoff.alpha, v);
        let g = payoff.transform0(-I * zv)?;
        worst = worst.max((zv * g).norm());
    }
    Ok(worst)
}
