//! Minimal martingale measure for `S_t = e^{rt + X_t}`.
//!
//! With `theta = mu_hat / (sigma^2 + C_2)` the measure change is
//! `W* = W + theta sigma t` and `nu*(dx) = (1 - theta (e^x - 1)) nu(dx)`.
//! Writing `D = int x (e^x - 1) nu(dx)`, the drift of `X` under the new
//! measure is `mu* = mu - theta sigma^2 - theta D` and
//! `J*(z) = J(z) - theta (J(z - i) - J(z) - J(-i) - i z D)`.

use crate::error::{Error, Result};
use crate::fourier::{DensityEvaluator, EngineValue, QuadratureGrid};
use crate::models::{check_decay_condition, levy_integral_beyond, DecayReport, LevyExponent, LevyModel, ModelKind};
use crate::quadrature::{self, Tolerance};
use crate::simulator::{Measure, PathRecord, Scheme, SimulationLaw, Simulator};
use num_complex::Complex64;
use serde::Serialize;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance on `psi*(-i) = 0` enforced when the transform is built.
pub const MARTINGALE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct MarketSpec {
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    pub model: LevyModel,
}

impl MarketSpec {
    pub fn new(r: f64, maturity: f64, strike: f64, model: LevyModel) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Parameter(format!("interest rate must be >= 0, got {r}")));
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::Parameter(format!("maturity must be positive, got {maturity}")));
        }
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::Parameter(format!("strike must be positive, got {strike}")));
        }
        Ok(MarketSpec { r, maturity, strike, model })
    }

    /// `log K - r T`: the digital pays when `X_T` reaches it.
    pub fn log_threshold(&self) -> f64 {
        self.strike.ln() - self.r * self.maturity
    }

    pub fn price(&self, t: f64, x: f64) -> f64 {
        (self.r * t + x).exp()
    }

    /// Discounted price `e^{-rt} S_t = e^{X_t}`.
    pub fn discounted_price(&self, x: f64) -> f64 {
        x.exp()
    }

    /// Same market with `S` and `K` multiplied by `lambda`.
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        let model = self.model.clone().with_x0(self.model.x0 + lambda.ln());
        MarketSpec::new(self.r, self.maturity, self.strike * lambda, model)
    }
}

/// `K(u) = J(-iu) = int (e^{ux} - 1 - ux) nu(dx)`.
pub fn cumulant_exponent<E: LevyExponent + ?Sized>(model: &E, u: f64) -> Result<f64> {
    if model.jump_free() {
        return Ok(0.0);
    }
    Ok(model.jump_exponent(Complex64::new(0.0, -u))?.re)
}

/// `C_2 = int (e^x - 1)^2 nu(dx) = K(2) - 2 K(1)`; `None` when infinite.
pub fn c2<E: LevyExponent + ?Sized>(model: &E) -> Option<f64> {
    let k2 = cumulant_exponent(model, 2.0).ok()?;
    let k1 = cumulant_exponent(model, 1.0).ok()?;
    Some(k2 - 2.0 * k1)
}

/// `D = int x (e^x - 1) nu(dx)`.
pub fn d_integral(model: &LevyModel) -> Result<f64> {
    Ok(match &model.kind {
        ModelKind::Brownian => 0.0,
        ModelKind::Merton { gamma, m, delta } => {
            let d2 = delta * delta;
            gamma * ((m + d2) * (m + 0.5 * d2).exp() - m)
        }
        ModelKind::VarianceGamma { c, g, m } => {
            model.check_domain(Complex64::new(0.0, -1.0))?;
            c * (1.0 / (m * (m - 1.0)) + 1.0 / (g * (g + 1.0)))
        }
        ModelKind::Nig { a, b, delta } => {
            model.check_domain(Complex64::new(0.0, -1.0))?;
            let b1 = b + 1.0;
            delta * (b1 / (a * a - b1 * b1).sqrt() - b / (a * a - b * b).sqrt())
        }
        ModelKind::Custom(d) => {
            quadrature::levy_integral(|x| x * x.exp_m1() * d.eval(x), 1e-9, &d.knots, Tolerance::new(1e-14, 1e-11))?
                .value
        }
    })
}

/// Data of the minimal martingale measure.
#[derive(Debug, Clone, Serialize)]
pub struct MmmTransform {
    pub c2: f64,
    pub mu_hat: f64,
    /// `mu_hat / (sigma^2 + C_2)`.
    pub theta: f64,
    /// Brownian shift `mu_hat sigma / (sigma^2 + C_2)`.
    pub girsanov_w: f64,
    /// `int x (e^x - 1) nu(dx)`.
    pub d: f64,
    pub mu_star: f64,
    /// `psi*(-i)`, zero up to rounding.
    pub martingale_residual: f64,
    #[serde(skip)]
    pub model: LevyModel,
}

impl MmmTransform {
    /// `1 - theta (e^x - 1)`, the density of `nu*` with respect to `nu`.
    pub fn star_density_factor(&self, x: f64) -> f64 {
        1.0 - self.theta * x.exp_m1()
    }

    pub fn star_model(&self) -> StarModel {
        StarModel { base: self.model.clone(), theta: self.theta, d: self.d, mu_star: self.mu_star }
    }

    pub fn psi_star(&self, z: Complex64) -> Result<Complex64> {
        self.star_model().psi(z)
    }

    /// Lévy measure under the new measure as a sum of family members,
    /// `(1 + theta) nu + (-theta) e^x nu`.
    pub fn star_components(&self) -> Result<Vec<ModelKind>> {
        let mut out = Vec::new();
        if let ModelKind::Brownian = self.model.kind {
            return Ok(out);
        }
        if 1.0 + self.theta > 0.0 {
            out.push(self.model.kind.scaled(1.0 + self.theta)?);
        }
        if self.theta != 0.0 {
            out.push(self.model.kind.exp_tilted()?.scaled(-self.theta)?);
        }
        Ok(out)
    }

    /// Law of `X` under the minimal martingale measure for the simulator.
    pub fn simulation_law(&self) -> Result<SimulationLaw> {
        Ok(SimulationLaw {
            x0: self.model.x0,
            drift: self.mu_star,
            sigma: self.model.sigma,
            components: self.star_components()?,
            measure: Measure::Mmm,
        })
    }

    /// `p*_t(y)`.
    pub fn density_star(&self, grid: &QuadratureGrid, t: f64, maturity: f64, y: f64) -> Result<EngineValue> {
        let star = self.star_model();
        Ok(DensityEvaluator::new(&star, grid, t, maturity, (y, y))?.density(y))
    }
}

/// `X` under the minimal martingale measure.
#[derive(Debug, Clone)]
pub struct StarModel {
    pub base: LevyModel,
    pub theta: f64,
    pub d: f64,
    pub mu_star: f64,
}

impl LevyExponent for StarModel {
    fn drift(&self) -> f64 {
        self.mu_star
    }

    fn sigma(&self) -> f64 {
        self.base.sigma
    }

    fn levy_density(&self, x: f64) -> f64 {
        let nu = self.base.levy_density(x);
        if nu == 0.0 {
            return 0.0;
        }
        (1.0 - self.theta * x.exp_m1()) * nu
    }

    fn jump_exponent(&self, z: Complex64) -> Result<Complex64> {
        self.check_domain(z)?;
        let j = self.base.jump_exponent(z)?;
        if self.theta == 0.0 {
            return Ok(j);
        }
        let shifted = self.base.jump_exponent(z - I)?;
        let j1 = self.base.jump_exponent(-I)?;
        Ok(j - self.theta * (shifted - j - j1 - I * z * self.d))
    }

    fn moment_interval(&self) -> (f64, f64) {
        let (lo, hi) = self.base.moment_interval();
        if self.theta == 0.0 {
            (lo, hi)
        } else {
            (lo, hi - 1.0)
        }
    }

    fn jump_free(&self) -> bool {
        self.base.jump_free()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }
}

/// Builds the minimal martingale measure; fails unless `C_2 < inf` and
/// `0 >= mu_hat > -sigma^2 - C_2`.
pub fn build_mmm(market: &MarketSpec) -> Result<MmmTransform> {
    let model = &market.model;
    let c2 = c2(model).ok_or_else(|| {
        Error::Assumption("C_2 = int (e^x - 1)^2 nu(dx) is infinite (needs exponential moment of order 2)".into())
    })?;
    let s2 = model.sigma * model.sigma;
    let mu_hat = model.mu + 0.5 * s2 + cumulant_exponent(model, 1.0)?;
    if mu_hat > 0.0 {
        return Err(Error::Assumption(format!("mu_hat = {mu_hat:.6e} > 0 violates 0 >= mu_hat")));
    }
    if !(mu_hat > -s2 - c2) {
        return Err(Error::Assumption(format!(
            "mu_hat = {mu_hat:.6e} violates mu_hat > -sigma^2 - C_2 = {:.6e}",
            -s2 - c2
        )));
    }
    if s2 + c2 == 0.0 {
        return Err(Error::Assumption("sigma^2 + C_2 = 0: no risk to hedge".into()));
    }
    let theta = mu_hat / (s2 + c2);
    let d = d_integral(model)?;
    let mu_star = model.mu - theta * s2 - theta * d;
    let mut t = MmmTransform {
        c2,
        mu_hat,
        theta,
        girsanov_w: theta * model.sigma,
        d,
        mu_star,
        martingale_residual: 0.0,
        model: model.clone(),
    };
    // e^{X} must be a martingale under the new measure
    let res = t.psi_star(-I)?;
    t.martingale_residual = res.norm();
    if t.martingale_residual > MARTINGALE_TOL {
        return Err(Error::Domain(format!("psi*(-i) = {res} is not zero; measure change is inconsistent")));
    }
    Ok(t)
}

/// `log dP~/dP` along a path simulated under the physical measure by
/// `sim`. Jumps below the truncation level enter through their Gaussian
/// proxy, which gets the matching Gaussian measure change.
pub fn mmm_log_density(transform: &MmmTransform, path: &PathRecord, sim: &Simulator) -> Result<f64> {
    if path.measure != Measure::Physical {
        return Err(Error::Parameter("density of the minimal martingale measure needs a physical path".into()));
    }
    if transform.theta == 0.0 {
        return Ok(0.0);
    }
    let model = &transform.model;
    let theta = transform.theta;
    let t_end = *path.times.last().unwrap();
    let w_t: f64 = path.brownian_increments.iter().sum();
    let sw = transform.girsanov_w;
    let mut log = -sw * w_t - 0.5 * sw * sw * t_end;
    let (eps, correction) = match sim.scheme {
        Scheme::CompoundPoisson => (0.0, false),
        Scheme::Truncated { epsilon, gaussian_correction } => (epsilon, gaussian_correction),
    };
    if correction {
        let z_t: f64 = path.small_jump_increments.iter().sum();
        log += -theta * z_t - 0.5 * theta * theta * sim.small_jump_variance * t_end;
    }
    for j in &path.jump_marks {
        let f = transform.star_density_factor(j.size);
        if !(f > 0.0) {
            return Err(Error::Domain(format!("density factor {f} <= 0 at jump size {}", j.size)));
        }
        log += f.ln();
    }
    let compensator = match model.kind {
        ModelKind::Merton { gamma, m, delta } if eps == 0.0 => gamma * (m + 0.5 * delta * delta).exp_m1(),
        _ => levy_integral_beyond(model, eps, |x| x.exp_m1())?,
    };
    log += t_end * theta * compensator;
    Ok(log)
}

/// Outcome of the three-part check for the minimal martingale measure.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption3Report {
    pub alpha: f64,
    pub c2: Option<f64>,
    pub mu_hat: Option<f64>,
    /// `C_2 < inf` and `E~[e^{alpha X_T}] < inf` with `alpha >= 1`.
    pub moment_holds: bool,
    /// `0 >= mu_hat > -sigma^2 - C_2`.
    pub mu_hat_holds: bool,
    pub decay_holds: bool,
    pub decay: Vec<DecayReport>,
    pub holds: bool,
    /// Name of the first failing part: "moment", "mu_hat", "decay" or
    /// "inconclusive".
    pub failure: Option<String>,
    pub detail: Option<String>,
}

pub fn check_assumption3(market: &MarketSpec, alpha: f64) -> Assumption3Report {
    let model = &market.model;
    let mut report = Assumption3Report {
        alpha,
        c2: c2(model),
        mu_hat: None,
        moment_holds: false,
        mu_hat_holds: false,
        decay_holds: false,
        decay: Vec::new(),
        holds: false,
        failure: None,
        detail: None,
    };
    let fail = |mut r: Assumption3Report, what: &str, detail: String| {
        r.failure = Some(what.to_string());
        r.detail = Some(detail);
        r
    };
    let Some(c2v) = report.c2 else {
        return fail(report, "moment", "C_2 is infinite".into());
    };
    let s2 = model.sigma * model.sigma;
    let mu_hat = match cumulant_exponent(model, 1.0) {
        Ok(k1) => model.mu + 0.5 * s2 + k1,
        Err(e) => return fail(report, "moment", e.to_string()),
    };
    report.mu_hat = Some(mu_hat);
    report.mu_hat_holds = mu_hat <= 0.0 && mu_hat > -s2 - c2v;
    let transform = if report.mu_hat_holds { build_mmm(market).ok() } else { None };
    let star_interval = match &transform {
        Some(t) => t.star_model().moment_interval(),
        None => {
            let (lo, hi) = model.moment_interval();
            (lo, hi - 1.0)
        }
    };
    report.moment_holds = alpha >= 1.0 && (model.jump_free() || (alpha > star_interval.0 && alpha < star_interval.1));
    if !report.moment_holds {
        let detail = format!("alpha = {alpha} needs alpha >= 1 inside the admissible interval {star_interval:?}");
        return fail(report, "moment", detail);
    }
    let Some(transform) = transform else {
        let detail = format!("mu_hat = {mu_hat:.6e} outside (-sigma^2 - C_2, 0] = ({:.6e}, 0]", -s2 - c2v);
        return fail(report, "mu_hat", detail);
    };
    let star = transform.star_model();
    for frac in [0.0, 0.5, 0.9, 0.99] {
        match check_decay_condition(&star, alpha, frac * market.maturity, market.maturity) {
            Ok(r) => report.decay.push(r),
            Err(e) => return fail(report, "inconclusive", e.to_string()),
        }
    }
    report.decay_holds = report.decay.iter().all(|d| d.holds);
    if !report.decay_holds {
        let worst = report
            .decay
            .iter()
            .flat_map(|d| d.samples.iter())
            .filter(|s| !s.integrable)
            .map(|s| format!("t_bar={:.4}: shell slope {:.3}", s.t_bar, s.shell_slope))
            .next()
            .unwrap_or_default();
        return fail(report, "decay", format!("characteristic function decay not integrable ({worst})"));
    }
    report.holds = true;
    report
}
