//! Martingale representation `f(X_T) = E f(X_T) + int u dW + int int theta dÑ`
//! with `u = sigma dF/dx` and `theta(s, x, y) = F(s, x + y) - F(s, x)`, and
//! its Monte Carlo replication along simulated paths.

use crate::error::{Error, Result};
use crate::fourier::{sum_parts, FourierEngine, Multiplier, QuadratureGrid, UniformContour};
use crate::models::{levy_integral_beyond, LevyExponent, LevyModel};
use crate::payoffs::{DampedPayoff, PayoffDecomposition, PayoffKind};
use crate::quadrature::{self, Tolerance};
use crate::simulator::{PathRecord, Scheme, SimulationLaw, Simulator};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Integrands are evaluated only up to `T - NEAR_MATURITY_FRACTION T`.
pub const NEAR_MATURITY_FRACTION: f64 = 1e-4;

/// How `F` and its derivatives are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegrandRoute {
    /// Contour integrals of the damped transform.
    Fourier,
    /// Polynomial payoffs: exact conditional expectations from the
    /// cumulants of `X_T - X_t`.
    Moments,
}

pub struct RepresentationIntegrands<'a> {
    pub model: &'a LevyModel,
    pub payoff: &'a DampedPayoff,
    pub grid: &'a QuadratureGrid,
    pub maturity: f64,
    /// `E[f(X_T)]` given `X_0 = x0`.
    pub mean: f64,
    pub route: IntegrandRoute,
    engine: Option<FourierEngine<'a, LevyModel>>,
}

pub fn build_integrands<'a>(
    model: &'a LevyModel,
    payoff: &'a DampedPayoff,
    grid: &'a QuadratureGrid,
    maturity: f64,
) -> Result<RepresentationIntegrands<'a>> {
    let polynomial = matches!(payoff.kind, PayoffKind::Polynomial(_)) && payoff.as_constant().is_none();
    let mut r = RepresentationIntegrands {
        model,
        payoff,
        grid,
        maturity,
        mean: 0.0,
        route: if polynomial { IntegrandRoute::Moments } else { IntegrandRoute::Fourier },
        engine: None,
    };
    if !polynomial {
        r.engine = Some(FourierEngine::new(model, payoff, grid, maturity)?);
    }
    r.mean = r.value(0.0, model.x0)?;
    Ok(r)
}

impl RepresentationIntegrands<'_> {
    fn coefficients(&self) -> &[f64] {
        match &self.payoff.kind {
            PayoffKind::Polynomial(c) => c,
            _ => &[],
        }
    }

    /// `F(s, x)`.
    pub fn value(&self, s: f64, x: f64) -> Result<f64> {
        match &self.engine {
            Some(e) => Ok(e.conditional_value(s, x)?.value),
            None => polynomial_conditional(self.coefficients(), self.model, self.maturity - s, x, 0),
        }
    }

    /// Diffusion integrand `sigma dF/dx(s, x)`.
    pub fn u(&self, s: f64, x: f64) -> Result<f64> {
        let sigma = self.model.sigma;
        if sigma == 0.0 {
            return Ok(0.0);
        }
        let dx = match &self.engine {
            Some(e) => e.dF_dx(s, x)?.value,
            None => polynomial_conditional(self.coefficients(), self.model, self.maturity - s, x, 1)?,
        };
        Ok(sigma * dx)
    }

    /// Jump integrand `F(s, x + y) - F(s, x)`.
    pub fn theta(&self, s: f64, x: f64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        match &self.engine {
            Some(e) => Ok(e.jump_difference(s, x, y)?.value),
            None => Ok(self.value(s, x + y)? - self.value(s, x)?),
        }
    }
}

/// Integrands at one time on a set of states.
#[derive(Debug, Clone, Serialize)]
pub struct SurfacePoint {
    pub t: f64,
    pub x: f64,
    pub value: f64,
    pub u: f64,
    /// `theta(t, x, y)` for each requested jump size.
    pub theta: Vec<f64>,
    pub err_estimate: f64,
}

impl RepresentationIntegrands<'_> {
    /// `F`, `u` and `theta` at time `s` for every `x` in `xs`, sharing one
    /// prepared contour per payoff part.
    pub fn surface_slice(&self, s: f64, xs: &[f64], ys: &[f64]) -> Result<Vec<SurfacePoint>> {
        let degenerate = s >= self.maturity || (self.model.jump_free() && self.model.sigma == 0.0);
        let prepared = match &self.engine {
            Some(e) if !degenerate && !xs.is_empty() && self.payoff.as_constant().is_none() => {
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let y_max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
                Some(e.prepare(s, (lo, hi), y_max, false)?)
            }
            _ => None,
        };
        let sigma = self.model.sigma;
        xs.iter()
            .map(|&x| match &prepared {
                Some(c) => {
                    let v = sum_parts(c, x, Multiplier::Value);
                    let u = if sigma == 0.0 { 0.0 } else { sigma * sum_parts(c, x, Multiplier::Dx).value };
                    let theta = ys
                        .iter()
                        .map(|&y| if y == 0.0 { 0.0 } else { sum_parts(c, x, Multiplier::JumpDiff(y)).value })
                        .collect();
                    Ok(SurfacePoint { t: s, x, value: v.value, u, theta, err_estimate: v.error_estimate })
                }
                None => Ok(SurfacePoint {
                    t: s,
                    x,
                    value: self.value(s, x)?,
                    u: self.u(s, x)?,
                    theta: ys.iter().map(|&y| self.theta(s, x, y)).collect::<Result<_>>()?,
                    err_estimate: 0.0,
                }),
            })
            .collect()
    }
}

/// Raw moments `E[Y^k]`, `k = 0..=4`, from the first four cumulants.
pub fn raw_moments(k: [f64; 4]) -> [f64; 5] {
    let [k1, k2, k3, k4] = k;
    [
        1.0,
        k1,
        k2 + k1 * k1,
        k3 + 3.0 * k2 * k1 + k1.powi(3),
        k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1.powi(4),
    ]
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `d^order/dx^order E[p(x + X_T - X_t)]` for a polynomial of degree <= 4.
pub fn polynomial_conditional(coeffs: &[f64], model: &LevyModel, tau: f64, x: f64, order: usize) -> Result<f64> {
    if coeffs.len() > 5 {
        return Err(Error::Domain("conditional-expectation route supports degree <= 4".into()));
    }
    if tau < 0.0 {
        return Err(Error::Domain(format!("time to maturity {tau} is negative")));
    }
    let c = model.cumulants()?;
    let m = raw_moments([c[0] * tau, c[1] * tau, c[2] * tau, c[3] * tau]);
    // p^{(order)}(x + Y) = sum_n a_n n!/(n-order)! (x + Y)^{n - order}
    let mut total = 0.0;
    for (n, a) in coeffs.iter().enumerate() {
        if n < order || *a == 0.0 {
            continue;
        }
        let falling: f64 = (0..order).map(|j| (n - j) as f64).product();
        let d = n - order;
        let mut e = 0.0;
        for j in 0..=d {
            e += binomial(d, j) * x.powi((d - j) as i32) * m[j];
        }
        total += a * falling * e;
    }
    Ok(total)
}

/// Monte Carlo route for the same integrands: `u = sigma E[f'(x + Y)]`,
/// `theta = E[f(x + y + Y) - f(x + Y)]` with `Y = X_T - X_s` sampled
/// exactly. Returns `(value, standard error)` pairs for `u` and `theta`.
pub fn polynomial_integrands_mc(
    coeffs: &[f64],
    model: &LevyModel,
    tau: f64,
    x: f64,
    y: f64,
    n: usize,
    seed: u64,
) -> Result<((f64, f64), (f64, f64))> {
    let law = SimulationLaw { x0: 0.0, ..SimulationLaw::physical(model) };
    let samples = crate::simulator::sample_terminal(&law, tau, n, seed)?;
    let p = |v: f64| coeffs.iter().rev().fold(0.0, |acc, a| acc * v + a);
    let dp = |v: f64| coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, a)| acc * v + k as f64 * a);
    let u: Vec<f64> = samples.iter().map(|s| model.sigma * dp(x + s)).collect();
    let th: Vec<f64> = samples.iter().map(|s| p(x + y + s) - p(x + s)).collect();
    Ok((mean_se(&u), mean_se(&th)))
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// `int_{|y| >= eps} (e^{-z y} - 1) nu(dy)` on a contour, built from
/// `J(iz) = int (e^{-zy} - 1 + zy) nu(dy)` minus the small-jump part
/// (power series in `z`) and the drift of the large jumps.
#[derive(Debug, Clone)]
pub struct TruncatedJumpTransform {
    pub eps: f64,
    /// `int_{|y| >= eps} y nu(dy)`.
    pub large_mean: f64,
    /// `int_{|y| < eps} y^n nu(dy) / n!` for `n = 2, 3, ...`.
    small_moments: Vec<f64>,
}

const SMALL_SERIES_TERMS: usize = 120;

impl TruncatedJumpTransform {
    pub fn new<E: LevyExponent + ?Sized>(model: &E, eps: f64) -> Result<Self> {
        if model.jump_free() {
            return Ok(TruncatedJumpTransform { eps, large_mean: 0.0, small_moments: Vec::new() });
        }
        let large_mean = levy_integral_beyond(model, eps, |y| y)?;
        let mut small_moments = Vec::new();
        if eps > 0.0 {
            let tol = Tolerance::new(1e-300, 1e-12);
            let mut fact = 1.0;
            for n in 2..SMALL_SERIES_TERMS {
                fact *= n as f64;
                let up = quadrature::integral_towards_zero(|y| y.powi(n as i32) * model.levy_density(y), eps, tol)?.value;
                let down =
                    quadrature::integral_towards_zero(|y| y.powi(n as i32) * model.levy_density(-y), eps, tol)?.value;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                small_moments.push((up + sign * down) / fact);
            }
        }
        Ok(TruncatedJumpTransform { eps, large_mean, small_moments })
    }

    /// `int_{|y| < eps} (e^{-zy} - 1 + zy) nu(dy)`.
    pub fn small_part(&self, z: Complex64) -> Result<Complex64> {
        if self.small_moments.is_empty() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if z.norm() * self.eps > 40.0 {
            return Err(Error::Truncation(format!(
                "|z| eps = {:.1} too large for the small-jump series",
                z.norm() * self.eps
            )));
        }
        let w = -z;
        let mut acc = Complex64::new(0.0, 0.0);
        for m in self.small_moments.iter().rev() {
            acc = (acc + m) * w;
        }
        Ok(acc * w)
    }

    /// Given `J(iz)`, returns `int_{|y| >= eps} (e^{-zy} - 1) nu(dy)`.
    pub fn eval(&self, z: Complex64, j_iz: Complex64) -> Result<Complex64> {
        Ok(j_iz - self.small_part(z)? - z * self.large_mean)
    }
}

/// `J(i z)` from `psi(i z)`.
pub fn jump_part_from_psi<E: LevyExponent + ?Sized>(model: &E, z: Complex64, psi: Complex64) -> Complex64 {
    let s = model.sigma();
    psi - (-z * model.drift() + 0.5 * s * s * z * z)
}

/// Truncation level used for a simulator's jumps (0 for exact schemes).
pub fn scheme_epsilon(sim: &Simulator) -> f64 {
    match sim.scheme {
        Scheme::CompoundPoisson => 0.0,
        Scheme::Truncated { epsilon, .. } => epsilon,
    }
}

/// Step start times `t_i = i T / n`, checked against the near-maturity
/// cutoff.
pub fn step_times(maturity: f64, n_steps: usize) -> Result<Vec<f64>> {
    let dt = maturity / n_steps as f64;
    if dt < NEAR_MATURITY_FRACTION * maturity {
        return Err(Error::Scheme(format!(
            "time step {dt:.3e} is below the near-maturity cutoff {:.3e}",
            NEAR_MATURITY_FRACTION * maturity
        )));
    }
    Ok((0..n_steps).map(|i| i as f64 * dt).collect())
}

/// Replication along one path with the pointwise engine. Slow; meant for
/// few paths. The batch [`ReplicationPlan`] gives the same numbers.
pub fn replicate_on_path(integrands: &RepresentationIntegrands<'_>, path: &PathRecord, eps: f64) -> Result<f64> {
    let n = path.n_steps();
    step_times(integrands.maturity, n)?;
    let model = integrands.model;
    let mut total = integrands.mean;
    let mut jumps = path.jump_marks.iter().peekable();
    for i in 0..n {
        let (t, x) = (path.times[i], path.x_values[i]);
        let dt = path.times[i + 1] - t;
        if model.sigma > 0.0 {
            total += integrands.u(t, x)? * path.brownian_increments[i];
        }
        while let Some(j) = jumps.peek() {
            if j.step != i {
                break;
            }
            total += integrands.theta(t, j.x_left, j.size)?;
            jumps.next();
        }
        if !model.jump_free() {
            // int_{|y| >= eps} theta nu(dy) by quadrature in y
            let c = levy_integral_beyond(model, eps, |y| integrands.theta(t, x, y).unwrap_or(f64::NAN))?;
            total -= dt * c;
            let dz = path.small_jump_increments[i];
            if dz != 0.0 {
                let fx = match &integrands.engine {
                    Some(e) => e.dF_dx(t, x)?.value,
                    None => polynomial_conditional(integrands.coefficients(), model, integrands.maturity - t, x, 1)?,
                };
                total += fx * dz;
            }
        }
    }
    Ok(total)
}

struct ReplicationStep {
    t: f64,
    dt: f64,
    parts: Vec<(f64, UniformContour)>,
    /// per part: value, sigma dF/dx, dF/dx, compensator weights
    weights: Vec<[Vec<Complex64>; 4]>,
}

/// Prepared contours for every step of a fixed time grid, shared by all
/// paths.
pub struct ReplicationPlan<'a> {
    pub integrands: &'a RepresentationIntegrands<'a>,
    pub n_steps: usize,
    pub state_range: (f64, f64),
    pub y_max: f64,
    pub eps: f64,
    steps: Vec<ReplicationStep>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReplicationOutcome {
    pub claim: f64,
    pub replication: f64,
    /// Steps evaluated with the pointwise engine because the state left the
    /// prepared range.
    pub fallbacks: usize,
}

impl<'a> ReplicationPlan<'a> {
    /// `state_range` bounds `X` at step starts, `y_max` the jump sizes.
    pub fn new(
        integrands: &'a RepresentationIntegrands<'a>,
        n_steps: usize,
        state_range: (f64, f64),
        y_max: f64,
        eps: f64,
    ) -> Result<Self> {
        if integrands.route != IntegrandRoute::Fourier {
            return Err(Error::Domain("batch replication needs the Fourier route".into()));
        }
        let model = integrands.model;
        let maturity = integrands.maturity;
        let times = step_times(maturity, n_steps)?;
        let dt = maturity / n_steps as f64;
        let jt = TruncatedJumpTransform::new(model, eps)?;
        let decomposition = PayoffDecomposition::expand(integrands.payoff);
        let engine = integrands.engine.as_ref().unwrap();
        let shift = (state_range.0 - y_max, state_range.1 + y_max);
        let steps: Result<Vec<ReplicationStep>> = times
            .par_iter()
            .map(|&t| {
                let mut parts = Vec::new();
                let mut weights = Vec::new();
                if integrands.payoff.as_constant().is_none() {
                    for (sign, part) in &decomposition.parts {
                        let alpha = engine.part_alpha(part);
                        let c = UniformContour::prepare(model, part, alpha, t, maturity, shift, 1e-12, integrands.grid.v_cap)?;
                        let w_val = c.weights(|_, _| Complex64::new(1.0, 0.0));
                        let w_dx = c.weights(|z, _| -z);
                        let w_u = c.weights(|z, _| -z * model.sigma);
                        let mut w_comp = Vec::with_capacity(c.len());
                        for ((z, b), p) in c.z.iter().zip(&c.base).zip(&c.psi) {
                            w_comp.push(b * jt.eval(*z, jump_part_from_psi(model, *z, *p))?);
                        }
                        weights.push([w_val, w_u, w_dx, w_comp]);
                        parts.push((*sign, c));
                    }
                }
                Ok(ReplicationStep { t, dt, parts, weights })
            })
            .collect();
        Ok(ReplicationPlan { integrands, n_steps, state_range, y_max, eps, steps: steps? })
    }

    pub fn total_nodes(&self) -> usize {
        self.steps.iter().flat_map(|s| s.parts.iter().map(|p| p.1.len())).sum()
    }

    fn in_range(&self, x: f64) -> bool {
        x >= self.state_range.0 && x <= self.state_range.1
    }

    pub fn replicate(&self, path: &PathRecord) -> Result<ReplicationOutcome> {
        if path.n_steps() != self.n_steps {
            return Err(Error::Scheme(format!("path has {} steps, plan has {}", path.n_steps(), self.n_steps)));
        }
        let it = self.integrands;
        let mut total = it.mean;
        let mut fallbacks = 0;
        let mut jumps = path.jump_marks.iter().peekable();
        let mut out = [0.0; 4];
        for (i, step) in self.steps.iter().enumerate() {
            let x = path.x_values[i];
            let (mut u, mut fx, mut comp) = (0.0, 0.0, 0.0);
            let in_range = self.in_range(x);
            if in_range {
                for ((sign, c), w) in step.parts.iter().zip(&step.weights) {
                    c.evaluate_many(x, &[&w[1], &w[2], &w[3]], &mut out);
                    u += sign * out[0];
                    fx += sign * out[1];
                    comp += sign * out[2];
                }
            } else if !step.parts.is_empty() {
                fallbacks += 1;
                u = it.u(step.t, x)?;
                fx = if it.model.sigma > 0.0 { u / it.model.sigma } else { it.engine.as_ref().unwrap().dF_dx(step.t, x)?.value };
                comp = levy_integral_beyond(it.model, self.eps, |y| it.theta(step.t, x, y).unwrap_or(f64::NAN))?;
            }
            total += u * path.brownian_increments[i] - step.dt * comp + fx * path.small_jump_increments[i];
            while let Some(j) = jumps.peek() {
                if j.step != i {
                    break;
                }
                total += self.jump_term(step, j.x_left, j.size)?;
                jumps.next();
            }
        }
        Ok(ReplicationOutcome { claim: it.payoff_value(path.terminal()), replication: total, fallbacks })
    }

    fn jump_term(&self, step: &ReplicationStep, x: f64, y: f64) -> Result<f64> {
        if step.parts.is_empty() {
            return Ok(0.0);
        }
        let covered = |s: f64| s >= self.state_range.0 - self.y_max && s <= self.state_range.1 + self.y_max;
        if !(covered(x) && covered(x + y)) {
            return self.integrands.theta(step.t, x, y);
        }
        let mut d = 0.0;
        for ((sign, c), w) in step.parts.iter().zip(&step.weights) {
            d += sign * (c.evaluate(x + y, &w[0]) - c.evaluate(x, &w[0]));
        }
        Ok(d)
    }
}

impl RepresentationIntegrands<'_> {
    pub fn payoff_value(&self, x: f64) -> f64 {
        PayoffDecomposition::expand(self.payoff).value(x)
    }
}

/// Replication study summary.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationReport {
    pub n_paths: usize,
    pub n_steps: usize,
    pub mse: f64,
    pub mean_claim: f64,
    pub mean_replication: f64,
    /// Standard error of `mean_replication`.
    pub se: f64,
    /// Standard error of `mse`.
    pub mse_se: f64,
    pub analytic_mean: f64,
    pub fallbacks: usize,
}

pub fn summarize(outcomes: &[ReplicationOutcome], n_steps: usize, analytic_mean: f64) -> ReplicationReport {
    let claims: Vec<f64> = outcomes.iter().map(|o| o.claim).collect();
    let reps: Vec<f64> = outcomes.iter().map(|o| o.replication).collect();
    let sq: Vec<f64> = outcomes.iter().map(|o| (o.claim - o.replication).powi(2)).collect();
    let (mean_claim, _) = mean_se(&claims);
    let (mean_replication, se) = mean_se(&reps);
    let (mse, mse_se) = mean_se(&sq);
    ReplicationReport {
        n_paths: outcomes.len(),
        n_steps,
        mse,
        mean_claim,
        mean_replication,
        se,
        mse_se,
        analytic_mean,
        fallbacks: outcomes.iter().map(|o| o.fallbacks).sum(),
    }
}

/// Prepared state range for paths of `law` over `[0, T]`: the mean path
/// plus or minus ten standard deviations of `X_T`, padded by the jump
/// extent.
pub fn default_state_range(model: &LevyModel, maturity: f64) -> Result<((f64, f64), f64)> {
    let c = model.cumulants()?;
    let sd = (c[1] * maturity).sqrt();
    let drift = c[0] * maturity;
    let y_max = if model.jump_free() { 0.0 } else { crate::models::jump_extent(model, 1e-12) };
    let lo = model.x0 + drift.min(0.0) - 10.0 * sd;
    let hi = model.x0 + drift.max(0.0) + 10.0 * sd;
    Ok(((lo, hi), y_max))
}

/// Replication study over a common set of fine paths, coarsened to each
/// requested step count (common random numbers).
pub fn replication_study(
    integrands: &RepresentationIntegrands<'_>,
    n_paths: usize,
    step_counts: &[usize],
    seed: u64,
    epsilon_jump: f64,
) -> Result<Vec<ReplicationReport>> {
    let finest = *step_counts.iter().max().ok_or_else(|| Error::Parameter("no step counts".into()))?;
    if step_counts.iter().any(|n| *n == 0 || finest % n != 0) {
        return Err(Error::Parameter(format!("step counts {step_counts:?} must divide {finest}")));
    }
    let law = SimulationLaw::physical(integrands.model);
    let sim = Simulator::new(law, integrands.maturity, finest, seed, epsilon_jump)?;
    let eps = scheme_epsilon(&sim);
    let (range, y_max) = default_state_range(integrands.model, integrands.maturity)?;
    let mut reports = Vec::new();
    for &n in step_counts {
        let plan = ReplicationPlan::new(integrands, n, range, y_max, eps)?;
        let factor = finest / n;
        let outcomes: Result<Vec<ReplicationOutcome>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let p = sim.path(k);
                let p = if factor == 1 { p } else { p.coarsen(factor)? };
                plan.replicate(&p)
            })
            .collect();
        reports.push(summarize(&outcomes?, n, integrands.mean));
    }
    Ok(reports)
}
