//! Locally risk-minimizing hedge of the digital `1_{S_T >= K}`.
//!
//! With `c = log K - r T` and `F*(t, x) = P~(X_T - X_t >= c - x)`:
//! `kappa_t = p*_t(c - X_t)`, `Psi*_t(x) = F*(t, X_t + x) - F*(t, X_t)` and
//! `xi_t = e^{-rT} (kappa_t sigma^2 + int Psi*_t(x)(e^x - 1) nu(dx)) / (S^_t- (sigma^2 + C_2))`.
//!
//! The `nu`-integral is a single contour integral with multiplier
//! `K(1 - z) - K(-z) - K(1)`, `K(u) = int (e^{ux} - 1 - ux) nu(dx)`.

use crate::error::{Error, Result};
use crate::fourier::{sum_parts, FourierEngine, Multiplier, PreparedContour, QuadratureGrid, UniformContour};
use crate::mmm::{MarketSpec, MmmTransform, StarModel};
use crate::models::{jump_extent, levy_integral_beyond, LevyExponent};
use crate::payoffs::DampedPayoff;
use crate::quadrature::{self, Tolerance};
use crate::representation::{default_state_range, mean_se, scheme_epsilon, step_times, TruncatedJumpTransform};
use crate::simulator::{Measure, PathRecord, SimulationLaw, Simulator};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Perturbation of the negative control in the orthogonality study.
pub const NEGATIVE_CONTROL_SCALE: f64 = 1.1;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HedgeComponents {
    pub kappa: f64,
    /// `int Psi*(K, x) (e^x - 1) nu(dx)`.
    pub nu_integral: f64,
    pub xi: f64,
    pub err_estimate: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HedgeState {
    pub t: f64,
    pub x_t: f64,
    pub s_hat: f64,
    pub xi: f64,
    pub eta: f64,
    pub l_fs: f64,
    pub v_hat: f64,
}

/// Hedging data for one market under its minimal martingale measure.
pub struct LrmHedger<'a> {
    pub market: &'a MarketSpec,
    pub transform: &'a MmmTransform,
    pub grid: &'a QuadratureGrid,
    pub star: StarModel,
    pub payoff: DampedPayoff,
    pub alpha: f64,
    discount: f64,
}

impl<'a> LrmHedger<'a> {
    /// Uses the grid's damping exponent.
    pub fn new(market: &'a MarketSpec, transform: &'a MmmTransform, grid: &'a QuadratureGrid) -> Result<Self> {
        let alpha = grid.alpha;
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("digital hedging needs alpha > 0, got {alpha}")));
        }
        let star = transform.star_model();
        let model = &market.model;
        if !model.jump_free() {
            let (_, hi) = model.moment_interval();
            if !(1.0 + alpha < hi) {
                return Err(Error::Domain(format!(
                    "nu-integral multiplier needs 1 + alpha < {hi} (alpha = {alpha})"
                )));
            }
        }
        star.check_domain(Complex64::new(0.0, -alpha))?;
        Ok(LrmHedger {
            market,
            transform,
            grid,
            star,
            payoff: DampedPayoff::digital(market.log_threshold(), alpha),
            alpha,
            discount: (-market.r * market.maturity).exp(),
        })
    }

    fn engine(&self) -> Result<FourierEngine<'_, StarModel>> {
        FourierEngine::new(&self.star, &self.payoff, self.grid, self.market.maturity)
    }

    /// `K(1 - z) - K(-z) - K(1)` for the physical Lévy measure.
    pub fn xi_multiplier(&self, z: Complex64) -> Result<Complex64> {
        let model = &self.market.model;
        if model.jump_free() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let k = |u: Complex64| model.jump_exponent(-I * u);
        Ok(k(1.0 - z)? - k(-z)? - k(Complex64::new(1.0, 0.0))?)
    }

    /// `F*(t, x)`.
    pub fn f_star(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.engine()?.conditional_value(t, x)?.value)
    }

    /// `Psi*_t(K, y)` at state `x`.
    pub fn psi_star(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.engine()?.jump_difference(t, x, y)?.value)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t < self.market.maturity) {
            return Err(Error::Domain(format!("hedge needs 0 <= t < T, got t={t}")));
        }
        Ok(())
    }

    fn nu_integral_on(&self, contours: &[(f64, PreparedContour)], x: f64) -> Result<crate::fourier::EngineValue> {
        let mut acc: Option<crate::fourier::EngineValue> = None;
        for (sign, c) in contours {
            let factors: Vec<Complex64> = c.nodes.iter().map(|n| self.xi_multiplier(n.z)).collect::<Result<_>>()?;
            let mut v = c.evaluate_with(x, |k, _| factors[k]);
            v.value *= sign;
            acc = Some(match acc {
                None => v,
                Some(a) => crate::fourier::EngineValue {
                    value: a.value + v.value,
                    error_estimate: a.error_estimate + v.error_estimate,
                    ..a
                },
            });
        }
        acc.ok_or_else(|| Error::Domain("no contour".into()))
    }

    fn components_from(&self, contours: &[(f64, PreparedContour)], x: f64, s_hat: f64) -> Result<HedgeComponents> {
        let kappa = sum_parts(contours, x, Multiplier::Dx);
        let nu = self.nu_integral_on(contours, x)?;
        let s2 = self.market.model.sigma.powi(2);
        let denom = s_hat * (s2 + self.transform.c2);
        let xi = self.discount * (kappa.value * s2 + nu.value) / denom;
        let err = self.discount * (kappa.error_estimate * s2 + nu.error_estimate) / denom;
        Ok(HedgeComponents { kappa: kappa.value, nu_integral: nu.value, xi, err_estimate: err })
    }

    /// `kappa`, the `nu`-integral and `xi` at `(t, x)` with `S^_{t-} = s_hat`.
    pub fn components(&self, t: f64, x: f64, s_hat: f64) -> Result<HedgeComponents> {
        self.check_time(t)?;
        let contours = self.engine()?.prepare(t, (x, x), 0.0, false)?;
        self.components_from(&contours, x, s_hat)
    }

    /// Oracle for the `nu`-integral: quadrature in `y` of
    /// `(F*(t, x + y) - F*(t, x)) (e^y - 1) nu(dy)` with single-contour
    /// jump differences. Jumps below `1e-4` use `Psi* ~ y dF*/dx`.
    pub fn nu_integral_bruteforce(&self, t: f64, x: f64) -> Result<f64> {
        self.check_time(t)?;
        let model = &self.market.model;
        if model.jump_free() {
            return Ok(0.0);
        }
        let y_max = exp_weighted_extent(model, 1e-13);
        let engine = self.engine()?;
        let contours = engine.prepare(t, (x, x), y_max, false)?;
        let fx = sum_parts(&contours, x, Multiplier::Dx).value;
        let inner = 1e-4;
        let g = |y: f64| {
            let nu = model.levy_density(y);
            if nu == 0.0 {
                return 0.0;
            }
            sum_parts(&contours, x, Multiplier::JumpDiff(y)).value * y.exp_m1() * nu
        };
        let tol = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 4000 };
        let mut total = 0.0;
        for side in [1.0, -1.0] {
            let mut edges = vec![inner];
            let mut e = inner;
            while e < y_max {
                e = (2.0 * e).min(y_max);
                edges.push(e);
            }
            for b in model.breakpoints().into_iter().chain(std::iter::once(self.payoff.center() - x)) {
                if b * side > inner && b * side < y_max {
                    edges.push(b * side);
                }
            }
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in edges.windows(2) {
                total += quadrature::adaptive(|u| g(side * u), w[0], w[1], tol)?.value;
            }
        }
        // Psi*(y)(e^y - 1) ~ F*_x y^2 on |y| < inner
        let small = quadrature::integral_towards_zero(|y| y * y * model.levy_density(y), inner, Tolerance::new(1e-16, 1e-10))?
            .value
            + quadrature::integral_towards_zero(|y| y * y * model.levy_density(-y), inner, Tolerance::new(1e-16, 1e-10))?
                .value;
        Ok(total + fx * small)
    }

    /// Hedge ratios on `n_t` times `t_i = i T / n_t` and `n_s` log-spaced
    /// prices in `[K/2, 2K]`.
    pub fn hedge_grid(&self, n_t: usize, n_s: usize) -> Result<Vec<HedgeRow>> {
        let m = self.market;
        let k = m.strike;
        let prices: Vec<f64> = (0..n_s)
            .map(|j| {
                let w = if n_s == 1 { 0.5 } else { j as f64 / (n_s - 1) as f64 };
                k * 0.5 * 4f64.powf(w)
            })
            .collect();
        let rows: Result<Vec<Vec<HedgeRow>>> = (0..n_t)
            .into_par_iter()
            .map(|i| {
                let t = i as f64 * m.maturity / n_t as f64;
                let xs: Vec<f64> = prices.iter().map(|s| s.ln() - m.r * t).collect();
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let contours = self.engine()?.prepare(t, (lo, hi), 0.0, false)?;
                prices
                    .iter()
                    .zip(&xs)
                    .map(|(&s, &x)| {
                        let c = self.components_from(&contours, x, m.discounted_price(x))?;
                        Ok(HedgeRow { t, s, xi: c.xi, kappa: c.kappa, nu_integral: c.nu_integral, err_estimate: c.err_estimate })
                    })
                    .collect()
            })
            .collect();
        Ok(rows?.into_iter().flatten().collect())
    }
}

/// `xi^H_t` for the digital.
pub fn lrm_xi(
    market: &MarketSpec,
    transform: &MmmTransform,
    grid: &QuadratureGrid,
    t: f64,
    x_t: f64,
    s_hat_minus: f64,
) -> Result<f64> {
    Ok(LrmHedger::new(market, transform, grid)?.components(t, x_t, s_hat_minus)?.xi)
}

/// Smallest power of two `Y` with `int_{|y|>Y} (1 + e^y) nu(dy) <= tol`.
fn exp_weighted_extent<E: LevyExponent + ?Sized>(model: &E, tol: f64) -> f64 {
    let mut y: f64 = jump_extent(model, tol).max(1.0);
    while y < 1024.0 {
        let f = |x: f64| (1.0 + x.exp()) * model.levy_density(x);
        let tail: f64 = [true, false]
            .iter()
            .map(|&up| {
                quadrature::adaptive_semi_infinite(f, if up { y } else { -y }, up, Tolerance::new(tol * 1e-2, 1e-6))
                    .map(|e| e.value)
                    .unwrap_or(f64::INFINITY)
            })
            .sum();
        if tail <= tol {
            return y;
        }
        y *= 2.0;
    }
    y
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HedgeRow {
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub xi: f64,
    pub kappa: f64,
    pub nu_integral: f64,
    pub err_estimate: f64,
}

struct FsStep {
    t: f64,
    dt: f64,
    contour: Option<UniformContour>,
    /// value, dF*/dx, Xi multiplier, large-jump compensator
    weights: [Vec<Complex64>; 4],
}

/// Per-path result of the decomposition study.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FsOutcome {
    /// `L^H_T`.
    pub l_terminal: f64,
    /// `sum Delta L^H Delta M^`.
    pub bracket: f64,
    /// Same bracket with `xi` scaled by the negative-control factor.
    pub bracket_perturbed: f64,
    /// `e^{-rT} 1_{S_T >= K} - (H^_0 + int xi dS^ + L^H_T)`.
    pub identity_error: f64,
    pub max_abs_l: f64,
    pub fallbacks: usize,
}

/// Prepared contours of `F*` on a time grid, shared by all paths.
pub struct FsPlan<'a> {
    pub hedger: &'a LrmHedger<'a>,
    pub n_steps: usize,
    pub state_range: (f64, f64),
    pub y_max: f64,
    pub eps: f64,
    /// `e^{-rT} F*(0, x0)`.
    pub h0: f64,
    /// `int_{|x| >= eps} (e^x - 1) nu(dx)`.
    large_exp_mean: f64,
    steps: Vec<FsStep>,
}

impl<'a> FsPlan<'a> {
    pub fn new(hedger: &'a LrmHedger<'a>, n_steps: usize, state_range: (f64, f64), y_max: f64, eps: f64) -> Result<Self> {
        let m = hedger.market;
        let model = &m.model;
        let maturity = m.maturity;
        let times = step_times(maturity, n_steps)?;
        let dt = maturity / n_steps as f64;
        let jt = TruncatedJumpTransform::new(model, eps)?;
        let shift = (state_range.0 - y_max, state_range.1 + y_max);
        let steps: Result<Vec<FsStep>> = times
            .par_iter()
            .map(|&t| {
                let c = UniformContour::prepare(
                    &hedger.star,
                    &hedger.payoff,
                    hedger.alpha,
                    t,
                    maturity,
                    shift,
                    1e-12,
                    hedger.grid.v_cap,
                )?;
                let w_val = c.weights(|_, _| Complex64::new(1.0, 0.0));
                let w_dx = c.weights(|z, _| -z);
                let mut w_xi = Vec::with_capacity(c.len());
                let mut w_comp = Vec::with_capacity(c.len());
                for (z, b) in c.z.iter().zip(&c.base) {
                    w_xi.push(b * hedger.xi_multiplier(*z)?);
                    let j = if model.jump_free() { Complex64::new(0.0, 0.0) } else { model.jump_exponent(I * z)? };
                    w_comp.push(b * jt.eval(*z, j)?);
                }
                Ok(FsStep { t, dt, contour: Some(c), weights: [w_val, w_dx, w_xi, w_comp] })
            })
            .collect();
        let large_exp_mean = if model.jump_free() { 0.0 } else { levy_integral_beyond(model, eps, |x| x.exp_m1())? };
        let h0 = hedger.discount * hedger.f_star(0.0, model.x0)?;
        Ok(FsPlan { hedger, n_steps, state_range, y_max, eps, h0, large_exp_mean, steps: steps? })
    }

    fn covered(&self, s: f64) -> bool {
        s >= self.state_range.0 - self.y_max && s <= self.state_range.1 + self.y_max
    }

    /// `(kappa, nu-integral, compensator)` at a step.
    fn step_values(&self, step: &FsStep, x: f64) -> Result<(f64, f64, f64)> {
        let c = step.contour.as_ref().unwrap();
        if x >= self.state_range.0 && x <= self.state_range.1 {
            let mut out = [0.0; 3];
            c.evaluate_many(x, &[&step.weights[1], &step.weights[2], &step.weights[3]], &mut out);
            return Ok((out[0], out[1], out[2]));
        }
        let h = self.hedger;
        let comp = h.components(step.t, x, 1.0)?;
        let model = &h.market.model;
        let engine = h.engine()?;
        let lam = levy_integral_beyond(model, self.eps, |y| {
            engine.jump_difference(step.t, x, y).map(|v| v.value).unwrap_or(f64::NAN)
        })?;
        Ok((comp.kappa, comp.nu_integral, lam))
    }

    fn psi(&self, step: &FsStep, x: f64, y: f64) -> Result<f64> {
        if self.covered(x) && self.covered(x + y) {
            let c = step.contour.as_ref().unwrap();
            return Ok(c.evaluate(x + y, &step.weights[0]) - c.evaluate(x, &step.weights[0]));
        }
        self.hedger.psi_star(step.t, x, y)
    }

    /// Runs one physical path; optionally records the strategy.
    pub fn run(&self, path: &PathRecord, record: bool) -> Result<(FsOutcome, Option<Vec<HedgeState>>)> {
        if path.measure != Measure::Physical {
            return Err(Error::Parameter("decomposition study needs physical paths".into()));
        }
        if path.n_steps() != self.n_steps {
            return Err(Error::Scheme(format!("path has {} steps, plan has {}", path.n_steps(), self.n_steps)));
        }
        let h = self.hedger;
        let m = h.market;
        let sigma = m.model.sigma;
        let s2 = sigma * sigma;
        let c2 = h.transform.c2;
        let disc = h.discount;
        let mut gains = 0.0;
        let mut l = 0.0;
        let mut bracket = 0.0;
        let mut bracket_p = 0.0;
        let mut max_abs_l: f64 = 0.0;
        let mut fallbacks = 0;
        let mut states = record.then(Vec::new);
        let mut jumps = path.jump_marks.iter().peekable();
        for (i, step) in self.steps.iter().enumerate() {
            let x = path.x_values[i];
            let s_hat = m.discounted_price(x);
            if !(x >= self.state_range.0 && x <= self.state_range.1) {
                fallbacks += 1;
            }
            let (kappa, nu_int, lam) = self.step_values(step, x)?;
            let xi = disc * (kappa * s2 + nu_int) / (s_hat * (s2 + c2));
            if let Some(st) = states.as_mut() {
                st.push(HedgeState {
                    t: step.t,
                    x_t: x,
                    s_hat,
                    xi,
                    eta: self.h0 + gains + l - xi * s_hat,
                    l_fs: l,
                    v_hat: self.h0 + gains + l,
                });
            }
            let dw = path.brownian_increments[i];
            let dz = path.small_jump_increments[i];
            let dt = step.dt;
            // martingale part of S^ and the two candidate L increments
            let mut dm = s_hat * (sigma * dw + dz - dt * self.large_exp_mean);
            let base_l = disc * kappa * (sigma * dw + dz) - dt * disc * lam;
            let hedge_l = s_hat * (sigma * dw + dz) - dt * s_hat * self.large_exp_mean;
            let mut dl_jump = 0.0;
            let mut hedge_jump = 0.0;
            while let Some(j) = jumps.peek() {
                if j.step != i {
                    break;
                }
                let left = m.discounted_price(j.x_left);
                let psi = self.psi(step, j.x_left, j.size)?;
                dl_jump += disc * psi;
                hedge_jump += left * j.size.exp_m1();
                dm += left * j.size.exp_m1();
                jumps.next();
            }
            let dl = base_l + dl_jump - xi * (hedge_l + hedge_jump);
            let dl_p = base_l + dl_jump - NEGATIVE_CONTROL_SCALE * xi * (hedge_l + hedge_jump);
            bracket += dl * dm;
            bracket_p += dl_p * dm;
            l += dl;
            max_abs_l = max_abs_l.max(l.abs());
            gains += xi * (m.discounted_price(path.x_values[i + 1]) - s_hat);
        }
        let claim = if path.terminal() >= m.log_threshold() { disc } else { 0.0 };
        let identity_error = claim - (self.h0 + gains + l);
        if let Some(st) = states.as_mut() {
            let x = path.terminal();
            st.push(HedgeState {
                t: m.maturity,
                x_t: x,
                s_hat: m.discounted_price(x),
                xi: 0.0,
                eta: self.h0 + gains + l,
                l_fs: l,
                v_hat: self.h0 + gains + l,
            });
        }
        Ok((
            FsOutcome { l_terminal: l, bracket, bracket_perturbed: bracket_p, identity_error, max_abs_l, fallbacks },
            states,
        ))
    }
}

/// Summary of the decomposition and orthogonality study.
#[derive(Debug, Clone, Serialize)]
pub struct FsReport {
    pub n_paths: usize,
    pub n_steps: usize,
    pub h0: f64,
    pub mean_l: f64,
    pub se_l: f64,
    pub mean_bracket: f64,
    pub se_bracket: f64,
    pub mean_bracket_perturbed: f64,
    pub se_bracket_perturbed: f64,
    pub identity_mse: f64,
    pub identity_mse_se: f64,
    pub max_abs_l: f64,
    pub fallbacks: usize,
}

pub fn summarize_fs(outcomes: &[FsOutcome], n_steps: usize, h0: f64) -> FsReport {
    let col = |f: fn(&FsOutcome) -> f64| -> Vec<f64> { outcomes.iter().map(f).collect() };
    let (mean_l, se_l) = mean_se(&col(|o| o.l_terminal));
    let (mean_bracket, se_bracket) = mean_se(&col(|o| o.bracket));
    let (mean_bracket_perturbed, se_bracket_perturbed) = mean_se(&col(|o| o.bracket_perturbed));
    let (identity_mse, identity_mse_se) = mean_se(&col(|o| o.identity_error * o.identity_error));
    FsReport {
        n_paths: outcomes.len(),
        n_steps,
        h0,
        mean_l,
        se_l,
        mean_bracket,
        se_bracket,
        mean_bracket_perturbed,
        se_bracket_perturbed,
        identity_mse,
        identity_mse_se,
        max_abs_l: outcomes.iter().map(|o| o.max_abs_l).fold(0.0, f64::max),
        fallbacks: outcomes.iter().map(|o| o.fallbacks).sum(),
    }
}

/// Decomposition study on `n_paths` physical paths for each step count
/// (common random numbers through coarsening).
pub fn fs_study(
    hedger: &LrmHedger<'_>,
    n_paths: usize,
    step_counts: &[usize],
    seed: u64,
    epsilon_jump: f64,
) -> Result<Vec<FsReport>> {
    let finest = *step_counts.iter().max().ok_or_else(|| Error::Parameter("no step counts".into()))?;
    if step_counts.iter().any(|n| *n == 0 || finest % n != 0) {
        return Err(Error::Parameter(format!("step counts {step_counts:?} must divide {finest}")));
    }
    let model = &hedger.market.model;
    let sim = Simulator::new(SimulationLaw::physical(model), hedger.market.maturity, finest, seed, epsilon_jump)?;
    let eps = scheme_epsilon(&sim);
    let (range, y_max) = default_state_range(model, hedger.market.maturity)?;
    let mut out = Vec::new();
    for &n in step_counts {
        let plan = FsPlan::new(hedger, n, range, y_max, eps)?;
        let factor = finest / n;
        let outcomes: Result<Vec<FsOutcome>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let p = sim.path(k);
                let p = if factor == 1 { p } else { p.coarsen(factor)? };
                Ok(plan.run(&p, false)?.0)
            })
            .collect();
        out.push(summarize_fs(&outcomes?, n, plan.h0));
    }
    Ok(out)
}

/// Orthogonality statistic: mean and standard error of `[L^H, M^]_T`.
pub fn orthogonality_check(
    hedger: &LrmHedger<'_>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let r = fs_study(hedger, n_paths, &[n_steps], seed, crate::simulator::DEFAULT_EPSILON_JUMP)?;
    Ok((r[0].mean_bracket, r[0].se_bracket))
}
