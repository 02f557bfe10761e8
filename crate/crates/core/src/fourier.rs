//! Damped-contour Fourier inversion.
//!
//! Every quantity is an integral over `z_v = iv - alpha`,
//! `(1/2pi) int g(0, -i z_v) e^{-z_v s} phi(t, i z_v) m(z_v) dv`,
//! where `s` is the state (or minus the density argument) and `m` a
//! multiplier selecting the derivative. Real payoffs make the integrand
//! Hermitian in `v`, so only `v >= 0` is integrated and the real part kept.

use crate::error::{Error, Result};
use crate::models::LevyExponent;
use crate::payoffs::{DampedPayoff, PayoffDecomposition, PayoffKind};
use crate::quadrature::{self, Tolerance};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// Composite 21-point Gauss–Kronrod panels sized by local oscillation.
    GaussKronrodPanels,
    /// Uniform composite Simpson rule on `n_nodes` points.
    Simpson,
    /// Uniform trapezoid rule on `n_nodes` points.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VMax {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureGrid {
    pub alpha: f64,
    pub v_max: VMax,
    /// Points on `[-v_max, v_max]` for the uniform rules; minimum
    /// resolution for the panel rule.
    pub n_nodes: usize,
    pub rule: Rule,
    /// Envelope level at which the automatic truncation stops.
    pub tol: f64,
    /// Largest admissible truncation bound.
    pub v_cap: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            alpha: 1.0,
            v_max: VMax::Auto,
            n_nodes: 64,
            rule: Rule::GaussKronrodPanels,
            tol: 1e-12,
            v_cap: 1e6,
        }
    }
}

impl QuadratureGrid {
    pub fn with_alpha(alpha: f64) -> Self {
        QuadratureGrid { alpha, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 64 || self.n_nodes % 2 != 0 {
            return Err(Error::Parameter(format!("n_nodes must be even and >= 64, got {}", self.n_nodes)));
        }
        if let VMax::Fixed(v) = self.v_max {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("v_max must be positive, got {v}")));
            }
        }
        if !(self.tol > 0.0) || !(self.v_cap > 0.0) {
            return Err(Error::Parameter("grid tolerances must be positive".into()));
        }
        if self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(Error::Parameter("alpha must be finite and non-zero".into()));
        }
        Ok(())
    }

    /// Same grid with twice the nodes and twice the truncation bound.
    pub fn refined(&self) -> Self {
        let mut g = self.clone();
        g.n_nodes *= 2;
        g.v_max = match self.v_max {
            VMax::Auto => VMax::Auto,
            VMax::Fixed(v) => VMax::Fixed(2.0 * v),
        };
        g.tol = self.tol * 1e-2;
        g
    }
}

/// Result of one contour integral.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EngineValue {
    pub value: f64,
    pub error_estimate: f64,
    /// Imaginary part of the full-line integral (only filled by the
    /// detailed evaluators, zero otherwise).
    pub imag_residual: f64,
    pub v_max: f64,
    pub n_nodes: usize,
}

impl EngineValue {
    fn exact(value: f64) -> Self {
        EngineValue { value, error_estimate: 0.0, imag_residual: 0.0, v_max: 0.0, n_nodes: 0 }
    }

    fn combine(self, sign: f64, other: EngineValue) -> Self {
        EngineValue {
            value: self.value + sign * other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            imag_residual: self.imag_residual + sign * other.imag_residual,
            v_max: self.v_max.max(other.v_max),
            n_nodes: self.n_nodes + other.n_nodes,
        }
    }
}

/// Multiplier `m(z_v)` applied to the base integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multiplier {
    /// `F`.
    Value,
    /// `dF/dx`: `-z_v`.
    Dx,
    /// `d2F/dx2`: `z_v^2`.
    Dxx,
    /// `dF/dt`: `-psi(i z_v)`.
    Dt,
    /// `F(x + y)`: `e^{-z_v y}`.
    Shift(f64),
    /// `F(x + y) - F(x)`: `e^{-z_v y} - 1`.
    JumpDiff(f64),
    /// `F(x + y) - F(x) - y dF/dx`: `e^{-z_v y} - 1 + z_v y`.
    JumpCompensated(f64),
    /// `int (F(x+y) - F(x) - y F_x(x)) nu(dy)`: `J(i z_v)`.
    NuIntegral,
}

impl Multiplier {
    fn factor(&self, node: &Node, drift: f64, sigma: f64) -> Complex64 {
        let z = node.z;
        match *self {
            Multiplier::Value => Complex64::new(1.0, 0.0),
            Multiplier::Dx => -z,
            Multiplier::Dxx => z * z,
            Multiplier::Dt => -node.psi,
            Multiplier::Shift(y) => (-z * y).exp(),
            Multiplier::JumpDiff(y) => (-z * y).exp_m1_safe(),
            Multiplier::JumpCompensated(y) => crate::special::exp_m1_m_lin(-z * y),
            Multiplier::NuIntegral => node.psi - (-z * drift + 0.5 * sigma * sigma * z * z),
        }
    }

    fn jump_size(&self) -> f64 {
        match *self {
            Multiplier::Shift(y) | Multiplier::JumpDiff(y) | Multiplier::JumpCompensated(y) => y,
            _ => 0.0,
        }
    }
}

trait ExpM1 {
    fn exp_m1_safe(self) -> Self;
}

impl ExpM1 for Complex64 {
    /// `e^w - 1` without cancellation for small `|w|`.
    fn exp_m1_safe(self) -> Complex64 {
        if self.norm() < 0.5 {
            crate::special::exp_m1_m_lin(self) + self
        } else {
            self.exp() - 1.0
        }
    }
}

/// One node of a prepared contour.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub v: f64,
    /// `z_v = iv - alpha`.
    pub z: Complex64,
    /// `psi(i z_v)`.
    pub psi: Complex64,
    /// `g(0, -i z_v) phi(t, i z_v)`.
    pub base: Complex64,
    /// Weight of the main rule.
    pub w: f64,
    /// Weight of the embedded comparison rule.
    pub w_check: f64,
}

/// Integrand data at fixed `t` reusable across states, shifts and
/// multipliers.
#[derive(Debug, Clone)]
pub struct PreparedContour {
    pub nodes: Vec<Node>,
    panels: Vec<(usize, usize)>,
    /// Values at `-v` for the imaginary-residual diagnostic.
    mirror: Option<Vec<(Complex64, Complex64)>>,
    pub alpha: f64,
    pub v_max: f64,
    pub truncation_error: f64,
    drift: f64,
    sigma: f64,
    /// Shift range in which the layout was validated.
    pub shift_range: (f64, f64),
    pub y_max: f64,
}

/// What to integrate: the transform of a payoff part or the plain density.
#[derive(Clone, Copy)]
pub enum Base<'a> {
    Payoff(&'a DampedPayoff),
    Density,
}

impl Base<'_> {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        match self {
            Base::Payoff(p) => p.transform0(-I * z),
            Base::Density => Ok(Complex64::new(1.0, 0.0)),
        }
    }

    fn center(&self) -> f64 {
        match self {
            Base::Payoff(p) => p.center(),
            Base::Density => 0.0,
        }
    }

    fn singularity_distance(&self, alpha: f64) -> f64 {
        match self {
            Base::Payoff(p) => p.singularity_distance(alpha),
            Base::Density => f64::INFINITY,
        }
    }
}

struct ContourBuilder<'a, E: LevyExponent + ?Sized> {
    model: &'a E,
    base: Base<'a>,
    alpha: f64,
    t: f64,
    maturity: f64,
}

impl<E: LevyExponent + ?Sized> ContourBuilder<'_, E> {
    fn node_values(&self, v: f64) -> Result<(Complex64, Complex64, Complex64)> {
        let z = Complex64::new(-self.alpha, v);
        let psi = self.model.psi(I * z)?;
        let phi = ((self.maturity - self.t) * psi).exp();
        let g = self.base.eval(z)?;
        Ok((z, psi, g * phi))
    }

    /// Magnitude bound of the integrand at `v` over all supported
    /// multipliers and shifts.
    fn envelope(&self, v: f64, shift_gain: f64) -> Result<f64> {
        let (z, psi, base) = self.node_values(v)?;
        let m = 1f64.max(z.norm_sqr()).max(psi.norm());
        Ok(base.norm() * m * shift_gain / PI)
    }

    fn choose_v_max(&self, grid: &QuadratureGrid, shift_gain: f64) -> Result<(f64, f64)> {
        let tail = |v: f64| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for k in 0..=4 {
                let u = v * (1.0 + 0.25 * k as f64);
                worst = worst.max(self.envelope(u, shift_gain)? * u);
            }
            Ok(worst)
        };
        match grid.v_max {
            VMax::Fixed(v) => Ok((v, tail(v)?)),
            VMax::Auto => {
                let mut v = 4.0;
                loop {
                    let est = tail(v)?;
                    if est <= grid.tol {
                        return Ok((v, est));
                    }
                    if v >= grid.v_cap {
                        return Err(Error::Truncation(format!(
                            "integrand envelope {est:.3e} above {:.1e} at the cap v={:.3e}",
                            grid.tol, grid.v_cap
                        )));
                    }
                    v = (2.0 * v).min(grid.v_cap);
                }
            }
        }
    }
}

impl PreparedContour {
    /// Lays out and evaluates the contour for states in `shift_range`
    /// and jump shifts up to `y_max`.
    #[allow(clippy::too_many_arguments)]
    pub fn prepare<E: LevyExponent + ?Sized>(
        model: &E,
        base: Base<'_>,
        alpha: f64,
        t: f64,
        maturity: f64,
        shift_range: (f64, f64),
        y_max: f64,
        grid: &QuadratureGrid,
        mirror: bool,
    ) -> Result<Self> {
        if !(t < maturity) {
            return Err(Error::Domain(format!("contour needs t < T, got t={t}, T={maturity}")));
        }
        model.check_domain(Complex64::new(0.0, -alpha))?;
        let b = ContourBuilder { model, base, alpha, t, maturity };
        let (s_lo, s_hi) = shift_range;
        let y_max = y_max.abs();
        let shift_gain = (alpha * s_lo).exp().max((alpha * s_hi).exp()) * (1.0 + (alpha.abs() * y_max).exp());
        let (v_max, truncation_error) = b.choose_v_max(grid, shift_gain)?;
        let center = base.center();
        let omega = (s_lo - center).abs().max((s_hi - center).abs()) + y_max + 1.0;
        let (mlo, mhi) = if model.jump_free() { (f64::NEG_INFINITY, f64::INFINITY) } else { model.moment_interval() };
        let strip = (alpha - mlo).min(mhi - alpha).min(base.singularity_distance(alpha)).max(1e-3);

        let mut contour = PreparedContour {
            nodes: Vec::new(),
            panels: Vec::new(),
            mirror: None,
            alpha,
            v_max,
            truncation_error,
            drift: model.drift(),
            sigma: model.sigma(),
            shift_range: (s_lo, s_hi),
            y_max,
        };
        match grid.rule {
            Rule::GaussKronrodPanels => {
                let mut edges = vec![0.0];
                let mut v = 0.0;
                while v < v_max {
                    let w = (2.0 * PI / omega).min(strip.max(0.5 * v)).min(v_max / 8.0).max(1e-9);
                    v = (v + w).min(v_max);
                    edges.push(v);
                }
                let min_panels = grid.n_nodes / 21 + 1;
                if edges.len() - 1 < min_panels {
                    edges = (0..=min_panels).map(|k| v_max * k as f64 / min_panels as f64).collect();
                }
                let mut panels: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
                for _round in 0..40 {
                    let mut data = Vec::with_capacity(panels.len());
                    let mut total = 0.0;
                    let mut magnitude = 0.0;
                    for &(a, c) in &panels {
                        let nodes = gk_panel(&b, a, c)?;
                        let (e, mag) = panel_error(&nodes, shift_range, y_max);
                        total += e;
                        magnitude += mag;
                        data.push((nodes, e, mag));
                    }
                    let target = grid.tol.max(1e-14).max(64.0 * f64::EPSILON * magnitude);
                    if total <= target {
                        contour.fill(data.into_iter().map(|(n, _, _)| n));
                        break;
                    }
                    if data.len() * 21 > MAX_NODES {
                        return Err(Error::Truncation(format!(
                            "contour needs more than {MAX_NODES} nodes (panel error {total:.3e})"
                        )));
                    }
                    let per_panel = target / data.len() as f64;
                    let mut next = Vec::with_capacity(panels.len() * 2);
                    for (&(a, c), (_, e, mag)) in panels.iter().zip(data.iter()) {
                        if *e > per_panel && *e > 64.0 * f64::EPSILON * mag {
                            let m = 0.5 * (a + c);
                            next.push((a, m));
                            next.push((m, c));
                        } else {
                            next.push((a, c));
                        }
                    }
                    if next.len() == panels.len() {
                        // everything left is at the rounding floor
                        contour.fill(data.into_iter().map(|(n, _, _)| n));
                        break;
                    }
                    panels = next;
                }
                if contour.nodes.is_empty() {
                    return Err(Error::Quadrature("contour refinement did not converge".into()));
                }
            }
            Rule::Simpson | Rule::Trapezoid => {
                let n = grid.n_nodes / 2;
                let h = v_max / n as f64;
                let mut nodes = Vec::with_capacity(n + 1);
                for k in 0..=n {
                    let v = k as f64 * h;
                    let (z, psi, base) = b.node_values(v)?;
                    let end = k == 0 || k == n;
                    let (w, w_check) = match grid.rule {
                        Rule::Simpson => {
                            let w = if end { h / 3.0 } else if k % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
                            (w, if end { 0.5 * h } else { h })
                        }
                        _ => {
                            let w = if end { 0.5 * h } else { h };
                            let w_check = if k % 2 == 1 { 0.0 } else if end { h } else { 2.0 * h };
                            (w, w_check)
                        }
                    };
                    nodes.push(Node { v, z, psi, base, w, w_check });
                }
                contour.fill(std::iter::once(nodes));
            }
        }
        if mirror {
            let mut m = Vec::with_capacity(contour.nodes.len());
            for node in &contour.nodes {
                let (_, psi, base) = b.node_values(-node.v)?;
                m.push((base, psi));
            }
            contour.mirror = Some(m);
        }
        Ok(contour)
    }

    fn fill(&mut self, panels: impl Iterator<Item = Vec<Node>>) {
        for p in panels {
            let start = self.nodes.len();
            self.nodes.extend(p);
            self.panels.push((start, self.nodes.len()));
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// True when `s` and `y` lie inside the validated layout.
    pub fn covers(&self, s: f64, y: f64) -> bool {
        s >= self.shift_range.0 - 1e-12 && s <= self.shift_range.1 + 1e-12 && y.abs() <= self.y_max + 1e-12
    }

    /// `(1/pi) Re sum w base e^{-z s} m` with an error estimate.
    pub fn evaluate(&self, s: f64, multiplier: Multiplier) -> EngineValue {
        self.evaluate_with(s, |_, node| multiplier.factor(node, self.drift, self.sigma))
    }

    /// Like [`evaluate`](Self::evaluate) with an arbitrary per-node factor.
    /// The closure receives the node index and the node.
    pub fn evaluate_with<F: Fn(usize, &Node) -> Complex64>(&self, s: f64, factor: F) -> EngineValue {
        let mut total = Complex64::new(0.0, 0.0);
        let mut err = 0.0;
        let mut magnitude = 0.0;
        for &(a, b) in &self.panels {
            let mut main = Complex64::new(0.0, 0.0);
            let mut check = Complex64::new(0.0, 0.0);
            for (k, node) in self.nodes[a..b].iter().enumerate() {
                let term = node.base * (-node.z * s).exp() * factor(a + k, node);
                main += term * node.w;
                check += term * node.w_check;
                magnitude += term.norm() * node.w;
            }
            total += main;
            err += (main - check).re.abs();
        }
        EngineValue {
            value: total.re / PI,
            error_estimate: err / PI + self.truncation_error + 1e-15 * magnitude / PI,
            imag_residual: 0.0,
            v_max: self.v_max,
            n_nodes: self.nodes.len(),
        }
    }

    /// Full-line evaluation that also reports the imaginary residual.
    pub fn evaluate_detailed(&self, s: f64, multiplier: Multiplier) -> Result<EngineValue> {
        let mirror = self
            .mirror
            .as_ref()
            .ok_or_else(|| Error::Parameter("contour prepared without mirror nodes".into()))?;
        let half = self.evaluate(s, multiplier);
        let mut total = Complex64::new(0.0, 0.0);
        for (node, &(base_m, psi_m)) in self.nodes.iter().zip(mirror.iter()) {
            let z_m = Complex64::new(-self.alpha, -node.v);
            let mirrored = Node { v: -node.v, z: z_m, psi: psi_m, base: base_m, w: node.w, w_check: node.w_check };
            let f_pos = node.base * (-node.z * s).exp() * multiplier.factor(node, self.drift, self.sigma);
            let f_neg = base_m * (-z_m * s).exp() * multiplier.factor(&mirrored, self.drift, self.sigma);
            total += (f_pos + f_neg) * node.w;
        }
        Ok(EngineValue { value: total.re / (2.0 * PI), imag_residual: total.im / (2.0 * PI), ..half })
    }
}

fn gk_panel<E: LevyExponent + ?Sized>(b: &ContourBuilder<'_, E>, a: f64, c: f64) -> Result<Vec<Node>> {
    let (x, wk, wg) = quadrature::gk21_nodes(a, c);
    let mut out = Vec::with_capacity(21);
    for k in 0..21 {
        let (z, psi, base) = b.node_values(x[k])?;
        out.push(Node { v: x[k], z, psi, base, w: wk[k], w_check: wg[k] });
    }
    Ok(out)
}

/// Embedded-rule discrepancy and absolute magnitude of one panel, taken
/// over the extreme shifts with the largest multiplier.
fn panel_error(nodes: &[Node], shift_range: (f64, f64), y_max: f64) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut magnitude: f64 = 0.0;
    let shifts = [shift_range.0, shift_range.1, shift_range.0 - y_max, shift_range.1 + y_max];
    for s in shifts {
        let mut d = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for n in nodes {
            let m = 1f64.max(n.z.norm_sqr()).max(n.psi.norm());
            let term = n.base * (-n.z * s).exp() * m;
            d += term * (n.w - n.w_check);
            mag += term.norm() * n.w;
        }
        worst = worst.max(d.norm() / PI);
        magnitude = magnitude.max(mag / PI);
    }
    (worst, magnitude)
}

/// Uniform midpoint contour for batch evaluation at many states.
///
/// Nodes sit at `v_k = (k + 1/2) dv`, so `e^{-z_k s}` follows from one
/// complex exponential and a running product. The spacing keeps the
/// aliasing images of the integrand (period `2 pi / dv`) below double
/// precision for states in the prepared range.
#[derive(Debug, Clone)]
pub struct UniformContour {
    pub alpha: f64,
    pub dv: f64,
    pub v_max: f64,
    /// `z_k = i v_k - alpha`.
    pub z: Vec<Complex64>,
    /// `g(0, -i z_k) phi(t, i z_k)`.
    pub base: Vec<Complex64>,
    /// `psi(i z_k)`.
    pub psi: Vec<Complex64>,
    pub shift_range: (f64, f64),
}

/// Re-synchronize the running product with a direct exponential this often.
const RESYNC: usize = 512;

impl UniformContour {
    #[allow(clippy::too_many_arguments)]
    pub fn prepare<E: LevyExponent + ?Sized>(
        model: &E,
        payoff: &DampedPayoff,
        alpha: f64,
        t: f64,
        maturity: f64,
        shift_range: (f64, f64),
        tol: f64,
        v_cap: f64,
    ) -> Result<Self> {
        if !(t < maturity) {
            return Err(Error::Domain(format!("contour needs t < T, got t={t}, T={maturity}")));
        }
        model.check_domain(Complex64::new(0.0, -alpha))?;
        let base = Base::Payoff(payoff);
        let b = ContourBuilder { model, base, alpha, t, maturity };
        let (s_lo, s_hi) = shift_range;
        let shift_gain = (alpha * s_lo).exp().max((alpha * s_hi).exp());
        let grid = QuadratureGrid { alpha, tol, v_cap, ..QuadratureGrid::default() };
        let (v_max, _) = b.choose_v_max(&grid, shift_gain)?;
        let reach = (s_lo - base.center()).abs().max((s_hi - base.center()).abs());
        let hi = if model.jump_free() { f64::INFINITY } else { model.moment_interval().1 };
        let gap = (hi - alpha).min(10.0);
        let period = (36.0 / alpha.abs()).max((36.0 + (alpha + gap) * reach) / gap).max(4.0 * reach + 20.0);
        let dv = 2.0 * PI / period;
        let n = (v_max / dv).ceil() as usize;
        let mut z = Vec::with_capacity(n);
        let mut bases = Vec::with_capacity(n);
        let mut psis = Vec::with_capacity(n);
        for k in 0..n {
            let (zk, psi, bk) = b.node_values((k as f64 + 0.5) * dv)?;
            z.push(zk);
            psis.push(psi);
            bases.push(bk * dv);
        }
        Ok(UniformContour { alpha, dv, v_max, z, base: bases, psi: psis, shift_range })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Node weights `base_k m(z_k, psi_k)` for one multiplier.
    pub fn weights<M: Fn(Complex64, Complex64) -> Complex64>(&self, m: M) -> Vec<Complex64> {
        self.z.iter().zip(&self.base).zip(&self.psi).map(|((z, b), p)| b * m(*z, *p)).collect()
    }

    /// `(1/pi) Re sum_k w_k e^{-z_k s}` for several weight vectors at once.
    pub fn evaluate_many(&self, s: f64, weights: &[&[Complex64]], out: &mut [f64]) {
        let n = self.z.len();
        let mut acc = [Complex64::new(0.0, 0.0); 8];
        assert!(weights.len() <= acc.len() && out.len() >= weights.len());
        let step = Complex64::from_polar(1.0, -self.dv * s);
        let scale = (self.alpha * s).exp();
        let mut k = 0;
        while k < n {
            let end = (k + RESYNC).min(n);
            let mut e = Complex64::from_polar(1.0, -(k as f64 + 0.5) * self.dv * s);
            for j in k..end {
                for (a, w) in acc.iter_mut().zip(weights) {
                    *a += w[j] * e;
                }
                e *= step;
            }
            k = end;
        }
        for (o, a) in out.iter_mut().zip(acc.iter()) {
            *o = a.re * scale / PI;
        }
    }

    pub fn evaluate(&self, s: f64, weights: &[Complex64]) -> f64 {
        let mut out = [0.0];
        self.evaluate_many(s, &[weights], &mut out);
        out[0]
    }
}

/// Conditional values `F(t, x) = E[f(X_T) | X_t = x]` and their
/// derivatives for one payoff under one model.
pub struct FourierEngine<'a, E: LevyExponent + ?Sized> {
    pub model: &'a E,
    pub payoff: &'a DampedPayoff,
    pub grid: &'a QuadratureGrid,
    pub maturity: f64,
    parts: PayoffDecomposition,
}

impl<'a, E: LevyExponent + ?Sized> FourierEngine<'a, E> {
    pub fn new(model: &'a E, payoff: &'a DampedPayoff, grid: &'a QuadratureGrid, maturity: f64) -> Result<Self> {
        grid.validate()?;
        if !(maturity > 0.0) {
            return Err(Error::Parameter(format!("maturity must be positive, got {maturity}")));
        }
        if let PayoffKind::Polynomial(_) = payoff.kind {
            if payoff.as_constant().is_none() {
                return Err(Error::Domain(
                    "polynomial payoffs have no damped transform; use the conditional-expectation representation".into(),
                ));
            }
        }
        Ok(FourierEngine { model, payoff, grid, maturity, parts: PayoffDecomposition::expand(payoff) })
    }

    /// Contour damping for one part: the grid's alpha when the part admits
    /// it, otherwise the part's own.
    pub fn part_alpha(&self, part: &DampedPayoff) -> f64 {
        let (lo, hi) = part.damping_interval();
        if self.grid.alpha > lo && self.grid.alpha < hi {
            self.grid.alpha
        } else {
            part.alpha
        }
    }

    /// The damped integrand carries `e^{alpha (x - center)}`, which the
    /// inversion has to cancel; keep that factor below `e^10` on the range.
    fn cap_damping(part: &DampedPayoff, alpha: f64, x_range: (f64, f64), y_max: f64) -> f64 {
        const MAX_EXPONENT: f64 = 10.0;
        let center = part.center();
        let d = if alpha > 0.0 { x_range.1 + y_max - center } else { x_range.0 - y_max - center };
        if alpha * d <= MAX_EXPONENT {
            return alpha;
        }
        let capped = MAX_EXPONENT / d;
        let (lo, hi) = part.damping_interval();
        if capped > lo && capped < hi {
            capped
        } else {
            alpha
        }
    }

    fn deterministic(&self) -> bool {
        self.model.jump_free() && self.model.sigma() == 0.0
    }

    /// Closed-form answers for the degenerate cases, `None` otherwise.
    fn special_case(&self, t: f64, x: f64, multiplier: Multiplier) -> Option<Result<EngineValue>> {
        let f = |u: f64| self.parts.value(u);
        if let Some(k) = self.payoff.as_constant() {
            let v = match multiplier {
                Multiplier::Value | Multiplier::Shift(_) => k,
                _ => 0.0,
            };
            return Some(Ok(EngineValue::exact(v)));
        }
        let tau = self.maturity - t;
        if tau < 0.0 {
            return Some(Err(Error::Domain(format!("t={t} beyond maturity {}", self.maturity))));
        }
        if tau == 0.0 || self.deterministic() {
            let d = self.model.drift() * tau;
            return Some(match multiplier {
                Multiplier::Value => Ok(EngineValue::exact(f(x + d))),
                Multiplier::Shift(y) => Ok(EngineValue::exact(f(x + y + d))),
                Multiplier::JumpDiff(y) => Ok(EngineValue::exact(f(x + y + d) - f(x + d))),
                Multiplier::NuIntegral if self.model.jump_free() => Ok(EngineValue::exact(0.0)),
                _ => Err(Error::Domain(format!(
                    "derivative of F undefined {}",
                    if tau == 0.0 { "at maturity" } else { "without noise" }
                ))),
            });
        }
        None
    }

    /// Prepares one contour per payoff part for states in `x_range`.
    pub fn prepare(&self, t: f64, x_range: (f64, f64), y_max: f64, mirror: bool) -> Result<Vec<(f64, PreparedContour)>> {
        let mut out = Vec::with_capacity(self.parts.parts.len());
        for (sign, part) in &self.parts.parts {
            let alpha = Self::cap_damping(part, self.part_alpha(part), x_range, y_max);
            let c = PreparedContour::prepare(
                self.model,
                Base::Payoff(part),
                alpha,
                t,
                self.maturity,
                x_range,
                y_max,
                self.grid,
                mirror,
            )?;
            out.push((*sign, c));
        }
        Ok(out)
    }

    pub fn evaluate(&self, t: f64, x: f64, multiplier: Multiplier) -> Result<EngineValue> {
        if let Some(r) = self.special_case(t, x, multiplier) {
            return r;
        }
        let y = multiplier.jump_size();
        let contours = self.prepare(t, (x, x), y, false)?;
        Ok(sum_parts(&contours, x, multiplier))
    }

    /// Evaluation over the full line with the imaginary residual filled in.
    pub fn evaluate_detailed(&self, t: f64, x: f64, multiplier: Multiplier) -> Result<EngineValue> {
        if let Some(r) = self.special_case(t, x, multiplier) {
            return r;
        }
        let contours = self.prepare(t, (x, x), multiplier.jump_size(), true)?;
        let mut acc = EngineValue::exact(0.0);
        for (sign, c) in &contours {
            acc = acc.combine(*sign, c.evaluate_detailed(x, multiplier)?);
        }
        Ok(acc)
    }

    /// `F(t, x)`.
    pub fn conditional_value(&self, t: f64, x: f64) -> Result<EngineValue> {
        self.evaluate(t, x, Multiplier::Value)
    }

    #[allow(non_snake_case)]
    pub fn dF_dx(&self, t: f64, x: f64) -> Result<EngineValue> {
        self.evaluate(t, x, Multiplier::Dx)
    }

    #[allow(non_snake_case)]
    pub fn d2F_dx2(&self, t: f64, x: f64) -> Result<EngineValue> {
        self.evaluate(t, x, Multiplier::Dxx)
    }

    #[allow(non_snake_case)]
    pub fn dF_dt(&self, t: f64, x: f64) -> Result<EngineValue> {
        self.evaluate(t, x, Multiplier::Dt)
    }

    /// `F(t, x + y) - F(t, x)` in a single quadrature.
    pub fn jump_difference(&self, t: f64, x: f64, y: f64) -> Result<EngineValue> {
        if y == 0.0 {
            return Ok(EngineValue::exact(0.0));
        }
        self.evaluate(t, x, Multiplier::JumpDiff(y))
    }

    /// Left-hand side of the backward equation
    /// `F_t + mu F_x + sigma^2/2 F_xx + int (F(x+y) - F(x) - y F_x) nu(dy)`.
    pub fn pide_residual(&self, t: f64, x: f64, method: PideMethod) -> Result<PideResidual> {
        if self.payoff.as_constant().is_some() {
            return Ok(PideResidual { residual: 0.0, dt: 0.0, dx: 0.0, dxx: 0.0, nu_integral: 0.0, error_estimate: 0.0 });
        }
        let contours = self.prepare(t, (x, x), 0.0, false)?;
        let dt = sum_parts(&contours, x, Multiplier::Dt);
        let dx = sum_parts(&contours, x, Multiplier::Dx);
        let dxx = sum_parts(&contours, x, Multiplier::Dxx);
        let nu = match method {
            PideMethod::FourierQuadratureJ => {
                let mut acc = EngineValue::exact(0.0);
                for (sign, c) in &contours {
                    let factors: Vec<Complex64> = c
                        .nodes
                        .iter()
                        .map(|n| crate::models::jump_exponent_by_quadrature(self.model, I * n.z))
                        .collect::<Result<_>>()?;
                    let v = c.evaluate_with(x, |k, _| factors[k]);
                    acc = acc.combine(*sign, v);
                }
                acc
            }
            PideMethod::DirectJumpQuadrature => self.direct_nu_integral(t, x, dx.value)?,
        };
        let mu = self.model.drift();
        let s2 = self.model.sigma().powi(2);
        let residual = dt.value + mu * dx.value + 0.5 * s2 * dxx.value + nu.value;
        let error_estimate =
            dt.error_estimate + mu.abs() * dx.error_estimate + 0.5 * s2 * dxx.error_estimate + nu.error_estimate;
        Ok(PideResidual { residual, dt: dt.value, dx: dx.value, dxx: dxx.value, nu_integral: nu.value, error_estimate })
    }

    /// `int (F(x+y) - F(x) - y F_x) nu(dy)` by quadrature in `y` of
    /// single-contour jump differences.
    fn direct_nu_integral(&self, t: f64, x: f64, fx: f64) -> Result<EngineValue> {
        if self.model.jump_free() {
            return Ok(EngineValue::exact(0.0));
        }
        let y_max = crate::models::jump_extent(self.model, 1e-13);
        let contours = self.prepare(t, (x, x), y_max, false)?;
        let g = |y: f64| {
            let d = sum_parts(&contours, x, Multiplier::JumpDiff(y)).value;
            let nu = self.model.levy_density(y);
            if nu == 0.0 {
                0.0
            } else {
                (d - y * fx) * nu
            }
        };
        // small |y|: second-order expansion with F_xx
        let inner = 1e-4;
        let fxx = sum_parts(&contours, x, Multiplier::Dxx).value;
        let small = quadrature::integral_towards_zero(|y| y * y * self.model.levy_density(y), inner, Tolerance::new(1e-16, 1e-10))?
            .value
            + quadrature::integral_towards_zero(|y| y * y * self.model.levy_density(-y), inner, Tolerance::new(1e-16, 1e-10))?
                .value;
        let mut bps = self.model.breakpoints();
        bps.push(self.payoff.center() - x);
        bps.retain(|b| b.abs() < y_max);
        let tol = Tolerance { abs: 1e-11, rel: 1e-9, max_intervals: 4000 };
        let mut total = 0.0;
        let mut err = 0.0;
        for side in [1.0, -1.0] {
            let mut edges = vec![inner];
            let mut e = inner;
            while e < 1.0 {
                e = (2.0 * e).min(1.0);
                edges.push(e);
            }
            edges.extend(bps.iter().filter(|b| b.signum() == side).map(|b| b.abs()).filter(|b| *b > inner));
            edges.push(y_max);
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            edges.dedup();
            for w in edges.windows(2) {
                let est = quadrature::adaptive(|u| g(side * u), w[0], w[1], tol)?;
                total += est.value;
                err += est.error;
            }
        }
        Ok(EngineValue {
            value: total + 0.5 * fxx * small,
            error_estimate: err,
            imag_residual: 0.0,
            v_max: contours[0].1.v_max,
            n_nodes: contours[0].1.n_nodes(),
        })
    }
}

pub fn sum_parts(contours: &[(f64, PreparedContour)], s: f64, multiplier: Multiplier) -> EngineValue {
    let mut acc = EngineValue::exact(0.0);
    for (sign, c) in contours {
        acc = acc.combine(*sign, c.evaluate(s, multiplier));
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PideMethod {
    /// Jump term through the multiplier `J(i z_v)`, with `J` obtained by
    /// direct quadrature of the Lévy density.
    FourierQuadratureJ,
    /// Jump term by quadrature over jump sizes of `F(x+y) - F(x) - y F_x`.
    DirectJumpQuadrature,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PideResidual {
    pub residual: f64,
    pub dt: f64,
    pub dx: f64,
    pub dxx: f64,
    pub nu_integral: f64,
    pub error_estimate: f64,
}

/// Density `p_t(y)` of `X_T - X_t` by inversion of `phi(t, .)` on the real
/// line.
pub struct DensityEvaluator {
    contour: PreparedContour,
}

impl DensityEvaluator {
    /// Contour valid for `y` in `y_range`.
    pub fn new<E: LevyExponent + ?Sized>(
        model: &E,
        grid: &QuadratureGrid,
        t: f64,
        maturity: f64,
        y_range: (f64, f64),
    ) -> Result<Self> {
        if model.jump_free() && model.sigma() == 0.0 {
            return Err(Error::Domain("degenerate model has no density".into()));
        }
        let g = QuadratureGrid { alpha: 1.0, ..grid.clone() };
        let contour =
            PreparedContour::prepare(model, Base::Density, 0.0, t, maturity, (-y_range.1, -y_range.0), 0.0, &g, false)?;
        Ok(DensityEvaluator { contour })
    }

    pub fn density(&self, y: f64) -> EngineValue {
        self.contour.evaluate(-y, Multiplier::Value)
    }

    /// `d p_t / dy`.
    pub fn density_derivative(&self, y: f64) -> EngineValue {
        // d/dy e^{z y} = z e^{z y}
        let mut v = self.contour.evaluate(-y, Multiplier::Dx);
        v.value = -v.value;
        v
    }
}

/// `p_t(y)`.
pub fn density<E: LevyExponent + ?Sized>(
    model: &E,
    grid: &QuadratureGrid,
    t: f64,
    maturity: f64,
    y: f64,
) -> Result<EngineValue> {
    Ok(DensityEvaluator::new(model, grid, t, maturity, (y, y))?.density(y))
}

/// `int p_t(y) dy` by adaptive quadrature of the inverted density.
pub fn density_mass<E: LevyExponent + ?Sized>(
    model: &E,
    grid: &QuadratureGrid,
    t: f64,
    maturity: f64,
    half_width: f64,
) -> Result<f64> {
    let ev = DensityEvaluator::new(model, grid, t, maturity, (-half_width, half_width))?;
    let tol = Tolerance { abs: 1e-12, rel: 1e-12, max_intervals: 4000 };
    let mut total = 0.0;
    let edges = [-half_width, -1.0, 0.0, 1.0, half_width];
    for w in edges.windows(2) {
        total += quadrature::adaptive(|y| ev.density(y).value, w[0], w[1], tol)?.value;
    }
    Ok(total)
}

/// `F(t, x) = e^x int_{-x}^inf e^y p_t(y) dy` for `f(x) = e^x 1_{x>0}`,
/// and `dF/dx = F + p_t(-x)`, both from the density.
pub fn exp_indicator_value<E: LevyExponent + ?Sized>(
    model: &E,
    grid: &QuadratureGrid,
    t: f64,
    x: f64,
    maturity: f64,
) -> Result<(f64, f64)> {
    // Chernoff cutoff: int_b^inf e^y p <= e^{-(a-1) b} E[e^{aY}]
    let (_, hi) = model.moment_interval();
    let a = if hi.is_finite() { (0.9 * hi).min(6.0) } else { 6.0 };
    if a <= 1.0 {
        return Err(Error::Domain("exp_indicator needs exponential moments beyond 1".into()));
    }
    let log_m = model.char_function(t, maturity, Complex64::new(0.0, -a))?.re.ln();
    let upper = ((log_m + 36.0) / (a - 1.0)).max(-x + 1.0);
    let ev = DensityEvaluator::new(model, grid, t, maturity, (-x - 1.0, upper + 1.0))?;
    let g = |y: f64| y.exp() * ev.density(y).value;
    let tol = Tolerance { abs: 1e-14 * upper.exp().max(1.0), rel: 1e-12, max_intervals: 4000 };
    let n_panels = ((upper + x) / 0.5).ceil().max(1.0) as usize;
    let width = (upper + x) / n_panels as f64;
    let mut total = 0.0;
    for k in 0..n_panels {
        let a = -x + k as f64 * width;
        total += quadrature::adaptive(g, a, a + width, tol)?.value;
    }
    let f = x.exp() * total;
    Ok((f, f + ev.density(-x).value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LevyModel;

    fn normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    // Numerical Recipes erfc, rel. error < 1.2e-7; enough for sanity checks.
    fn erfc(x: f64) -> f64 {
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let r = t * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
        if x >= 0.0 {
            r
        } else {
            2.0 - r
        }
    }

    #[test]
    fn brownian_digital_at_strike_is_half() {
        let m = LevyModel::brownian(0.0, 1.0);
        let p = DampedPayoff::digital(0.3, 1.0);
        let g = QuadratureGrid::default();
        let e = FourierEngine::new(&m, &p, &g, 1.0).unwrap();
        let v = e.conditional_value(0.0, 0.3).unwrap();
        assert!((v.value - 0.5).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn brownian_digital_matches_cdf() {
        let m = LevyModel::brownian(0.1, 0.3);
        let p = DampedPayoff::digital(0.2, 1.0);
        let g = QuadratureGrid::default();
        let e = FourierEngine::new(&m, &p, &g, 2.0).unwrap();
        let v = e.conditional_value(0.5, 0.0).unwrap().value;
        let sd = 0.3 * 1.5f64.sqrt();
        let expected = 1.0 - normal_cdf((0.2 - 0.15) / sd);
        assert!((v - expected).abs() < 1e-6);
    }

    #[test]
    fn constant_payoff_is_exact() {
        let m = LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap();
        let p = DampedPayoff::constant(2.5);
        let g = QuadratureGrid::default();
        let e = FourierEngine::new(&m, &p, &g, 1.0).unwrap();
        assert_eq!(e.conditional_value(0.3, 0.1).unwrap().value, 2.5);
        assert_eq!(e.dF_dt(0.3, 0.1).unwrap().value, 0.0);
        assert_eq!(e.pide_residual(0.3, 0.1, PideMethod::DirectJumpQuadrature).unwrap().residual, 0.0);
    }

    #[test]
    fn value_at_maturity_is_payoff() {
        let m = LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap();
        let p = DampedPayoff::digital(0.0, 1.0);
        let g = QuadratureGrid::default();
        let e = FourierEngine::new(&m, &p, &g, 1.0).unwrap();
        assert_eq!(e.conditional_value(1.0, 0.1).unwrap().value, 1.0);
        assert_eq!(e.conditional_value(1.0, -0.1).unwrap().value, 0.0);
    }

    #[test]
    fn uniform_rules_agree_with_panels() {
        let m = LevyModel::merton(1.0, -0.1, 0.3, 0.0, 0.2).unwrap();
        let p = DampedPayoff::digital(0.0, 1.0);
        let panels = QuadratureGrid::default();
        let reference = FourierEngine::new(&m, &p, &panels, 1.0).unwrap().conditional_value(0.2, 0.1).unwrap().value;
        for rule in [Rule::Simpson, Rule::Trapezoid] {
            let g = QuadratureGrid { rule, n_nodes: 4096, v_max: VMax::Fixed(150.0), ..Default::default() };
            let v = FourierEngine::new(&m, &p, &g, 1.0).unwrap().conditional_value(0.2, 0.1).unwrap();
            assert!((v.value - reference).abs() < 1e-8, "{rule:?}: {} vs {reference}", v.value);
        }
    }
}
