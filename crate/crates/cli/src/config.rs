//! JSON documents accepted by the command-line front end.

use lcop_core::fourier::{QuadratureGrid, Rule, VMax};
use lcop_core::mmm::MarketSpec;
use lcop_core::models::{LevyModel, ModelKind, PiecewiseExpDensity};
use lcop_core::payoffs::{default_alpha, DampedPayoff, PayoffKind};
use lcop_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// `{"kind": ..., "params": {...}, "mu": .., "sigma": .., "x0": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub x0: f64,
}

fn param(params: &serde_json::Map<String, serde_json::Value>, kind: &str, name: &str) -> Result<f64> {
    params
        .get(name)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::Config(format!("{kind} model needs numeric params.{name}")))
}

fn param_vec(params: &serde_json::Map<String, serde_json::Value>, name: &str) -> Result<Vec<f64>> {
    let arr = params
        .get(name)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Config(format!("custom model needs array params.{name}")))?;
    arr.iter()
        .map(|v| v.as_f64().ok_or_else(|| Error::Config(format!("params.{name} must hold numbers"))))
        .collect()
}

impl ModelSpec {
    pub fn build(&self) -> Result<LevyModel> {
        let p = &self.params;
        let kind = match self.kind.as_str() {
            "merton" => ModelKind::Merton {
                gamma: param(p, "merton", "gamma")?,
                m: param(p, "merton", "m")?,
                delta: param(p, "merton", "delta")?,
            },
            "vg" => ModelKind::VarianceGamma {
                c: param(p, "vg", "C")?,
                g: param(p, "vg", "G")?,
                m: param(p, "vg", "M")?,
            },
            "nig" => ModelKind::Nig { a: param(p, "nig", "a")?, b: param(p, "nig", "b")?, delta: param(p, "nig", "delta")? },
            "brownian" => ModelKind::Brownian,
            "custom" => ModelKind::Custom(PiecewiseExpDensity::new(param_vec(p, "knots")?, param_vec(p, "log_density")?)?),
            other => return Err(Error::Config(format!("unknown model kind {other:?}"))),
        };
        LevyModel::new(kind, self.mu, self.sigma, self.x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Digital { strike_level: f64 },
    ExpIndicator,
    SqrtAbsPlus,
    SqrtAbsMinus,
    SqrtAbs,
    Polynomial { coefficients: Vec<f64> },
    Constant { value: f64 },
}

impl PayoffSpec {
    pub fn kind(&self) -> PayoffKind {
        match self {
            PayoffSpec::Digital { strike_level } => PayoffKind::Digital { c: *strike_level },
            PayoffSpec::ExpIndicator => PayoffKind::ExpIndicator,
            PayoffSpec::SqrtAbsPlus => PayoffKind::SqrtAbsPlus,
            PayoffSpec::SqrtAbsMinus => PayoffKind::SqrtAbsMinus,
            PayoffSpec::SqrtAbs => PayoffKind::SqrtAbs,
            PayoffSpec::Polynomial { coefficients } => PayoffKind::Polynomial(coefficients.clone()),
            PayoffSpec::Constant { value } => PayoffKind::Constant(*value),
        }
    }

    /// Damped payoff with the grid's `alpha`, or the default for the
    /// payoff and model when the grid leaves it open.
    pub fn build(&self, grid: &GridSpec, model: &LevyModel) -> DampedPayoff {
        let kind = self.kind();
        let alpha = grid.alpha.unwrap_or_else(|| default_alpha(&kind, model));
        DampedPayoff::new(kind, alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VMaxSpec {
    Auto(String),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub v_max: Option<VMaxSpec>,
    #[serde(default)]
    pub n_nodes: Option<usize>,
    /// "gauss_kronrod", "simpson" or "trapezoid".
    #[serde(default)]
    pub rule: Option<String>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { alpha: None, v_max: None, n_nodes: None, rule: None, tol: None }
    }
}

impl GridSpec {
    pub fn build(&self, alpha: f64, tol: Option<f64>) -> Result<QuadratureGrid> {
        let mut g = QuadratureGrid::with_alpha(alpha);
        match &self.v_max {
            None => {}
            Some(VMaxSpec::Auto(s)) if s == "auto" => g.v_max = VMax::Auto,
            Some(VMaxSpec::Auto(s)) => return Err(Error::Config(format!("v_max must be a number or \"auto\", got {s:?}"))),
            Some(VMaxSpec::Fixed(v)) => g.v_max = VMax::Fixed(*v),
        }
        if let Some(n) = self.n_nodes {
            g.n_nodes = n;
        }
        if let Some(rule) = &self.rule {
            g.rule = match rule.as_str() {
                "gauss_kronrod" => Rule::GaussKronrodPanels,
                "simpson" => Rule::Simpson,
                "trapezoid" => Rule::Trapezoid,
                other => return Err(Error::Config(format!("unknown quadrature rule {other:?}"))),
            };
        }
        if let Some(t) = tol.or(self.tol) {
            g.tol = t;
        }
        g.validate()?;
        Ok(g)
    }
}

/// `{"r": .., "T": .., "K": .., "model": {...}}`; the model may instead be
/// given at the top level of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketJson {
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(default)]
    pub model: Option<ModelSpec>,
}

/// Where surfaces and curves are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    /// Jump sizes at which `theta` is tabulated.
    #[serde(default = "default_jumps")]
    pub jumps: Vec<f64>,
    /// Hedge grid in price space.
    #[serde(default = "default_n_s")]
    pub n_s: usize,
}

fn default_n_t() -> usize {
    50
}
fn default_n_x() -> usize {
    101
}
fn default_n_s() -> usize {
    101
}
fn default_jumps() -> Vec<f64> {
    vec![-0.2, -0.1, 0.1, 0.2]
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec { n_t: default_n_t(), x_min: None, x_max: None, n_x: default_n_x(), jumps: default_jumps(), n_s: default_n_s() }
    }
}

/// Density under the physical or the minimal martingale measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMeasure {
    Physical,
    Mmm,
}

/// Contents of `--config FILE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub market: Option<MarketJson>,
    #[serde(default)]
    pub payoff: Option<PayoffSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Horizon when no market is given.
    #[serde(default, rename = "T")]
    pub maturity: Option<f64>,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub measure: Option<DensityMeasure>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub steps: Option<Vec<usize>>,
    #[serde(default)]
    pub epsilon_jump: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<LevyModel> {
        let spec = match (&self.model, self.market.as_ref().and_then(|m| m.model.as_ref())) {
            (Some(_), Some(_)) => return Err(Error::Config("model given both at top level and in market".into())),
            (Some(m), None) | (None, Some(m)) => m,
            (None, None) => return Err(Error::Config("config needs a model".into())),
        };
        spec.build()
    }

    pub fn market(&self) -> Result<MarketSpec> {
        let m = self.market.as_ref().ok_or_else(|| Error::Config("command needs a market {r, T, K}".into()))?;
        MarketSpec::new(m.r, m.maturity, m.strike, self.model()?)
    }

    pub fn horizon(&self) -> Result<f64> {
        let t = match (&self.market, self.maturity) {
            (Some(m), None) => m.maturity,
            (None, Some(t)) => t,
            (Some(m), Some(t)) if m.maturity == t => t,
            (Some(_), Some(_)) => return Err(Error::Config("T differs between config and market".into())),
            (None, None) => return Err(Error::Config("config needs T or a market".into())),
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("T must be positive, got {t}")));
        }
        Ok(t)
    }

    /// Configured payoff, or the digital on `S_T >= K` when a market is
    /// present.
    pub fn payoff_spec(&self) -> Result<PayoffSpec> {
        if let Some(p) = &self.payoff {
            return Ok(p.clone());
        }
        match &self.market {
            Some(m) => Ok(PayoffSpec::Digital { strike_level: m.strike.ln() - m.r * m.maturity }),
            None => Err(Error::Config("command needs a payoff".into())),
        }
    }
}
