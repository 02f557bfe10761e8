//! Batch front end: reads a JSON config, runs one command and renders its
//! CSV or JSON artifact behind a versioned header line.

pub mod config;

use clap::ValueEnum;
use config::{ConfigFile, DensityMeasure};
use lcop_core::fourier::{DensityEvaluator, QuadratureGrid};
use lcop_core::hedging::{fs_study, FsReport, LrmHedger};
use lcop_core::malliavin::{malliavin_classify, MalliavinReport};
use lcop_core::mmm::{build_mmm, check_assumption3, Assumption3Report};
use lcop_core::models::{check_assumption1, Assumption1Report, LevyExponent, LevyModel};
use lcop_core::payoffs::{check_assumption2, Assumption2Report};
use lcop_core::representation::{build_integrands, replication_study, ReplicationReport};
use lcop_core::simulator::DEFAULT_EPSILON_JUMP;
use lcop_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::PathBuf;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Check,
    Represent,
    Density,
    Hedge,
    VerifyReplication,
    VerifyFs,
    Malliavin,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Represent => "represent",
            Command::Density => "density",
            Command::Hedge => "hedge",
            Command::VerifyReplication => "verify-replication",
            Command::VerifyFs => "verify-fs",
            Command::Malliavin => "malliavin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Everything a run depends on.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub config: ConfigFile,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub paths: usize,
    pub steps: Vec<usize>,
    pub tol: Option<f64>,
    pub epsilon_jump: f64,
    /// `None` selects the command's natural output (text table for
    /// `check`, CSV for tables, JSON for reports).
    pub format: Option<Format>,
}

impl RunConfig {
    /// Defaults for anything neither the file nor the flags set.
    pub fn new(command: Command, config: ConfigFile) -> Self {
        RunConfig {
            command,
            seed: config.seed.unwrap_or(1),
            paths: config.paths.unwrap_or(10_000),
            steps: config.steps.clone().unwrap_or_else(|| vec![250, 500, 1000]),
            tol: None,
            epsilon_jump: config.epsilon_jump.unwrap_or(DEFAULT_EPSILON_JUMP),
            format: None,
            out_dir: None,
            config,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::Config(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be positive".into()));
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::Config(format!("steps must be positive, got {:?}", self.steps)));
        }
        if !(self.epsilon_jump > 0.0) {
            return Err(Error::Config(format!("epsilon_jump must be positive, got {}", self.epsilon_jump)));
        }
        if let Some(dir) = &self.out_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the run inputs.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn grid(&self, alpha: f64) -> Result<QuadratureGrid> {
        self.config.grid.build(alpha, self.tol)
    }
}

/// Rendered artifact of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// All requested checks passed (always true for pure emitters).
    pub passed: bool,
    pub body: String,
    /// File the body was written to when an output directory was given.
    pub artifact: Option<PathBuf>,
}

enum Rendered {
    Text(String),
    Csv(String),
    Json(serde_json::Value),
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (passed, rendered) = match cfg.command {
        Command::Check => check(cfg)?,
        Command::Represent => (true, represent(cfg)?),
        Command::Density => (true, density(cfg)?),
        Command::Hedge => (true, hedge(cfg)?),
        Command::VerifyReplication => verify_replication(cfg)?,
        Command::VerifyFs => verify_fs(cfg)?,
        Command::Malliavin => malliavin(cfg)?,
    };
    let hash = cfg.config_hash();
    let (body, ext) = match rendered {
        Rendered::Text(t) => (format!("# lcop {VERSION} command={} config-sha256={hash}\n{t}", cfg.command.name()), "txt"),
        Rendered::Csv(t) => (format!("# lcop {VERSION} command={} config-sha256={hash}\n{t}", cfg.command.name()), "csv"),
        Rendered::Json(v) => {
            let header = serde_json::json!({
                "tool": "lcop",
                "version": VERSION,
                "command": cfg.command.name(),
                "config_sha256": hash,
            });
            (format!("{header}\n{}\n", serde_json::to_string(&v)?), "json")
        }
    };
    let artifact = match &cfg.out_dir {
        Some(dir) => {
            let path = dir.join(format!("{}.{ext}", cfg.command.name()));
            std::fs::write(&path, &body)?;
            Some(path)
        }
        None => None,
    };
    Ok(RunOutcome { passed, body, artifact })
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Debug, Serialize)]
struct CheckReport {
    alpha: f64,
    assumption1: Assumption1Report,
    assumption2: Option<Assumption2Report>,
    assumption3: Option<Assumption3Report>,
    passed: bool,
}

fn check(cfg: &RunConfig) -> Result<(bool, Rendered)> {
    let c = &cfg.config;
    let model = c.model()?;
    let horizon = c.horizon()?;
    let payoff_spec = c.payoff_spec().ok();
    let alpha = match (c.grid.alpha, &payoff_spec) {
        (Some(a), _) => a,
        (None, Some(p)) if c.market.is_none() => lcop_core::payoffs::default_alpha(&p.kind(), &model),
        _ => 1.0,
    };
    let a1 = check_assumption1(&model, alpha, horizon);
    let a2 = payoff_spec.as_ref().map(|p| check_assumption2(&lcop_core::DampedPayoff::new(p.kind(), alpha), &model));
    let a3 = match &c.market {
        Some(_) => Some(check_assumption3(&c.market()?, alpha)),
        None => None,
    };
    let passed = a1.moment_holds && a2.as_ref().is_none_or(|r| r.holds) && a3.as_ref().is_none_or(|r| r.holds);
    let report = CheckReport { alpha, assumption1: a1, assumption2: a2, assumption3: a3, passed };
    let rendered = match cfg.format {
        Some(Format::Json) => Rendered::Json(to_json(&report)?),
        Some(Format::Csv) => {
            let mut s = String::from("assumption,verdict,failure,detail\n");
            for (name, ok, failure, detail) in verdict_rows(&report) {
                let failure = failure.unwrap_or_default();
                writeln!(s, "{name},{},{failure},\"{}\"", mark(ok), detail.replace('"', "'")).unwrap();
            }
            Rendered::Csv(s)
        }
        None => {
            let mut s = format!("model: {} (alpha = {alpha})\n", model.label());
            for (name, ok, failure, detail) in verdict_rows(&report) {
                let failure = failure.map(|f| format!(" ({f})")).unwrap_or_default();
                let detail = if detail.is_empty() { String::new() } else { format!(" - {detail}") };
                writeln!(s, "{name}: {}{failure}{detail}", mark(ok)).unwrap();
            }
            if let Some(r) = &report.assumption3 {
                if !r.holds {
                    writeln!(s, "hint: Fourier route unavailable; run `lcop malliavin` for the Malliavin route").unwrap();
                }
            }
            Rendered::Text(s)
        }
    };
    Ok((passed, rendered))
}

/// `(assumption, holds, failing part, detail)`.
fn verdict_rows(r: &CheckReport) -> Vec<(&'static str, bool, Option<String>, String)> {
    let mut rows = Vec::new();
    let a1 = &r.assumption1;
    let decay = match (&a1.inconclusive, a1.decay_holds) {
        (Some(e), _) => format!("phi decay inconclusive: {e}"),
        (None, true) => "phi decay integrable".to_string(),
        (None, false) if a1.moment_holds => "phi decay not integrable".to_string(),
        (None, false) => format!("alpha = {} outside admissible interval {:?}", a1.moment.alpha, a1.moment.admissible),
    };
    rows.push(("Assumption 1", a1.moment_holds, (!a1.moment_holds).then(|| "moment".to_string()), decay));
    if let Some(a2) = &r.assumption2 {
        rows.push(("Assumption 2", a2.holds, None, a2.note.clone()));
    }
    if let Some(a3) = &r.assumption3 {
        rows.push(("Assumption 3", a3.holds, a3.failure.clone(), a3.detail.clone().unwrap_or_default()));
    }
    rows
}

/// `x0 + k1 t` plus or minus `width` standard deviations of `X_T - X_0`.
fn state_window(model: &LevyModel, horizon: f64, width: f64) -> Result<(f64, f64)> {
    let k = model.cumulants()?;
    let centre = model.x0 + k[0] * horizon;
    let sd = (k[1] * horizon).sqrt().max(1e-3);
    Ok((centre - width * sd, centre + width * sd))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn times(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * horizon / n as f64).collect()
}

fn represent(cfg: &RunConfig) -> Result<Rendered> {
    let c = &cfg.config;
    let model = c.model()?;
    let horizon = c.horizon()?;
    let payoff_spec = c.payoff_spec()?;
    let alpha = c.grid.alpha.unwrap_or_else(|| lcop_core::payoffs::default_alpha(&payoff_spec.kind(), &model));
    let grid = cfg.grid(alpha)?;
    let payoff = payoff_spec.build(&c.grid, &model);
    let integrands = build_integrands(&model, &payoff, &grid, horizon)?;
    let s = &c.surface;
    let (lo, hi) = match (s.x_min, s.x_max) {
        (Some(a), Some(b)) => (a, b),
        _ => state_window(&model, horizon, 4.0)?,
    };
    let xs = linspace(lo, hi, s.n_x);
    let slices: Result<Vec<_>> =
        times(horizon, s.n_t).into_par_iter().map(|t| integrands.surface_slice(t, &xs, &s.jumps)).collect();
    let points: Vec<_> = slices?.into_iter().flatten().collect();
    if cfg.format == Some(Format::Json) {
        return Ok(Rendered::Json(serde_json::json!({ "jumps": s.jumps, "points": points })));
    }
    let mut out = String::from("t,x,value,u");
    for y in &s.jumps {
        write!(out, ",theta({y})").unwrap();
    }
    out.push_str(",err_estimate\n");
    for p in &points {
        write!(out, "{},{},{},{}", p.t, p.x, p.value, p.u).unwrap();
        for th in &p.theta {
            write!(out, ",{th}").unwrap();
        }
        writeln!(out, ",{}", p.err_estimate).unwrap();
    }
    Ok(Rendered::Csv(out))
}

#[derive(Debug, Serialize)]
struct DensityRow {
    t: f64,
    x: f64,
    value: f64,
    err_estimate: f64,
}

fn density(cfg: &RunConfig) -> Result<Rendered> {
    let c = &cfg.config;
    let model = c.model()?;
    let horizon = c.horizon()?;
    let grid = cfg.grid(1.0)?;
    let s = &c.surface;
    let measure = c.measure.unwrap_or(DensityMeasure::Physical);
    let centred = model.clone().with_x0(0.0);
    let (lo, hi) = match (s.x_min, s.x_max) {
        (Some(a), Some(b)) => (a, b),
        _ => state_window(&centred, horizon, 6.0)?,
    };
    let ys = linspace(lo, hi, s.n_x);
    let transform = match measure {
        DensityMeasure::Physical => None,
        DensityMeasure::Mmm => Some(build_mmm(&c.market()?)?),
    };
    let star = transform.as_ref().map(|t| t.star_model());
    let law: &dyn LevyExponent = match &star {
        Some(s) => s,
        None => &model,
    };
    let rows: Result<Vec<Vec<DensityRow>>> = times(horizon, s.n_t)
        .into_par_iter()
        .map(|t| {
            let ev = DensityEvaluator::new(law, &grid, t, horizon, (lo, hi))?;
            Ok(ys
                .iter()
                .map(|&y| {
                    let v = ev.density(y);
                    DensityRow { t, x: y, value: v.value, err_estimate: v.error_estimate }
                })
                .collect())
        })
        .collect();
    let rows: Vec<DensityRow> = rows?.into_iter().flatten().collect();
    if cfg.format == Some(Format::Json) {
        return Ok(Rendered::Json(serde_json::json!({ "measure": measure, "rows": rows })));
    }
    let mut out = String::from("t,x,value,err_estimate\n");
    for r in &rows {
        writeln!(out, "{},{},{},{}", r.t, r.x, r.value, r.err_estimate).unwrap();
    }
    Ok(Rendered::Csv(out))
}

fn hedge(cfg: &RunConfig) -> Result<Rendered> {
    let c = &cfg.config;
    let market = c.market()?;
    let transform = build_mmm(&market)?;
    let grid = cfg.grid(c.grid.alpha.unwrap_or(1.0))?;
    let hedger = LrmHedger::new(&market, &transform, &grid)?;
    let rows = hedger.hedge_grid(c.surface.n_t, c.surface.n_s)?;
    if cfg.format == Some(Format::Json) {
        return Ok(Rendered::Json(to_json(&rows)?));
    }
    let mut out = String::from("t,S,xi,kappa,nu_integral,err_estimate\n");
    for r in &rows {
        writeln!(out, "{},{},{},{},{},{}", r.t, r.s, r.xi, r.kappa, r.nu_integral, r.err_estimate).unwrap();
    }
    Ok(Rendered::Csv(out))
}

#[derive(Debug, Serialize)]
struct ReplicationVerdict {
    reports: Vec<ReplicationReport>,
    mse_decreasing: bool,
    mean_within_3se: bool,
    passed: bool,
}

fn verify_replication(cfg: &RunConfig) -> Result<(bool, Rendered)> {
    let c = &cfg.config;
    let model = c.model()?;
    let horizon = c.horizon()?;
    let payoff_spec = c.payoff_spec()?;
    let alpha = c.grid.alpha.unwrap_or_else(|| lcop_core::payoffs::default_alpha(&payoff_spec.kind(), &model));
    let grid = cfg.grid(alpha)?;
    let payoff = payoff_spec.build(&c.grid, &model);
    let integrands = build_integrands(&model, &payoff, &grid, horizon)?;
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let reports = replication_study(&integrands, cfg.paths, &steps, cfg.seed, cfg.epsilon_jump)?;
    let mse_decreasing = reports.windows(2).all(|w| w[1].mse < w[0].mse);
    let mean_within_3se = reports.iter().all(|r| (r.mean_replication - r.analytic_mean).abs() <= 3.0 * r.se);
    let passed = mse_decreasing && mean_within_3se;
    let verdict = ReplicationVerdict { reports, mse_decreasing, mean_within_3se, passed };
    let rendered = if cfg.format == Some(Format::Csv) {
        let mut out = String::from("n_paths,n_steps,mse,mean_claim,mean_replication,se,mse_se,analytic_mean\n");
        for r in &verdict.reports {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n_paths, r.n_steps, r.mse, r.mean_claim, r.mean_replication, r.se, r.mse_se, r.analytic_mean
            )
            .unwrap();
        }
        Rendered::Csv(out)
    } else {
        Rendered::Json(to_json(&verdict)?)
    };
    Ok((passed, rendered))
}

#[derive(Debug, Serialize)]
struct FsVerdict {
    reports: Vec<FsReport>,
    l_mean_zero: bool,
    orthogonal: bool,
    negative_control_detected: bool,
    identity_mse_decreasing: bool,
    passed: bool,
}

fn verify_fs(cfg: &RunConfig) -> Result<(bool, Rendered)> {
    let c = &cfg.config;
    let market = c.market()?;
    let transform = build_mmm(&market)?;
    let grid = cfg.grid(c.grid.alpha.unwrap_or(1.0))?;
    let hedger = LrmHedger::new(&market, &transform, &grid)?;
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let reports = fs_study(&hedger, cfg.paths, &steps, cfg.seed, cfg.epsilon_jump)?;
    let within = |m: f64, se: f64| m.abs() <= 3.0 * se;
    let l_mean_zero = reports.iter().all(|r| within(r.mean_l, r.se_l));
    let orthogonal = reports.iter().all(|r| within(r.mean_bracket, r.se_bracket));
    let negative_control_detected = reports.iter().all(|r| !within(r.mean_bracket_perturbed, r.se_bracket_perturbed));
    let identity_mse_decreasing = reports.windows(2).all(|w| w[1].identity_mse < w[0].identity_mse);
    let passed = l_mean_zero && orthogonal && negative_control_detected && identity_mse_decreasing;
    let verdict = FsVerdict { reports, l_mean_zero, orthogonal, negative_control_detected, identity_mse_decreasing, passed };
    let rendered = if cfg.format == Some(Format::Csv) {
        let mut out = String::from(
            "n_paths,n_steps,h0,mean_l,se_l,mean_bracket,se_bracket,mean_bracket_perturbed,se_bracket_perturbed,identity_mse,max_abs_l\n",
        );
        for r in &verdict.reports {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n_paths,
                r.n_steps,
                r.h0,
                r.mean_l,
                r.se_l,
                r.mean_bracket,
                r.se_bracket,
                r.mean_bracket_perturbed,
                r.se_bracket_perturbed,
                r.identity_mse,
                r.max_abs_l
            )
            .unwrap();
        }
        Rendered::Csv(out)
    } else {
        Rendered::Json(to_json(&verdict)?)
    };
    Ok((passed, rendered))
}

fn malliavin(cfg: &RunConfig) -> Result<(bool, Rendered)> {
    let report: MalliavinReport = malliavin_classify(&cfg.config.model()?)?;
    let rendered = if cfg.format == Some(Format::Csv) {
        let mut out = String::from("eps,truncated_integral\n");
        for t in &report.truncated {
            writeln!(out, "{},{}", t.eps, t.value).unwrap();
        }
        Rendered::Csv(out)
    } else {
        Rendered::Json(to_json(&report)?)
    };
    Ok((true, rendered))
}

/// Structured error body printed on failure.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}
