//! Path simulation for the model catalog under the physical measure or the
//! minimal martingale measure.
//!
//! A [`SimulationLaw`] is a drift, a Brownian coefficient and a Lévy
//! measure written as a sum of family members. That covers the physical
//! measure (one component) and the minimal martingale measure, whose Lévy
//! measure `(1 + theta) nu - theta e^x nu` is again a sum of two members of
//! the same family.
//!
//! Every path draws from its own ChaCha8 stream (stream number = path
//! index), so results do not depend on the number of threads.

use crate::error::{Error, Result};
use crate::models::{jump_extent, LevyModel, ModelKind};
use crate::quadrature::{self, Tolerance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Normal, Poisson, StandardNormal};
use serde::Serialize;
use std::io::{Read, Write};

/// Default truncation level for infinite-activity jump parts.
pub const DEFAULT_EPSILON_JUMP: f64 = 1e-3;
const CELLS_PER_SIDE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    Physical,
    Mmm,
}

/// Drift, diffusion and Lévy measure of the simulated process.
#[derive(Debug, Clone)]
pub struct SimulationLaw {
    pub x0: f64,
    /// Mean drift per unit time.
    pub drift: f64,
    pub sigma: f64,
    /// Lévy measure as a sum of family members.
    pub components: Vec<ModelKind>,
    pub measure: Measure,
}

impl SimulationLaw {
    pub fn physical(model: &LevyModel) -> Self {
        let components = match model.kind {
            ModelKind::Brownian => Vec::new(),
            ref k => vec![k.clone()],
        };
        SimulationLaw { x0: model.x0, drift: model.mu, sigma: model.sigma, components, measure: Measure::Physical }
    }

    fn component_models(&self) -> Result<Vec<LevyModel>> {
        self.components.iter().map(|k| LevyModel::new(k.clone(), 0.0, 0.0, 0.0)).collect()
    }

    pub fn finite_activity(&self) -> bool {
        self.components.iter().all(|k| k.finite_activity())
    }

    /// Default small-jump Gaussian correction: on for infinite-variation
    /// components (NIG), off otherwise.
    pub fn default_gaussian_correction(&self) -> bool {
        self.components.iter().any(|k| matches!(k, ModelKind::Nig { .. }))
    }

    /// Density of the Lévy measure.
    pub fn levy_density(&self, x: f64) -> Result<f64> {
        use crate::models::LevyExponent;
        Ok(self.component_models()?.iter().map(|m| m.levy_density(x)).sum())
    }
}

/// A realized jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpMark {
    pub time: f64,
    pub size: f64,
    /// Index of the time step containing the jump.
    pub step: usize,
    /// State just before the jump: value at the start of the step plus
    /// earlier jumps within the same step.
    pub x_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub x_values: Vec<f64>,
    /// Increments of the driving Brownian motion (of the simulation measure).
    pub brownian_increments: Vec<f64>,
    /// Compensated sum of the jumps below the truncation level (Gaussian
    /// proxy; zero when the correction is off or activity is finite).
    pub small_jump_increments: Vec<f64>,
    pub jump_marks: Vec<JumpMark>,
    pub measure: Measure,
    pub seed: u64,
    pub path_index: u64,
    pub sigma: f64,
    /// Per-unit-time drift of the continuous part, i.e. mean drift minus
    /// the compensator of the simulated jumps.
    pub drift: f64,
}

impl PathRecord {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal(&self) -> f64 {
        *self.x_values.last().unwrap()
    }

    /// Path on a grid `factor` times coarser, with the same noise.
    pub fn coarsen(&self, factor: usize) -> Result<PathRecord> {
        let n = self.n_steps();
        if factor == 0 || n % factor != 0 {
            return Err(Error::Parameter(format!("cannot coarsen {n} steps by {factor}")));
        }
        let m = n / factor;
        let sum = |v: &[f64]| -> Vec<f64> { v.chunks(factor).map(|c| c.iter().sum()).collect() };
        let mut out = PathRecord {
            times: (0..=m).map(|k| self.times[k * factor]).collect(),
            x_values: (0..=m).map(|k| self.x_values[k * factor]).collect(),
            brownian_increments: sum(&self.brownian_increments),
            small_jump_increments: sum(&self.small_jump_increments),
            jump_marks: self.jump_marks.iter().map(|j| JumpMark { step: j.step / factor, ..*j }).collect(),
            ..self.clone()
        };
        out.recompute_left_limits();
        Ok(out)
    }

    fn recompute_left_limits(&mut self) {
        let mut current = usize::MAX;
        let mut acc = 0.0;
        for j in &mut self.jump_marks {
            if j.step != current {
                current = j.step;
                acc = self.x_values[j.step];
            }
            j.x_left = acc;
            acc += j.size;
        }
    }

    /// `x_values` rebuilt from the recorded noise.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.times.len());
        x.push(self.x_values[0]);
        let mut jumps = self.jump_marks.iter().peekable();
        for i in 0..self.n_steps() {
            let dt = self.times[i + 1] - self.times[i];
            let mut v = x[i] + self.drift * dt + self.sigma * self.brownian_increments[i] + self.small_jump_increments[i];
            while let Some(j) = jumps.peek() {
                if j.step != i {
                    break;
                }
                v += j.size;
                jumps.next();
            }
            x.push(v);
        }
        x
    }
}

/// Piecewise log-linear approximation of a Lévy density on `|x| >= eps`.
#[derive(Debug, Clone)]
struct CellTable {
    /// `(a, b, log density at a, slope)`
    cells: Vec<(f64, f64, f64, f64)>,
    cumulative: Vec<f64>,
    first_moment: f64,
}

fn cell_mass(la: f64, k: f64, h: f64) -> f64 {
    let kh = k * h;
    if kh.abs() < 1e-8 {
        la.exp() * h * (1.0 + 0.5 * kh)
    } else {
        la.exp() * kh.exp_m1() / k
    }
}

/// `int_0^h u e^{la + k u} du`.
fn cell_shift_moment(la: f64, k: f64, h: f64) -> f64 {
    let kh = k * h;
    if kh.abs() < 1e-4 {
        la.exp() * h * h * (0.5 + kh / 3.0 + kh * kh / 8.0)
    } else {
        la.exp() * ((kh.exp() * (kh - 1.0) + 1.0) / (k * k))
    }
}

impl CellTable {
    fn build<F: Fn(f64) -> f64>(density: F, edges: &[f64]) -> Self {
        let mut cells = Vec::with_capacity(edges.len());
        let mut cumulative = Vec::with_capacity(edges.len());
        let mut total = 0.0;
        let mut first_moment = 0.0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (da, db) = (density(a), density(b));
            if !(da > 0.0 && db > 0.0) {
                continue;
            }
            let (la, lb) = (da.ln(), db.ln());
            let h = b - a;
            let k = (lb - la) / h;
            let mass = cell_mass(la, k, h);
            total += mass;
            first_moment += a * mass + cell_shift_moment(la, k, h);
            cells.push((a, b, la, k));
            cumulative.push(total);
        }
        CellTable { cells, cumulative, first_moment }
    }

    fn rate(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.rate();
        let i = self.cumulative.partition_point(|&c| c <= target).min(self.cells.len() - 1);
        let (a, b, _, k) = self.cells[i];
        let h = b - a;
        let u: f64 = rng.random();
        let kh = k * h;
        let off = if kh.abs() < 1e-10 { u * h } else { (u * kh.exp_m1()).ln_1p() / k };
        (a + off).clamp(a.min(b), a.max(b))
    }
}

#[derive(Debug, Clone)]
enum JumpSampler {
    None,
    /// Normal mixture `(rate, mean, sd)`.
    NormalMixture { parts: Vec<(f64, f64, f64)>, rate: f64 },
    Table(CellTable),
}

impl JumpSampler {
    fn rate(&self) -> f64 {
        match self {
            JumpSampler::None => 0.0,
            JumpSampler::NormalMixture { rate, .. } => *rate,
            JumpSampler::Table(t) => t.rate(),
        }
    }

    /// `int x nu(dx)` over the simulated jumps.
    fn first_moment(&self) -> f64 {
        match self {
            JumpSampler::None => 0.0,
            JumpSampler::NormalMixture { parts, .. } => parts.iter().map(|(r, m, _)| r * m).sum(),
            JumpSampler::Table(t) => t.first_moment,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            JumpSampler::None => 0.0,
            JumpSampler::NormalMixture { parts, rate } => {
                let mut target = rng.random::<f64>() * rate;
                let mut chosen = parts[parts.len() - 1];
                for p in parts {
                    if target < p.0 {
                        chosen = *p;
                        break;
                    }
                    target -= p.0;
                }
                let z: f64 = rng.sample(StandardNormal);
                chosen.1 + chosen.2 * z
            }
            JumpSampler::Table(t) => t.sample(rng),
        }
    }
}

/// Simulation scheme actually in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scheme {
    /// Exact compound Poisson jumps.
    CompoundPoisson,
    /// Jumps with `|y| >= epsilon` exactly (up to tabulation), smaller ones
    /// replaced by their mean and optionally a matched Gaussian.
    Truncated { epsilon: f64, gaussian_correction: bool },
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub law: SimulationLaw,
    pub maturity: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    sampler: JumpSampler,
    /// `int_{|x| < eps} x^2 nu(dx)`.
    pub small_jump_variance: f64,
    /// Drift of the continuous part.
    continuous_drift: f64,
}

impl Simulator {
    /// `epsilon_jump` is used only for infinite-activity laws.
    pub fn new(law: SimulationLaw, maturity: f64, n_steps: usize, seed: u64, epsilon_jump: f64) -> Result<Self> {
        let correction = law.default_gaussian_correction();
        Self::with_options(law, maturity, n_steps, seed, epsilon_jump, correction)
    }

    pub fn with_options(
        law: SimulationLaw,
        maturity: f64,
        n_steps: usize,
        seed: u64,
        epsilon_jump: f64,
        gaussian_correction: bool,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Parameter("n_steps must be at least 1".into()));
        }
        if !(maturity > 0.0) {
            return Err(Error::Parameter(format!("maturity must be positive, got {maturity}")));
        }
        if !(law.sigma >= 0.0) || !law.drift.is_finite() || !law.x0.is_finite() {
            return Err(Error::Parameter("invalid drift, sigma or x0".into()));
        }
        let models = law.component_models()?;
        let mut small_jump_variance = 0.0;
        let (scheme, sampler) = if models.is_empty() {
            (Scheme::CompoundPoisson, JumpSampler::None)
        } else if models.iter().all(|m| matches!(m.kind, ModelKind::Merton { .. })) {
            let parts: Vec<(f64, f64, f64)> = models
                .iter()
                .map(|m| match m.kind {
                    ModelKind::Merton { gamma, m, delta } => (gamma, m, delta),
                    _ => unreachable!(),
                })
                .collect();
            let rate = parts.iter().map(|p| p.0).sum();
            (Scheme::CompoundPoisson, JumpSampler::NormalMixture { parts, rate })
        } else {
            let eps = if law.finite_activity() { 0.0 } else { epsilon_jump };
            if !law.finite_activity() && !(eps > 0.0) {
                return Err(Error::Parameter(format!("epsilon_jump must be positive, got {epsilon_jump}")));
            }
            let density = |x: f64| -> f64 {
                use crate::models::LevyExponent;
                models.iter().map(|m| m.levy_density(x)).sum()
            };
            let extent = models.iter().map(|m| jump_extent(m, 1e-13)).fold(0.0, f64::max);
            let mut edges = Vec::new();
            let lo = if eps > 0.0 { eps } else { extent * 1e-9 };
            for side in [-1.0, 1.0] {
                let mut e: Vec<f64> = (0..=CELLS_PER_SIDE)
                    .map(|k| side * lo * (extent / lo).powf(k as f64 / CELLS_PER_SIDE as f64))
                    .collect();
                if side < 0.0 {
                    e.reverse();
                }
                edges.push(e);
            }
            let mut table = CellTable::build(&density, &edges[0]);
            let pos = CellTable::build(&density, &edges[1]);
            let offset = table.rate();
            table.first_moment += pos.first_moment;
            table.cells.extend(pos.cells);
            table.cumulative.extend(pos.cumulative.iter().map(|c| c + offset));
            if eps > 0.0 {
                let tol = Tolerance::new(1e-16, 1e-10);
                let up = quadrature::integral_towards_zero(|x| x * x * density(x), eps, tol)?.value;
                let down = quadrature::integral_towards_zero(|x| x * x * density(-x), eps, tol)?.value;
                small_jump_variance = up + down;
            }
            (Scheme::Truncated { epsilon: eps, gaussian_correction: gaussian_correction && eps > 0.0 }, JumpSampler::Table(table))
        };
        let continuous_drift = law.drift - sampler.first_moment();
        Ok(Simulator { law, maturity, n_steps, seed, scheme, sampler, small_jump_variance, continuous_drift })
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.n_steps as f64
    }

    pub fn jump_rate(&self) -> f64 {
        self.sampler.rate()
    }

    fn rng(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index);
        rng
    }

    pub fn path(&self, path_index: u64) -> PathRecord {
        let mut rng = self.rng(path_index);
        let n = self.n_steps;
        let dt = self.dt();
        let sqrt_dt = dt.sqrt();
        let correction = matches!(self.scheme, Scheme::Truncated { gaussian_correction: true, .. });
        let small_sd = (self.small_jump_variance * dt).sqrt();
        let poisson = (self.sampler.rate() > 0.0).then(|| Poisson::new(self.sampler.rate() * dt).unwrap());
        let mut times = Vec::with_capacity(n + 1);
        let mut x = Vec::with_capacity(n + 1);
        let mut dw = Vec::with_capacity(n);
        let mut dz = Vec::with_capacity(n);
        let mut marks = Vec::new();
        times.push(0.0);
        x.push(self.law.x0);
        let mut step_jumps: Vec<(f64, f64)> = Vec::new();
        for i in 0..n {
            let t0 = i as f64 * dt;
            let w: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
            let z = if correction { rng.sample::<f64, _>(StandardNormal) * small_sd } else { 0.0 };
            step_jumps.clear();
            if let Some(p) = &poisson {
                let count = p.sample(&mut rng) as usize;
                for _ in 0..count {
                    let u: f64 = rng.random();
                    let y = self.sampler.sample(&mut rng);
                    step_jumps.push((t0 + u * dt, y));
                }
                step_jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            }
            let mut v = x[i];
            for &(tj, y) in &step_jumps {
                marks.push(JumpMark { time: tj, size: y, step: i, x_left: v });
                v += y;
            }
            v += self.continuous_drift * dt + self.law.sigma * w + z;
            dw.push(w);
            dz.push(z);
            x.push(v);
            times.push(if i + 1 == n { self.maturity } else { (i + 1) as f64 * dt });
        }
        PathRecord {
            times,
            x_values: x,
            brownian_increments: dw,
            small_jump_increments: dz,
            jump_marks: marks,
            measure: self.law.measure,
            seed: self.seed,
            path_index,
            sigma: self.law.sigma,
            drift: self.continuous_drift,
        }
    }

    /// Paths `0..n_paths`, generated lazily.
    pub fn paths(&self, n_paths: u64) -> impl Iterator<Item = PathRecord> + '_ {
        (0..n_paths).map(move |k| self.path(k))
    }
}

/// `simulate` entry point: a lazily generated stream of paths.
pub fn simulate(
    law: SimulationLaw,
    maturity: f64,
    n_steps: usize,
    n_paths: u64,
    seed: u64,
    epsilon_jump: f64,
) -> Result<PathStream> {
    Ok(PathStream { sim: Simulator::new(law, maturity, n_steps, seed, epsilon_jump)?, next: 0, n_paths })
}

pub struct PathStream {
    pub sim: Simulator,
    next: u64,
    n_paths: u64,
}

impl Iterator for PathStream {
    type Item = PathRecord;

    fn next(&mut self) -> Option<PathRecord> {
        if self.next >= self.n_paths {
            return None;
        }
        let p = self.sim.path(self.next);
        self.next += 1;
        Some(p)
    }
}

/// Exact draws of `X_T` by subordination (NIG via inverse Gaussian time,
/// VG via a difference of gamma processes, Merton via Poisson mixing).
pub fn sample_terminal(law: &SimulationLaw, maturity: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = law.component_models()?;
    let mean_shift: f64 = law.x0 + law.drift * maturity;
    let normal = Normal::new(0.0, 1.0).unwrap();
    // centered component samplers
    enum Part {
        Merton(f64, f64, f64),
        Nig { beta: f64, ig: InverseGaussian<f64>, mean: f64 },
        Vg { up: Gamma<f64>, down: Gamma<f64>, mean: f64 },
        Table(Box<Simulator>),
    }
    let mut parts = Vec::new();
    for m in &models {
        parts.push(match m.kind {
            ModelKind::Merton { gamma, m, delta } => Part::Merton(gamma * maturity, m, delta),
            ModelKind::Nig { a, b, delta } => {
                let g = (a * a - b * b).sqrt();
                let mean_time = delta * maturity / g;
                let shape = (delta * maturity).powi(2);
                let ig = InverseGaussian::new(mean_time, shape).map_err(|e| Error::Parameter(e.to_string()))?;
                Part::Nig { beta: b, ig, mean: b * mean_time }
            }
            ModelKind::VarianceGamma { c, g, m } => {
                let up = Gamma::new(c * maturity, 1.0 / m).map_err(|e| Error::Parameter(e.to_string()))?;
                let down = Gamma::new(c * maturity, 1.0 / g).map_err(|e| Error::Parameter(e.to_string()))?;
                Part::Vg { up, down, mean: c * maturity * (1.0 / m - 1.0 / g) }
            }
            ModelKind::Brownian => continue,
            ModelKind::Custom(_) => {
                let single = SimulationLaw {
                    x0: 0.0,
                    drift: 0.0,
                    sigma: 0.0,
                    components: vec![m.kind.clone()],
                    measure: law.measure,
                };
                Part::Table(Box::new(Simulator::new(single, maturity, 1, seed ^ 0x5eed, DEFAULT_EPSILON_JUMP)?))
            }
        });
    }
    let sd = law.sigma * maturity.sqrt();
    for k in 0..n {
        let mut x = mean_shift + sd * normal.sample(&mut rng);
        for p in &parts {
            x += match p {
                Part::Merton(lambda, m, delta) => {
                    let count = if *lambda > 0.0 { Poisson::new(*lambda).unwrap().sample(&mut rng) } else { 0.0 };
                    // sum of `count` normals, compensated
                    count * m + delta * count.sqrt() * normal.sample(&mut rng) - lambda * m
                }
                Part::Nig { beta, ig, mean } => {
                    let tau = ig.sample(&mut rng);
                    beta * tau + tau.sqrt() * normal.sample(&mut rng) - mean
                }
                Part::Vg { up, down, mean } => up.sample(&mut rng) - down.sample(&mut rng) - mean,
                Part::Table(sim) => sim.path(k as u64).terminal(),
            };
        }
        out.push(x);
    }
    Ok(out)
}

const DUMP_MAGIC: &[u8; 4] = b"LCOP";
const DUMP_VERSION: u32 = 1;

/// Binary dump: magic, version, seed, path count, step count, then per
/// path the state vector, Brownian and small-jump increments, the jump
/// count and `(time, size, step)` triples. All little-endian.
pub fn write_paths<W: Write>(mut w: W, seed: u64, paths: &[PathRecord]) -> Result<()> {
    let n_steps = paths.first().map(|p| p.n_steps()).unwrap_or(0) as u64;
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&(paths.len() as u64).to_le_bytes())?;
    w.write_all(&n_steps.to_le_bytes())?;
    for p in paths {
        if p.n_steps() as u64 != n_steps {
            return Err(Error::Parameter("all dumped paths must share the time grid".into()));
        }
        w.write_all(&p.path_index.to_le_bytes())?;
        w.write_all(&[match p.measure {
            Measure::Physical => 0u8,
            Measure::Mmm => 1u8,
        }])?;
        for v in [p.sigma, p.drift] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in p.times.iter().chain(&p.x_values).chain(&p.brownian_increments).chain(&p.small_jump_increments) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(p.jump_marks.len() as u64).to_le_bytes())?;
        for j in &p.jump_marks {
            w.write_all(&j.time.to_le_bytes())?;
            w.write_all(&j.size.to_le_bytes())?;
            w.write_all(&(j.step as u64).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn read_paths<R: Read>(mut r: R) -> Result<Vec<PathRecord>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Config("not a path dump (bad magic)".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != DUMP_VERSION {
        return Err(Error::Config(format!("unsupported path dump version {version}")));
    }
    let seed = read_u64(&mut r)?;
    let n_paths = read_u64(&mut r)?;
    let n_steps = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(n_paths as usize);
    for _ in 0..n_paths {
        let path_index = read_u64(&mut r)?;
        let mut m = [0u8; 1];
        r.read_exact(&mut m)?;
        let measure = if m[0] == 0 { Measure::Physical } else { Measure::Mmm };
        let head = read_f64s(&mut r, 2)?;
        let times = read_f64s(&mut r, n_steps + 1)?;
        let x_values = read_f64s(&mut r, n_steps + 1)?;
        let brownian_increments = read_f64s(&mut r, n_steps)?;
        let small_jump_increments = read_f64s(&mut r, n_steps)?;
        let n_jumps = read_u64(&mut r)?;
        let mut jump_marks = Vec::with_capacity(n_jumps as usize);
        for _ in 0..n_jumps {
            let tv = read_f64s(&mut r, 2)?;
            let step = read_u64(&mut r)? as usize;
            jump_marks.push(JumpMark { time: tv[0], size: tv[1], step, x_left: 0.0 });
        }
        let mut p = PathRecord {
            times,
            x_values,
            brownian_increments,
            small_jump_increments,
            jump_marks,
            measure,
            seed,
            path_index,
            sigma: head[0],
            drift: head[1],
        };
        p.recompute_left_limits();
        out.push(p);
    }
    Ok(out)
}

/// Terminal statistics over a set of paths.
#[derive(Debug, Clone, Serialize)]
pub struct TerminalStats {
    pub n_paths: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub mean_jumps: f64,
}

pub fn terminal_stats(paths: &[PathRecord]) -> TerminalStats {
    let xs: Vec<f64> = paths.iter().map(|p| p.terminal()).collect();
    let mut s = sample_moments(&xs);
    s.mean_jumps = paths.iter().map(|p| p.jump_marks.len() as f64).sum::<f64>() / paths.len().max(1) as f64;
    s
}

pub fn sample_moments(xs: &[f64]) -> TerminalStats {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    TerminalStats {
        n_paths: xs.len(),
        mean,
        variance: m2 * n / (n - 1.0),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        mean_jumps: 0.0,
    }
}

pub fn write_terminal_csv<W: Write>(mut w: W, stats: &TerminalStats) -> Result<()> {
    writeln!(w, "n_paths,mean,variance,skewness,excess_kurtosis,mean_jumps")?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        stats.n_paths, stats.mean, stats.variance, stats.skewness, stats.excess_kurtosis, stats.mean_jumps
    )?;
    Ok(())
}
