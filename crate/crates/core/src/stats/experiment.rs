use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{chi_square, ks_statistic, moments, normal_cdf, tv_distance};
use super::empirical::{EmpiricalLaw, EmpiricalSample};
use crate::dist::{limit_increment_law, ExtinctionLaw, LimitRegime, MulticolorLimitLaw, Pmf, UrnLawParams};
use crate::error::{Error, Result};
use crate::limitproc::{
    linear_sde_moments, multicolor_det_limit, polya_det_limit, qpolya_det_limit, DetRegime, PolyaFluct, QPolyaFluct,
};
use crate::qcalc::QParam;
use crate::rng::stream_rng;
use crate::urn::{Count, UrnConfig, UrnSampler};

/// Tail tolerance for tabulating limit laws.
const LAW_TOL: f64 = 1e-12;
/// Quadrature cells for the Gaussian moments of the q-fluctuation limit.
const MOMENT_CELLS: usize = 4096;
/// Width of the fluid-limit band, in units of `1/sqrt(m)`.
const FLUID_BAND: f64 = 5.0;
/// Guards `floor(m t)` against `m t` landing a rounding error below an integer.
const INDEX_EPS: f64 = 1e-9;

/// Limit statements that can be checked by simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// Few white balls: pure-birth limit of the white count.
    #[serde(rename = "1.1")]
    PolyaBirth,
    /// Sublinear white balls: Poisson limit.
    #[serde(rename = "1.2")]
    PolyaPoisson,
    /// Linear start: deterministic fluid limit.
    #[serde(rename = "1.3")]
    PolyaFluid,
    /// Gaussian fluctuations around the fluid limit.
    #[serde(rename = "1.4")]
    PolyaFluct,
    /// Eventual number of draws of the disadvantaged colour, `q > 1`.
    #[serde(rename = "1.5")]
    Extinction,
    /// Pure-birth limit with `q = c^{1/m}`.
    #[serde(rename = "1.6")]
    QBirth,
    /// Poisson limit with `q = c^{1/m}`.
    #[serde(rename = "1.7")]
    QPoisson,
    /// Fluid limit with `q = c^{1/m}`.
    #[serde(rename = "1.8")]
    QFluid,
    /// Fluctuations around the q-fluid limit.
    #[serde(rename = "1.9")]
    QFluct,
    /// Eventual draw counts of colours `2..=l` in the many-colour urn.
    #[serde(rename = "1.11")]
    MulticolorExtinction,
    /// Fluid limit of the many-colour urn with `q = c^{1/m}`, `c < 1`.
    #[serde(rename = "1.12")]
    MulticolorFluid,
}

impl TheoremId {
    pub const ALL: [TheoremId; 11] = [
        TheoremId::PolyaBirth,
        TheoremId::PolyaPoisson,
        TheoremId::PolyaFluid,
        TheoremId::PolyaFluct,
        TheoremId::Extinction,
        TheoremId::QBirth,
        TheoremId::QPoisson,
        TheoremId::QFluid,
        TheoremId::QFluct,
        TheoremId::MulticolorExtinction,
        TheoremId::MulticolorFluid,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TheoremId::PolyaBirth => "1.1",
            TheoremId::PolyaPoisson => "1.2",
            TheoremId::PolyaFluid => "1.3",
            TheoremId::PolyaFluct => "1.4",
            TheoremId::Extinction => "1.5",
            TheoremId::QBirth => "1.6",
            TheoremId::QPoisson => "1.7",
            TheoremId::QFluid => "1.8",
            TheoremId::QFluct => "1.9",
            TheoremId::MulticolorExtinction => "1.11",
            TheoremId::MulticolorFluid => "1.12",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            TheoremId::PolyaBirth => "pure-birth limit, classical urn",
            TheoremId::PolyaPoisson => "Poisson limit, classical urn",
            TheoremId::PolyaFluid => "fluid limit, classical urn",
            TheoremId::PolyaFluct => "Gaussian fluctuations, classical urn",
            TheoremId::Extinction => "extinction law of the weak colour, q > 1",
            TheoremId::QBirth => "pure-birth limit, q = c^(1/m)",
            TheoremId::QPoisson => "Poisson limit, q = c^(1/m)",
            TheoremId::QFluid => "fluid limit, q = c^(1/m)",
            TheoremId::QFluct => "Gaussian fluctuations, q = c^(1/m)",
            TheoremId::MulticolorExtinction => "joint extinction law, many colours, q < 1",
            TheoremId::MulticolorFluid => "fluid limit, many colours, q = c^(1/m)",
        }
    }

    /// Metrics reported for this theorem.
    pub fn metrics(self) -> &'static [&'static str] {
        match self.kind() {
            Kind::Counts => &["tv", "tv_slack", "chi2", "chi2_dof", "mean", "mean_gap", "var", "var_gap"],
            Kind::Vector => &["tv", "tv_slack"],
            Kind::Fluid => &["mean_abs_gap", "sup_gap_mean", "frac_within", "band"],
            Kind::Fluct => &["ks", "mean_gap", "mean_gap_sd", "var", "target_var", "var_gap"],
        }
    }

    fn kind(self) -> Kind {
        match self {
            TheoremId::PolyaBirth
            | TheoremId::PolyaPoisson
            | TheoremId::QBirth
            | TheoremId::QPoisson
            | TheoremId::Extinction => Kind::Counts,
            TheoremId::MulticolorExtinction => Kind::Vector,
            TheoremId::PolyaFluid | TheoremId::QFluid | TheoremId::MulticolorFluid => Kind::Fluid,
            TheoremId::PolyaFluct | TheoremId::QFluct => Kind::Fluct,
        }
    }

    /// Whether `m` indexes the number of draws (rather than the urn size)
    /// and the time checkpoints are unused.
    pub fn draws_indexed(self) -> bool {
        matches!(self, TheoremId::Extinction | TheoremId::MulticolorExtinction)
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown theorem id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Counts,
    Vector,
    Fluid,
    Fluct,
}

/// Urn and limit parameters. Each theorem reads the subset it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colours: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

fn required<T: Copy>(value: Option<T>, name: &'static str, theorem: TheoremId) -> Result<T> {
    value.ok_or_else(|| Error::param(name, format!("is required for theorem {theorem}")))
}

/// One convergence study: a theorem, its parameters, the grid of `m` and
/// the time checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub theorem: TheoremId,
    #[serde(default)]
    pub params: ExperimentParams,
    pub m_grid: Vec<u64>,
    pub replicates: usize,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    pub seed: u64,
}

/// What is simulated and what it is compared with, with parameters resolved.
#[derive(Debug, Clone)]
enum Plan {
    Birth { regime: LimitRegime, w0: u64, b0: f64, k: u64, c: Option<f64> },
    Poisson { regime: LimitRegime, b0: f64, k: u64, c: Option<f64> },
    Fluid { a: f64, b: f64, k: u64, c: Option<f64> },
    Fluct { a: f64, b: f64, k: u64, c: Option<f64>, theta1: f64, theta2: f64 },
    Extinction { params: UrnLawParams },
    MulticolorExtinction { colours: Vec<u64>, k: u64, q: QParam },
    MulticolorFluid { colours: Vec<f64>, k: u64, c: f64 },
}

fn check_c(c: f64, above_one: bool) -> Result<f64> {
    let ok = if above_one { c > 1.0 } else { c > 0.0 && c < 1.0 };
    if !(ok && c.is_finite()) {
        let range = if above_one { "(1, inf)" } else { "(0, 1)" };
        return Err(Error::param("c", format!("must lie in {range}, got {c}")));
    }
    Ok(c)
}

fn check_nonneg(v: f64, name: &'static str) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
    }
    Ok(v)
}

impl Experiment {
    /// Checks the grid and resolves the theorem's parameters.
    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    fn plan(&self) -> Result<Plan> {
        if self.m_grid.is_empty() || self.m_grid.contains(&0) {
            return Err(Error::param("m_grid", "must be non-empty with positive entries"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("m_grid", "must be strictly increasing"));
        }
        if self.replicates < 2 {
            return Err(Error::param("replicates", "must be at least 2"));
        }
        let th = self.theorem;
        if !th.draws_indexed() {
            if self.checkpoints.is_empty() {
                return Err(Error::param("checkpoints", format!("are required for theorem {th}")));
            }
            if self.checkpoints.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::param("checkpoints", "must be positive and finite"));
            }
            if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("checkpoints", "must be strictly increasing"));
            }
        }
        let p = &self.params;
        let k = p.k.unwrap_or(1);
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        let q_family = matches!(th, TheoremId::QBirth | TheoremId::QPoisson | TheoremId::QFluid | TheoremId::QFluct);
        let c = if q_family {
            Some(check_c(required(p.c, "c", th)?, true)?)
        } else {
            None
        };
        Ok(match th {
            TheoremId::PolyaBirth | TheoremId::QBirth => {
                let w0 = required(p.w0, "w0", th)?;
                let b0 = check_nonneg(required(p.b0, "b0", th)?, "b0")?;
                if w0 == 0 {
                    return Err(Error::param("w0", "must be at least 1"));
                }
                if b0 == 0.0 {
                    return Err(Error::param("b0", "must be positive for a finite limit law at t > 0 from 0"));
                }
                let regime = match c {
                    Some(c) => LimitRegime::QBirth { w0, k, b0, c },
                    None => LimitRegime::PolyaBirth { w0, k, b0 },
                };
                Plan::Birth { regime, w0, b0, k, c }
            }
            TheoremId::PolyaPoisson | TheoremId::QPoisson => {
                let b0 = check_nonneg(required(p.b0, "b0", th)?, "b0")?;
                if b0 == 0.0 {
                    return Err(Error::param("b0", "must be positive for the Poisson limit"));
                }
                let regime = match c {
                    Some(c) => LimitRegime::QPoisson { b0, c },
                    None => LimitRegime::PolyaPoisson { b0 },
                };
                Plan::Poisson { regime, b0, k, c }
            }
            TheoremId::PolyaFluid | TheoremId::QFluid => {
                let a = check_nonneg(required(p.a, "a", th)?, "a")?;
                let b = check_nonneg(required(p.b, "b", th)?, "b")?;
                if a + b == 0.0 {
                    return Err(Error::param("a, b", "must not both be zero"));
                }
                Plan::Fluid { a, b, k, c }
            }
            TheoremId::PolyaFluct | TheoremId::QFluct => {
                let a = check_nonneg(required(p.a, "a", th)?, "a")?;
                let b = check_nonneg(required(p.b, "b", th)?, "b")?;
                if a + b == 0.0 {
                    return Err(Error::param("a, b", "must not both be zero"));
                }
                let theta1 = p.theta1.unwrap_or(0.0);
                let theta2 = p.theta2.unwrap_or(0.0);
                if !(theta1.is_finite() && theta2.is_finite()) {
                    return Err(Error::param("theta", "must be finite"));
                }
                Plan::Fluct { a, b, k, c, theta1, theta2 }
            }
            TheoremId::Extinction => {
                let r = required(p.r, "r", th)?;
                let s = required(p.s, "s", th)?;
                let q = QParam::new(required(p.q, "q", th)?)?;
                let params = UrnLawParams::new(r, s, k, q)?;
                ExtinctionLaw::new(params)?;
                Plan::Extinction { params }
            }
            TheoremId::MulticolorExtinction => {
                let colours = p
                    .colours
                    .as_ref()
                    .ok_or_else(|| Error::param("colours", format!("is required for theorem {th}")))?;
                let colours: Vec<u64> = colours
                    .iter()
                    .map(|&x| {
                        if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
                            Ok(x as u64)
                        } else {
                            Err(Error::param("colours", "must be non-negative integers for this theorem"))
                        }
                    })
                    .collect::<Result<_>>()?;
                let q = QParam::new(required(p.q, "q", th)?)?;
                MulticolorLimitLaw::new(&colours, k, q)?;
                Plan::MulticolorExtinction { colours, k, q }
            }
            TheoremId::MulticolorFluid => {
                let colours = p
                    .colours
                    .clone()
                    .ok_or_else(|| Error::param("colours", format!("is required for theorem {th}")))?;
                if colours.len() < 2 {
                    return Err(Error::param("colours", "needs at least two colours"));
                }
                for &x in &colours {
                    check_nonneg(x, "colours")?;
                }
                if colours.iter().sum::<f64>() == 0.0 {
                    return Err(Error::param("colours", "must not be all zero"));
                }
                let c = check_c(required(p.c, "c", th)?, false)?;
                Plan::MulticolorFluid { colours, k, c }
            }
        })
    }
}

/// One reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub theorem: TheoremId,
    pub m: u64,
    pub t: Option<f64>,
    pub metric: String,
    pub value: f64,
}

/// First-to-last comparison of a metric across the `m` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub metric: String,
    pub t: Option<f64>,
    pub first_m: u64,
    pub last_m: u64,
    pub first: f64,
    pub last: f64,
    pub decreasing: bool,
}

/// Metrics whose decrease along the grid is the footprint of convergence.
const DISTANCE_METRICS: [&str; 7] = ["tv", "ks", "mean_abs_gap", "sup_gap_mean", "mean_gap", "var_gap", "mean_gap_sd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub theorem: TheoremId,
    pub seed: u64,
    pub replicates: usize,
    pub experiment: Experiment,
    pub rows: Vec<MetricRow>,
    pub trends: Vec<Trend>,
    /// Wall time per `m`; left out of the serialized report so that reruns
    /// are byte-identical.
    #[serde(skip)]
    pub wall_time: Vec<(u64, Duration)>,
}

fn same_t(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
        _ => false,
    }
}

impl ExperimentReport {
    pub fn value(&self, metric: &str, m: u64, t: Option<f64>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.m == m && same_t(r.t, t))
            .map(|r| r.value)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Flat `theorem,m,t,metric,value` table; `t` is empty for per-path metrics.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }

    pub fn write_json(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn trends(rows: &[MetricRow], grid: &[u64]) -> Vec<Trend> {
    let (first_m, last_m) = (grid[0], grid[grid.len() - 1]);
    if first_m == last_m {
        return Vec::new();
    }
    let mut out = Vec::new();
    for row in rows.iter().filter(|r| r.m == first_m && DISTANCE_METRICS.contains(&r.metric.as_str())) {
        let last = rows
            .iter()
            .find(|r| r.m == last_m && r.metric == row.metric && same_t(r.t, row.t));
        if let Some(last) = last {
            out.push(Trend {
                metric: row.metric.clone(),
                t: row.t,
                first_m,
                last_m,
                first: row.value,
                last: last.value,
                decreasing: last.value < row.value,
            });
        }
    }
    out
}

/// Runs the experiment: for every `m`, simulates `replicates` independent
/// urns, rescales them as the theorem prescribes and compares the result
/// with the limit. Replicate `i` at size `m` always uses stream `i` of tag
/// `m`, so the report does not depend on `threads` (0 selects the rayon default).
pub fn run_convergence_experiment(experiment: &Experiment, threads: usize) -> Result<ExperimentReport> {
    let plan = experiment.plan()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    let mut wall_time = Vec::new();
    for &m in &experiment.m_grid {
        let start = Instant::now();
        let cell = Cell {
            experiment,
            plan: &plan,
            m,
        };
        pool.install(|| cell.run(&mut rows))?;
        wall_time.push((m, start.elapsed()));
    }
    let trends = trends(&rows, &experiment.m_grid);
    Ok(ExperimentReport {
        theorem: experiment.theorem,
        seed: experiment.seed,
        replicates: experiment.replicates,
        experiment: experiment.clone(),
        rows,
        trends,
        wall_time,
    })
}

/// `q = c^{1/m}`, or the classical urn.
fn scaled_q(c: Option<f64>, m: u64) -> Result<QParam> {
    match c {
        Some(c) => QParam::from_ln(c.ln() / m as f64),
        None => Ok(QParam::classical()),
    }
}

fn checkpoint_index(scale: f64, t: f64) -> u64 {
    (scale * t + INDEX_EPS).floor() as u64
}

/// White counts of a two-colour urn after each number of draws in `marks` (ascending).
fn two_colour_counts<R: Rng + ?Sized>(sampler: &UrnSampler, w0: u64, b0: u64, marks: &[u64], rng: &mut R) -> Vec<u64> {
    let k = sampler.config().k();
    let (mut w, mut b) = (w0, b0);
    let mut n = 0;
    let mut out = Vec::with_capacity(marks.len());
    for &mark in marks {
        while n < mark {
            let u: f64 = rng.random();
            if u < sampler.first_colour_probability(w, b) {
                w += k;
            } else {
                b += k;
            }
            n += 1;
        }
        out.push(w);
    }
    out
}

struct Cell<'a> {
    experiment: &'a Experiment,
    plan: &'a Plan,
    m: u64,
}

impl Cell<'_> {
    /// Runs `f` once per replicate in parallel, collecting in replicate order.
    fn replicate<T: Send, F>(&self, f: F) -> Result<Vec<T>>
    where
        F: Fn(&mut crate::rng::StreamRng) -> Result<T> + Sync,
    {
        (0..self.experiment.replicates as u64)
            .into_par_iter()
            .map(|i| f(&mut stream_rng(self.experiment.seed, self.m, i)))
            .collect()
    }

    fn push(&self, rows: &mut Vec<MetricRow>, t: Option<f64>, metric: &str, value: f64) {
        rows.push(MetricRow {
            theorem: self.experiment.theorem,
            m: self.m,
            t,
            metric: metric.to_string(),
            value,
        });
    }

    fn run(&self, rows: &mut Vec<MetricRow>) -> Result<()> {
        let m = self.m;
        let mf = m as f64;
        let ts = &self.experiment.checkpoints;
        match self.plan {
            Plan::Birth { regime, w0, b0, k, c } => {
                let config = UrnConfig::two_colour(Count::Finite(*w0), (b0 * mf).round() as u64, *k, scaled_q(*c, m)?)?;
                let marks: Vec<u64> = ts.iter().map(|&t| checkpoint_index(mf, t)).collect();
                self.jump_counts(rows, config, &marks, *regime)
            }
            Plan::Poisson { regime, b0, k, c } => {
                let g = (mf.sqrt()).ceil() as u64;
                let config = UrnConfig::two_colour(Count::Finite(g), (b0 * mf).round() as u64, *k, scaled_q(*c, m)?)?;
                let marks: Vec<u64> = ts.iter().map(|&t| checkpoint_index(mf / g as f64, t)).collect();
                self.jump_counts(rows, config, &marks, *regime)
            }
            Plan::Fluid { a, b, k, c } => {
                let config = UrnConfig::two_colour(
                    Count::Finite((a * mf).round() as u64),
                    (b * mf).round() as u64,
                    *k,
                    scaled_q(*c, m)?,
                )?;
                let limits: Vec<Vec<f64>> = ts
                    .iter()
                    .map(|&t| {
                        let x = match c {
                            Some(c) => qpolya_det_limit(*a, *b, *k as f64, *c, t)?,
                            None => polya_det_limit(*a, *b, *k as f64, t)?,
                        };
                        Ok(vec![x])
                    })
                    .collect::<Result<_>>()?;
                let marks: Vec<u64> = ts.iter().map(|&t| checkpoint_index(mf, t)).collect();
                let horizon = *marks.last().expect("validated");
                let sampler = UrnSampler::new(config.clone(), horizon);
                let (w0, b0) = initial_pair(&config);
                let paths = self.replicate(|rng| {
                    Ok(two_colour_counts(&sampler, w0, b0, &marks, rng)
                        .into_iter()
                        .map(|w| vec![w as f64 / mf])
                        .collect::<Vec<_>>())
                })?;
                self.fluid_metrics(rows, &paths, &limits);
                Ok(())
            }
            Plan::MulticolorFluid { colours, k, c } => {
                let initial: Vec<Count> = colours.iter().map(|&x| Count::Finite((x * mf).round() as u64)).collect();
                let config = UrnConfig::new(initial, *k, scaled_q(Some(*c), m)?)?;
                let limits: Vec<Vec<f64>> = ts
                    .iter()
                    .map(|&t| multicolor_det_limit(colours, *k as f64, *c, t, DetRegime::Deformed))
                    .collect::<Result<_>>()?;
                let marks: Vec<u64> = ts.iter().map(|&t| checkpoint_index(mf, t)).collect();
                let horizon = *marks.last().expect("validated");
                let sampler = UrnSampler::new(config.clone(), horizon);
                let paths = self.replicate(|rng| {
                    let mut state = config.initial_state();
                    let mut out = Vec::with_capacity(marks.len());
                    for &mark in &marks {
                        while state.n < mark {
                            sampler.step(&mut state, rng);
                        }
                        out.push(state.counts.iter().map(|c| c.finite().unwrap_or(0) as f64 / mf).collect());
                    }
                    Ok(out)
                })?;
                self.fluid_metrics(rows, &paths, &limits);
                Ok(())
            }
            Plan::Fluct { a, b, k, c, theta1, theta2 } => {
                let root = mf.sqrt();
                let w0 = (a * mf + theta1 * root).floor();
                let b0 = (b * mf + theta2 * root).floor();
                if w0 < 0.0 || b0 < 0.0 {
                    return Err(Error::param("theta", format!("gives a negative initial count at m = {m}")));
                }
                let config = UrnConfig::two_colour(Count::Finite(w0 as u64), b0 as u64, *k, scaled_q(*c, m)?)?;
                let kf = *k as f64;
                let mut targets = Vec::with_capacity(ts.len());
                for &t in ts {
                    let (x, mean, var) = match c {
                        Some(c) => {
                            let coeffs = QPolyaFluct::new(*a, *b, kf, *c, *theta1, *theta2)?;
                            let (mean, var) = linear_sde_moments(&coeffs, *theta1, t, MOMENT_CELLS)?;
                            (qpolya_det_limit(*a, *b, kf, *c, t)?, mean, var)
                        }
                        None => {
                            let p = PolyaFluct::new(*a, *b, kf, *theta1, *theta2)?;
                            (polya_det_limit(*a, *b, kf, t)?, p.mean(t), p.variance(t))
                        }
                    };
                    targets.push((x, mean, var));
                }
                let marks: Vec<u64> = ts.iter().map(|&t| checkpoint_index(mf, t)).collect();
                let horizon = *marks.last().expect("validated");
                let sampler = UrnSampler::new(config.clone(), horizon);
                let paths = self.replicate(|rng| {
                    Ok(two_colour_counts(&sampler, w0 as u64, b0 as u64, &marks, rng))
                })?;
                for (j, (&t, &(x, mean, var))) in ts.iter().zip(&targets).enumerate() {
                    let values: Vec<f64> = paths.iter().map(|p| root * (p[j] as f64 / mf - x)).collect();
                    let (emp_mean, emp_var) = moments(&values)?;
                    let sd = var.sqrt();
                    let sample = EmpiricalSample::new(values)?.with_seed(self.experiment.seed);
                    let ks = ks_statistic(&sample, |y| normal_cdf(y, mean, sd));
                    let t = Some(t);
                    self.push(rows, t, "ks", ks);
                    self.push(rows, t, "mean_gap", (emp_mean - mean).abs());
                    if sd > 0.0 {
                        self.push(rows, t, "mean_gap_sd", (emp_mean - mean).abs() / sd);
                    }
                    self.push(rows, t, "var", emp_var);
                    self.push(rows, t, "target_var", var);
                    let var_gap = if var > 0.0 { (emp_var - var).abs() / var } else { emp_var };
                    self.push(rows, t, "var_gap", var_gap);
                }
                Ok(())
            }
            Plan::Extinction { params } => {
                let config = UrnConfig::two_colour(params.r, params.s, params.k, params.q)?;
                let sampler = UrnSampler::new(config.clone(), m);
                let draws = self.replicate(|rng| {
                    let mut state = config.initial_state();
                    for _ in 0..m {
                        sampler.step(&mut state, rng);
                    }
                    Ok(state.draws[0])
                })?;
                let law = ExtinctionLaw::new(*params)?.tabulate(LAW_TOL)?;
                self.count_metrics(rows, None, draws, &law, law.mean(), law.variance())
            }
            Plan::MulticolorExtinction { colours, k, q } => {
                let initial: Vec<Count> = colours.iter().map(|&x| Count::Finite(x)).collect();
                let config = UrnConfig::new(initial, *k, *q)?;
                let sampler = UrnSampler::new(config.clone(), m);
                let draws = self.replicate(|rng| {
                    let mut state = config.initial_state();
                    for _ in 0..m {
                        sampler.step(&mut state, rng);
                    }
                    Ok(state.draws[1..].to_vec())
                })?;
                let law: Pmf<Vec<u64>> = MulticolorLimitLaw::new(colours, *k, *q)?.tabulate(LAW_TOL)?;
                let empirical = EmpiricalLaw::from_values(draws).with_seed(self.experiment.seed);
                let tv = tv_distance(&empirical, &law);
                self.push(rows, None, "tv", tv.distance);
                self.push(rows, None, "tv_slack", tv.slack);
                Ok(())
            }
        }
    }

    fn jump_counts(&self, rows: &mut Vec<MetricRow>, config: UrnConfig, marks: &[u64], regime: LimitRegime) -> Result<()> {
        let horizon = *marks.last().expect("validated");
        let sampler = UrnSampler::new(config.clone(), horizon);
        let (w0, b0) = initial_pair(&config);
        let k = config.k();
        let paths = self.replicate(|rng| Ok(two_colour_counts(&sampler, w0, b0, marks, rng)))?;
        for (j, &t) in self.experiment.checkpoints.iter().enumerate() {
            let jumps = paths.iter().map(|p| (p[j] - w0) / k);
            let law = limit_increment_law(regime, 0.0, t, 0)?;
            let table = law.tabulate(LAW_TOL)?;
            self.count_metrics(rows, Some(t), jumps, &table, law.mean(), law.variance())?;
        }
        Ok(())
    }

    fn count_metrics<I: IntoIterator<Item = u64>>(
        &self,
        rows: &mut Vec<MetricRow>,
        t: Option<f64>,
        values: I,
        law: &Pmf,
        mean: f64,
        var: f64,
    ) -> Result<()> {
        let empirical = EmpiricalLaw::from_values(values).with_seed(self.experiment.seed);
        let tv = tv_distance(&empirical, law);
        self.push(rows, t, "tv", tv.distance);
        self.push(rows, t, "tv_slack", tv.slack);
        if let Ok(chi) = chi_square(&empirical, law) {
            self.push(rows, t, "chi2", chi.statistic);
            self.push(rows, t, "chi2_dof", chi.dof as f64);
        }
        let (emp_mean, emp_var) = empirical.moments()?;
        self.push(rows, t, "mean", emp_mean);
        self.push(rows, t, "mean_gap", (emp_mean - mean).abs());
        self.push(rows, t, "var", emp_var);
        self.push(rows, t, "var_gap", if var > 0.0 { (emp_var - var).abs() / var } else { emp_var });
        Ok(())
    }

    /// `paths[replicate][checkpoint][colour]` against `limits[checkpoint][colour]`.
    fn fluid_metrics(&self, rows: &mut Vec<MetricRow>, paths: &[Vec<Vec<f64>>], limits: &[Vec<f64>]) {
        let n = paths.len() as f64;
        let gap = |obs: &[f64], lim: &[f64]| obs.iter().zip(lim).map(|(o, l)| (o - l).abs()).fold(0.0, f64::max);
        for (j, &t) in self.experiment.checkpoints.iter().enumerate() {
            let mean = paths.iter().map(|p| gap(&p[j], &limits[j])).sum::<f64>() / n;
            self.push(rows, Some(t), "mean_abs_gap", mean);
        }
        let band = FLUID_BAND / (self.m as f64).sqrt();
        let sups: Vec<f64> = paths
            .iter()
            .map(|p| p.iter().zip(limits).map(|(o, l)| gap(o, l)).fold(0.0, f64::max))
            .collect();
        self.push(rows, None, "sup_gap_mean", sups.iter().sum::<f64>() / n);
        self.push(rows, None, "frac_within", sups.iter().filter(|&&s| s < band).count() as f64 / n);
        self.push(rows, None, "band", band);
    }
}

fn initial_pair(config: &UrnConfig) -> (u64, u64) {
    let init = config.initial();
    (init[0].finite().unwrap_or(0), init[1].finite().unwrap_or(0))
}
