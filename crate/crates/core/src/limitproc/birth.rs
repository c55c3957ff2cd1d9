use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::dist::{limit_increment_law, LimitRegime};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BirthFamily {
    Polya,
    QPolya { c: f64 },
}

/// Pure-birth process with rate `(k j + w0) / (k t + b0)` (Pólya) or
/// `(k j + w0) ln c / (c^{b0 + k t} - 1)` (q-Pólya).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthRateSpec {
    pub family: BirthFamily,
    pub w0: u64,
    pub k: u64,
    pub b0: f64,
}

impl BirthRateSpec {
    /// `b0 = 0` is rejected: both rates blow up at `t = 0` like `1/t` and the
    /// process leaves 0 immediately with infinitely many jumps.
    pub fn new(family: BirthFamily, w0: u64, k: u64, b0: f64) -> Result<Self> {
        if w0 == 0 {
            return Err(Error::param("w0", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(Error::param("b0", format!("must be positive for a finite rate at t = 0, got {b0}")));
        }
        if let BirthFamily::QPolya { c } = family {
            if !(c > 1.0 && c.is_finite()) {
                return Err(Error::param("c", format!("must exceed 1, got {c}")));
            }
        }
        Ok(Self { family, w0, k, b0 })
    }

    pub fn rate(&self, t: f64, j: u64) -> f64 {
        let nu = (self.k * j + self.w0) as f64;
        let u = self.b0 + self.k as f64 * t;
        match self.family {
            BirthFamily::Polya => nu / u,
            BirthFamily::QPolya { c } => {
                let l = c.ln();
                nu * l / (u * l).exp_m1()
            }
        }
    }

    pub fn regime(&self) -> LimitRegime {
        match self.family {
            BirthFamily::Polya => LimitRegime::PolyaBirth {
                w0: self.w0,
                k: self.k,
                b0: self.b0,
            },
            BirthFamily::QPolya { c } => LimitRegime::QBirth {
                w0: self.w0,
                k: self.k,
                b0: self.b0,
                c,
            },
        }
    }

    /// First jump after `t` from level `j`, given an Exp(1) variate `e`;
    /// `None` when the process never jumps again.
    fn next_jump(&self, t: f64, j: u64, e: f64) -> Option<f64> {
        let kf = self.k as f64;
        let nu = (self.k * j + self.w0) as f64;
        let u = self.b0 + kf * t;
        match self.family {
            BirthFamily::Polya => Some((u * (e * kf / nu).exp() - self.b0) / kf),
            BirthFamily::QPolya { c } => {
                // Lambda(t, tau) = (nu/k) ln((1 - rho_tau) / (1 - rho_t)), rho = c^{-b0-k s}
                let l = c.ln();
                let ln_gap = (-(-u * l).exp_m1()).ln() + e * kf / nu;
                if ln_gap >= 0.0 {
                    return None;
                }
                let rho_tau = -ln_gap.exp_m1();
                Some((-rho_tau.ln() / l - self.b0) / kf)
            }
        }
    }
}

/// Uniform grid `t_i = i dt`, `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `[0, horizon]` with step `dt` (rounded to a whole number of steps).
    pub fn covering(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::param("horizon", "must be positive"));
        }
        Self::new(dt, (horizon / dt).round().max(1.0) as usize)
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}

/// Values of a process on a [`TimeGrid`], with the driving Brownian
/// increments when the process is diffusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub noise: Option<Vec<f64>>,
}

impl GridPath {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("grid paths are never empty")
    }
}

/// Samples the birth process on `grid` by drawing each increment from its
/// negative binomial transition law, which is exact at the grid points.
pub fn birth_sample_grid<R: Rng + ?Sized>(spec: &BirthRateSpec, grid: TimeGrid, rng: &mut R) -> Result<GridPath> {
    let regime = spec.regime();
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut j = 0u64;
    values.push(0.0);
    for i in 0..grid.steps {
        let law = limit_increment_law(regime, grid.time(i), grid.time(i + 1), j)?;
        j += law.sample(rng);
        values.push(j as f64);
    }
    Ok(GridPath {
        grid,
        values,
        noise: None,
    })
}

/// Jump times in `(0, horizon]`, sampled by inverting the integrated rate in closed form.
pub fn birth_sample_events<R: Rng + ?Sized>(spec: &BirthRateSpec, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", "must be positive"));
    }
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        match spec.next_jump(t, events.len() as u64, e) {
            Some(tau) if tau <= horizon => {
                events.push(tau);
                t = tau;
            }
            _ => return Ok(events),
        }
    }
}

/// Homogeneous Poisson process on `(0, horizon]` from exponential gaps.
pub fn poisson_sample<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", format!("must be positive, got {rate}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", "must be positive"));
    }
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / rate;
        if t > horizon {
            return Ok(events);
        }
        events.push(t);
    }
}
