use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::birth::{GridPath, TimeGrid};
use crate::error::{Error, Result};
use crate::quad;

/// Coefficients of `dY = (alpha(t) Y + beta(t)) dt + gamma(t) dW`.
pub trait LinearCoefficients {
    fn alpha(&self, t: f64) -> f64;
    fn beta(&self, t: f64) -> f64;
    fn gamma(&self, t: f64) -> f64;
}

/// Linear coefficients given as closures.
pub struct FnCoefficients<A, B, G> {
    pub alpha: A,
    pub beta: B,
    pub gamma: G,
}

impl<A, B, G> LinearCoefficients for FnCoefficients<A, B, G>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    fn alpha(&self, t: f64) -> f64 {
        (self.alpha)(t)
    }
    fn beta(&self, t: f64) -> f64 {
        (self.beta)(t)
    }
    fn gamma(&self, t: f64) -> f64 {
        (self.gamma)(t)
    }
}

fn check_fluct(a: f64, b: f64, k: f64, theta1: f64, theta2: f64) -> Result<()> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::param("a, b", "must be finite and non-negative"));
    }
    if a + b == 0.0 {
        return Err(Error::param("a, b", "must not both be zero"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("k", "must be positive"));
    }
    if !(theta1.is_finite() && theta2.is_finite()) {
        return Err(Error::param("theta", "must be finite"));
    }
    Ok(())
}

/// Fluctuation SDE of the classical urn around its fluid limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyaFluct {
    a: f64,
    b: f64,
    k: f64,
    theta1: f64,
    theta2: f64,
}

impl PolyaFluct {
    pub fn new(a: f64, b: f64, k: f64, theta1: f64, theta2: f64) -> Result<Self> {
        check_fluct(a, b, k, theta1, theta2)?;
        Ok(Self { a, b, k, theta1, theta2 })
    }

    pub fn initial(&self) -> f64 {
        self.theta1
    }

    /// `Var Y_t = k^2 ab t (a+b+kt) / (a+b)^3`.
    pub fn variance(&self, t: f64) -> f64 {
        let s = self.a + self.b;
        self.k * self.k * self.a * self.b * t * (s + self.k * t) / (s * s * s)
    }

    /// `E Y_t`, linear in `t`.
    pub fn mean(&self, t: f64) -> f64 {
        let s = self.a + self.b;
        self.theta1 + (self.b * self.theta1 - self.a * self.theta2) / (s * s) * self.k * t
    }
}

impl LinearCoefficients for PolyaFluct {
    fn alpha(&self, t: f64) -> f64 {
        self.k / (self.a + self.b + self.k * t)
    }
    fn beta(&self, t: f64) -> f64 {
        -self.alpha(t) * self.a * (self.theta1 + self.theta2) / (self.a + self.b)
    }
    fn gamma(&self, _t: f64) -> f64 {
        self.k * (self.a * self.b).sqrt() / (self.a + self.b)
    }
}

/// Fluctuation SDE of the q-urn with `q = c^{1/m}` around its fluid limit.
///
/// Coefficients are evaluated with `L = ln c` and `expm1`, so `c` on either
/// side of 1 is accepted. Within `1e-8` of `c = 1` the classical
/// coefficients are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPolyaFluct {
    a: f64,
    b: f64,
    k: f64,
    theta1: f64,
    theta2: f64,
    ln_c: f64,
    classical: Option<PolyaFluct>,
}

impl QPolyaFluct {
    pub fn new(a: f64, b: f64, k: f64, c: f64, theta1: f64, theta2: f64) -> Result<Self> {
        check_fluct(a, b, k, theta1, theta2)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("c", format!("must be positive and finite, got {c}")));
        }
        let ln_c = c.ln();
        let classical = if ln_c.exp_m1().abs() < 1e-8 {
            Some(PolyaFluct::new(a, b, k, theta1, theta2)?)
        } else {
            None
        };
        Ok(Self {
            a,
            b,
            k,
            theta1,
            theta2,
            ln_c,
            classical,
        })
    }

    pub fn initial(&self) -> f64 {
        self.theta1
    }

    /// `c^b - 1 + c^{-kt} (1 - c^{-a})`
    fn drift_den(&self, t: f64) -> f64 {
        let l = self.ln_c;
        (self.b * l).exp_m1() - (-self.k * t * l).exp() * (-self.a * l).exp_m1()
    }
}

impl LinearCoefficients for QPolyaFluct {
    fn alpha(&self, t: f64) -> f64 {
        if let Some(p) = &self.classical {
            return p.alpha(t);
        }
        let l = self.ln_c;
        let s = self.a + self.b;
        self.k * l * (s * l).exp_m1() / (((s + self.k * t) * l).exp_m1() * self.drift_den(t))
    }

    fn beta(&self, t: f64) -> f64 {
        if let Some(p) = &self.classical {
            return p.beta(t);
        }
        let l = self.ln_c;
        let s = self.a + self.b;
        -self.k * l * (self.b * l).exp() * (self.a * l).exp_m1() * (self.theta1 + self.theta2)
            / (((s + self.k * t) * l).exp_m1() * self.drift_den(t))
    }

    fn gamma(&self, t: f64) -> f64 {
        if let Some(p) = &self.classical {
            return p.gamma(t);
        }
        let l = self.ln_c;
        let grow = (self.a + self.k * t) * l;
        // c^{a+kt} (c^b - 1) + (c^a - 1)
        let den = grow.exp() * (self.b * l).exp_m1() + (self.a * l).exp_m1();
        self.k * ((self.a * l).exp_m1() * (self.b * l).exp_m1()).sqrt() * (grow / 2.0).exp() / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SdeFamily {
    PolyaFluct,
    QPolyaFluct { c: f64 },
}

/// Serializable description of one of the urn fluctuation SDEs. Arbitrary
/// linear SDEs are passed to the solvers directly as [`FnCoefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    #[serde(flatten)]
    pub family: SdeFamily,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl SdeSpec {
    pub fn coefficients(&self) -> Result<Box<dyn LinearCoefficients>> {
        Ok(match self.family {
            SdeFamily::PolyaFluct => Box::new(PolyaFluct::new(self.a, self.b, self.k, self.theta1, self.theta2)?),
            SdeFamily::QPolyaFluct { c } => {
                Box::new(QPolyaFluct::new(self.a, self.b, self.k, c, self.theta1, self.theta2)?)
            }
        })
    }

    pub fn initial(&self) -> f64 {
        self.theta1
    }

    /// Closed-form solution driven by `noise`.
    pub fn closed_form(&self, grid: TimeGrid, noise: &[f64]) -> Result<GridPath> {
        match self.family {
            SdeFamily::PolyaFluct => polya_fluct_solution(self.a, self.b, self.k, self.theta1, self.theta2, grid, noise),
            SdeFamily::QPolyaFluct { c } => {
                qpolya_fluct_solution(self.a, self.b, self.k, c, self.theta1, self.theta2, grid, noise)
            }
        }
    }
}

/// `steps` independent N(0, dt) increments.
pub fn brownian_increments<R: Rng + ?Sized>(grid: TimeGrid, rng: &mut R) -> Vec<f64> {
    let sd = grid.dt.sqrt();
    (0..grid.steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Sums consecutive blocks of `factor` increments: the same Brownian path on
/// a grid `factor` times coarser.
pub fn coarsen(noise: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || !noise.len().is_multiple_of(factor) {
        return Err(Error::param(
            "factor",
            format!("must divide the number of increments ({})", noise.len()),
        ));
    }
    Ok(noise.chunks(factor).map(|c| c.iter().sum()).collect())
}

fn check_noise(grid: TimeGrid, noise: &[f64]) -> Result<()> {
    if noise.len() != grid.steps {
        return Err(Error::param(
            "noise",
            format!("expected {} increments, got {}", grid.steps, noise.len()),
        ));
    }
    Ok(())
}

fn finite_path(grid: TimeGrid, values: Vec<f64>, noise: &[f64]) -> Result<GridPath> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericGuard(format!("non-finite value at t = {}", grid.time(i))));
    }
    Ok(GridPath {
        grid,
        values,
        noise: Some(noise.to_vec()),
    })
}

/// Explicit Euler-Maruyama scheme driven by the given increments. Fails
/// with [`Error::NumericGuard`] when `|alpha| dt >= 1` anywhere on the grid.
pub fn euler_maruyama<C: LinearCoefficients + ?Sized>(
    coeffs: &C,
    y0: f64,
    grid: TimeGrid,
    noise: &[f64],
) -> Result<GridPath> {
    check_noise(grid, noise)?;
    let dt = grid.dt;
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut y = y0;
    values.push(y);
    for (i, dw) in noise.iter().enumerate() {
        let t = grid.time(i);
        let alpha = coeffs.alpha(t);
        if !(alpha.abs() * dt < 1.0) {
            return Err(Error::NumericGuard(format!(
                "unstable step at t = {t}: |alpha| dt = {}",
                alpha.abs() * dt
            )));
        }
        y += (alpha * y + coeffs.beta(t)) * dt + coeffs.gamma(t) * dw;
        values.push(y);
    }
    finite_path(grid, values, noise)
}

/// [`euler_maruyama`] with freshly sampled Brownian increments.
pub fn euler_maruyama_sampled<C: LinearCoefficients + ?Sized, R: Rng + ?Sized>(
    coeffs: &C,
    y0: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<GridPath> {
    let noise = brownian_increments(grid, rng);
    euler_maruyama(coeffs, y0, grid, &noise)
}

/// Simpson panels per grid cell for the deterministic integrals. Both
/// integrals are amplified by `e^{A(t)}`, so they get a finer rule than the
/// grid alone would give. Must be even.
const PANELS_PER_CELL: usize = 4;

/// Fine grid with `2 * PANELS_PER_CELL` subintervals per cell of width `dt`,
/// carrying `A = int_0 alpha` at every fine node.
struct FineGrid {
    h: f64,
    big_a: Vec<f64>,
}

impl FineGrid {
    const SUB: usize = 2 * PANELS_PER_CELL;

    fn new<C: LinearCoefficients + ?Sized>(coeffs: &C, dt: f64, cells: usize) -> Self {
        let h = dt / Self::SUB as f64;
        Self {
            h,
            big_a: quad::cumulative(|t| coeffs.alpha(t), 0.0, h, cells * Self::SUB),
        }
    }

    fn exponent_at_cell(&self, i: usize) -> f64 {
        self.big_a[i * Self::SUB]
    }

    /// Running integrals of `f(t, A(t))` at the cell boundaries.
    fn running<F: Fn(f64, f64) -> f64>(&self, cells: usize, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        out.push(acc);
        let value = |j: usize| f(j as f64 * self.h, self.big_a[j]);
        let mut left = value(0);
        for i in 0..cells {
            let base = i * Self::SUB;
            let right = value(base + Self::SUB);
            // Simpson at steps h and 2h, combined by one Richardson step.
            let (mut fine, mut coarse) = (left + right, left + right);
            for j in 1..Self::SUB {
                let v = value(base + j);
                fine += if j % 2 == 1 { 4.0 } else { 2.0 } * v;
                if j % 2 == 0 {
                    coarse += if j % 4 == 2 { 4.0 } else { 2.0 } * v;
                }
            }
            let fine = fine * self.h / 3.0;
            let coarse = coarse * 2.0 * self.h / 3.0;
            acc += (16.0 * fine - coarse) / 15.0;
            out.push(acc);
            left = right;
        }
        out
    }
}

/// `Y_t = e^{A(t)} (y0 + int_0^t beta e^{-A} ds + int_0^t gamma e^{-A} dW)` with
/// `A(t) = int_0^t alpha`. Time integrals use composite Simpson rules and
/// the Itô integral uses left-point sums over `noise`.
pub fn linear_sde_solution<C: LinearCoefficients + ?Sized>(
    coeffs: &C,
    y0: f64,
    grid: TimeGrid,
    noise: &[f64],
) -> Result<GridPath> {
    check_noise(grid, noise)?;
    let fine = FineGrid::new(coeffs, grid.dt, grid.steps);
    let drift = fine.running(grid.steps, |t, a| coeffs.beta(t) * (-a).exp());
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut ito = 0.0;
    values.push(y0);
    for (i, dw) in noise.iter().enumerate() {
        ito += coeffs.gamma(grid.time(i)) * (-fine.exponent_at_cell(i)).exp() * dw;
        values.push(fine.exponent_at_cell(i + 1).exp() * (y0 + drift[i + 1] + ito));
    }
    finite_path(grid, values, noise)
}

/// Mean and variance of `Y_t`, by Simpson quadrature over `cells` cells.
pub fn linear_sde_moments<C: LinearCoefficients + ?Sized>(coeffs: &C, y0: f64, t: f64, cells: usize) -> Result<(f64, f64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", "must be finite and non-negative"));
    }
    if t == 0.0 {
        return Ok((y0, 0.0));
    }
    let cells = cells.max(1);
    let fine = FineGrid::new(coeffs, t / cells as f64, cells);
    let drift = fine.running(cells, |s, a| coeffs.beta(s) * (-a).exp())[cells];
    let spread = fine.running(cells, |s, a| coeffs.gamma(s).powi(2) * (-2.0 * a).exp())[cells];
    let grow = fine.exponent_at_cell(cells).exp();
    let mean = grow * (y0 + drift);
    let variance = grow * grow * spread;
    if !(mean.is_finite() && variance.is_finite()) {
        return Err(Error::NumericGuard("non-finite moments".into()));
    }
    Ok((mean, variance))
}

/// Classical fluctuation limit in closed form:
/// `Y_t = theta1 + (b theta1 - a theta2) k t / (a+b)^2 + k sqrt(ab)/(a+b) (a+b+kt) int_0^t dW_s / (a+b+ks)`.
pub fn polya_fluct_solution(
    a: f64,
    b: f64,
    k: f64,
    theta1: f64,
    theta2: f64,
    grid: TimeGrid,
    noise: &[f64],
) -> Result<GridPath> {
    check_fluct(a, b, k, theta1, theta2)?;
    check_noise(grid, noise)?;
    let s = a + b;
    let slope = (b * theta1 - a * theta2) / (s * s) * k;
    let scale = k * (a * b).sqrt() / s;
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut ito = 0.0;
    values.push(theta1);
    for (i, dw) in noise.iter().enumerate() {
        ito += dw / (s + k * grid.time(i));
        let t = grid.time(i + 1);
        values.push(theta1 + slope * t + scale * (s + k * t) * ito);
    }
    finite_path(grid, values, noise)
}

/// Fluctuation limit of the q-urn, obtained by feeding the coefficients of
/// its SDE to [`linear_sde_solution`].
#[allow(clippy::too_many_arguments)]
pub fn qpolya_fluct_solution(
    a: f64,
    b: f64,
    k: f64,
    c: f64,
    theta1: f64,
    theta2: f64,
    grid: TimeGrid,
    noise: &[f64],
) -> Result<GridPath> {
    let coeffs = QPolyaFluct::new(a, b, k, c, theta1, theta2)?;
    linear_sde_solution(&coeffs, theta1, grid, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn max_gap(x: &GridPath, y: &GridPath) -> f64 {
        x.values.iter().zip(&y.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// The q-closed form written out directly, integrand in the integration variable.
    fn q_closed_oracle(a: f64, b: f64, k: f64, c: f64, th1: f64, th2: f64, grid: TimeGrid, noise: &[f64]) -> Vec<f64> {
        let mut out = vec![th1];
        let mut ito = 0.0;
        let sq = k * ((c.powf(a) - 1.0) * (c.powf(b) - 1.0)).sqrt();
        for (i, dw) in noise.iter().enumerate() {
            let s = grid.time(i);
            ito += c.powf((a + k * s) / 2.0) / (c.powf(a + b + k * s) - 1.0) * dw;
            let t = grid.time(i + 1);
            let front = (c.powf(a + b + k * t) - 1.0) / (c.powf(a + b + k * t) - c.powf(a + k * t) + c.powf(a) - 1.0);
            let mid = (th1 + th2) * c.powf(a + b) * (c.powf(a) - 1.0) / (c.powf(a + b) - 1.0) * (c.powf(k * t) - 1.0)
                / (c.powf(a + b + k * t) - 1.0);
            out.push(front * (th1 - mid + sq * ito));
        }
        out
    }

    #[test]
    fn deterministic_integration() {
        let coeffs = FnCoefficients {
            alpha: |_| 0.0,
            beta: |_| 1.0,
            gamma: |_| 0.0,
        };
        let grid = TimeGrid::new(1e-3, 2000).unwrap();
        let noise = vec![0.0; grid.steps];
        let em = euler_maruyama(&coeffs, 0.0, grid, &noise).unwrap();
        assert!((em.last() - 2.0).abs() < 1e-9);
        let exp = FnCoefficients {
            alpha: |t: f64| 0.5 + t,
            beta: |_| 0.0,
            gamma: |_| 3.0,
        };
        let sol = linear_sde_solution(&exp, 2.0, grid, &noise).unwrap();
        assert!((sol.last() - 2.0 * (0.5 * 2.0 + 2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn polya_drift_fixed_point_and_degenerate_diffusion() {
        let p = PolyaFluct::new(1.0, 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.alpha(0.3) * 0.0 + p.beta(0.3), 0.0);
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let noise = brownian_increments(grid, &mut stream_rng(1, 0, 0));
        let y = polya_fluct_solution(0.0, 2.0, 1.0, 0.3, -1.0, grid, &noise).unwrap();
        assert_eq!(y.values[0], 0.3);
        // a = 0: Y_t = theta1 + b theta1 k t / b^2
        for (i, v) in y.values.iter().enumerate() {
            assert!((v - (0.3 + 0.3 * grid.time(i) / 2.0)).abs() < 1e-12);
        }
        assert!(PolyaFluct::new(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn guard_rejects_coarse_grid() {
        let coeffs = FnCoefficients {
            alpha: |_| 50.0,
            beta: |_| 0.0,
            gamma: |_| 0.0,
        };
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let err = euler_maruyama(&coeffs, 1.0, grid, &[0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::NumericGuard(_)));
        assert!(euler_maruyama(&coeffs, 1.0, grid, &[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn generic_formula_reproduces_polya_closed_form(
            a in 0.0f64..3.0, b in 0.1f64..3.0, k in 1u32..=3,
            th1 in -2.0f64..2.0, th2 in -2.0f64..2.0, seed in 0u64..1000,
        ) {
            let grid = TimeGrid::new(2e-3, 1000).unwrap();
            let noise = brownian_increments(grid, &mut stream_rng(seed, 1, 0));
            let p = PolyaFluct::new(a, b, k as f64, th1, th2).unwrap();
            let generic = linear_sde_solution(&p, th1, grid, &noise).unwrap();
            let closed = polya_fluct_solution(a, b, k as f64, th1, th2, grid, &noise).unwrap();
            let gap = max_gap(&generic, &closed);
            prop_assert!(gap < 1e-10, "gap {gap}");
        }

        #[test]
        fn generic_formula_reproduces_q_closed_form(
            a in 0.1f64..3.0, b in 0.1f64..3.0, k in 1u32..=2,
            c in prop::sample::select(vec![0.5, 1.5, 2.0, 3.0]),
            th1 in -2.0f64..2.0, th2 in -2.0f64..2.0, seed in 0u64..1000,
        ) {
            let grid = TimeGrid::new(2e-3, 1000).unwrap();
            let noise = brownian_increments(grid, &mut stream_rng(seed, 2, 0));
            let k = k as f64;
            let generic = qpolya_fluct_solution(a, b, k, c, th1, th2, grid, &noise).unwrap();
            let oracle = q_closed_oracle(a, b, k, c, th1, th2, grid, &noise);
            let gap = generic.values.iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(gap < 1e-9, "gap {gap}");
        }
    }

    #[test]
    fn outer_time_integrand_disagrees_with_sde() {
        // Reading the stochastic integrand at the outer time t gives a
        // different process; the EM solution follows the integration-variable reading.
        let (a, b, k, c) = (1.0, 1.0, 1.0, 2.0);
        let grid = TimeGrid::new(1e-3, 2000).unwrap();
        let noise = brownian_increments(grid, &mut stream_rng(9, 0, 0));
        let coeffs = QPolyaFluct::new(a, b, k, c, 0.0, 0.0).unwrap();
        let em = euler_maruyama(&coeffs, 0.0, grid, &noise).unwrap();
        let closed = qpolya_fluct_solution(a, b, k, c, 0.0, 0.0, grid, &noise).unwrap();
        let w: f64 = noise.iter().sum();
        let t = 2.0f64;
        let outer = (c.powf(a + b + k * t) - 1.0) / (c.powf(a + b + k * t) - c.powf(a + k * t) + c.powf(a) - 1.0)
            * k * ((c.powf(a) - 1.0) * (c.powf(b) - 1.0)).sqrt()
            * c.powf((a + k * t) / 2.0) / (c.powf(a + b + k * t) - 1.0) * w;
        assert!((em.last() - closed.last()).abs() < 0.05);
        assert!((outer - closed.last()).abs() > 0.1);
    }

    #[test]
    fn em_converges_to_closed_form() {
        for spec in [
            SdeSpec { family: SdeFamily::PolyaFluct, a: 1.0, b: 1.0, k: 1.0, theta1: 0.5, theta2: -0.5 },
            SdeSpec { family: SdeFamily::QPolyaFluct { c: 2.0 }, a: 1.0, b: 1.0, k: 1.0, theta1: 0.5, theta2: -0.5 },
        ] {
            let coeffs = spec.coefficients().unwrap();
            let fine = TimeGrid::new(2.5e-4, 8000).unwrap();
            let mut gaps = [0.0; 3];
            let reps = 40;
            for r in 0..reps {
                let noise = brownian_increments(fine, &mut stream_rng(5, 0, r));
                for (g, factor) in gaps.iter_mut().zip([4usize, 2, 1]) {
                    let dw = coarsen(&noise, factor).unwrap();
                    let grid = TimeGrid::new(fine.dt * factor as f64, fine.steps / factor).unwrap();
                    let em = euler_maruyama(coeffs.as_ref(), spec.initial(), grid, &dw).unwrap();
                    let closed = spec.closed_form(grid, &dw).unwrap();
                    *g += max_gap(&em, &closed) / reps as f64;
                }
            }
            assert!(gaps[0] < 1e-2, "{spec:?}: {gaps:?}");
            for w in gaps.windows(2) {
                let ratio = w[0] / w[1];
                assert!((1.3..=2.8).contains(&ratio), "{spec:?}: {gaps:?}");
            }
        }
    }

    #[test]
    fn polya_variance_matches_isometry_and_monte_carlo() {
        let p = PolyaFluct::new(1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((p.variance(1.0) - 0.375).abs() < 1e-15);
        // (a+b+kt)^2 k^2 ab/(a+b)^2 int_0^t (a+b+ks)^{-2} ds
        let quad = crate::quad::simpson_adaptive(|s| 1.0 / (2.0 + s).powi(2), 0.0, 1.0, 1e-12).unwrap();
        assert!((9.0 / 4.0 * quad - 0.375).abs() < 1e-10);
        let (mean, var) = linear_sde_moments(&p, 0.0, 1.0, 512).unwrap();
        assert!(mean.abs() < 1e-14 && (var - 0.375).abs() < 1e-10);

        let grid = TimeGrid::new(0.01, 100).unwrap();
        let n = 100_000;
        let ys: Vec<f64> = (0..n)
            .map(|i| {
                let noise = brownian_increments(grid, &mut stream_rng(6, 0, i));
                polya_fluct_solution(1.0, 1.0, 1.0, 0.0, 0.0, grid, &noise).unwrap().last()
            })
            .collect();
        let m = ys.iter().sum::<f64>() / n as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v - 0.375).abs() / 0.375 < 0.01, "{v}");
    }

    #[test]
    fn q_moments_match_direct_quadrature() {
        let (a, b, k, c) = (1.0f64, 2.0, 1.0, 3.0);
        let q = QPolyaFluct::new(a, b, k, c, 0.0, 0.0).unwrap();
        let t = 1.5;
        let (mean, var) = linear_sde_moments(&q, 0.0, t, 1024).unwrap();
        let g = (c.powf(a + b + k * t) - 1.0) / (c.powf(a + b + k * t) - c.powf(a + k * t) + c.powf(a) - 1.0);
        let integral = crate::quad::simpson_adaptive(
            |s| c.powf(a + k * s) / (c.powf(a + b + k * s) - 1.0).powi(2),
            0.0,
            t,
            1e-13,
        )
        .unwrap();
        let expect = g * g * k * k * (c.powf(a) - 1.0) * (c.powf(b) - 1.0) * integral;
        assert!(mean.abs() < 1e-14);
        assert!((var - expect).abs() / expect < 1e-9, "{var} vs {expect}");
    }

    #[test]
    fn q_family_reduces_to_polya() {
        let grid = TimeGrid::new(1e-3, 2000).unwrap();
        let noise = brownian_increments(grid, &mut stream_rng(8, 0, 0));
        let p = polya_fluct_solution(1.0, 2.0, 1.0, 0.4, -0.2, grid, &noise).unwrap();
        let q = qpolya_fluct_solution(1.0, 2.0, 1.0, 1.0 + 1e-6, 0.4, -0.2, grid, &noise).unwrap();
        assert!(max_gap(&p, &q) < 1e-4);
        let q = qpolya_fluct_solution(1.0, 2.0, 1.0, 1.0 + 1e-10, 0.4, -0.2, grid, &noise).unwrap();
        assert!(max_gap(&p, &q) < 1e-10);
        assert!(qpolya_fluct_solution(0.0, 0.0, 1.0, 2.0, 0.0, 0.0, grid, &noise).is_err());
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = SdeSpec { family: SdeFamily::QPolyaFluct { c: 2.0 }, a: 1.0, b: 0.5, k: 2.0, theta1: 0.1, theta2: 0.0 };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"family\":\"q-polya-fluct\""));
        assert_eq!(serde_json::from_str::<SdeSpec>(&json).unwrap(), spec);
    }
}
