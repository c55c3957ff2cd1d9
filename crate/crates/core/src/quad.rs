//! Deterministic quadrature on uniform grids.

use crate::error::{Error, Result};

/// Composite Simpson rule for `f` on `[a, b]` with `2 * half_panels` subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, half_panels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = 2 * half_panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson integration refined until two successive estimates agree to `tol`
/// (absolute, or relative to the estimate when that is larger than one).
pub fn simpson_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut panels = 16;
    let mut prev = simpson(&f, a, b, panels);
    while panels < 1 << 22 {
        panels *= 2;
        let next = simpson(&f, a, b, panels);
        if !next.is_finite() {
            return Err(Error::NumericGuard("non-finite integrand in quadrature".into()));
        }
        if (next - prev).abs() <= tol * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NumericGuard(format!("quadrature did not reach tolerance {tol}")))
}

/// Running integral `F(t_i) = int_{t_0}^{t_i} f` at every point of the uniform grid
/// `t_i = t0 + i dt`, `i = 0..=steps`. Each cell is integrated by Simpson's
/// rule with its midpoint, so the values are fourth-order accurate.
pub fn cumulative<F: Fn(f64) -> f64>(f: F, t0: f64, dt: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    out.push(acc);
    let mut left = f(t0);
    for i in 0..steps {
        let a = t0 + i as f64 * dt;
        let right = f(a + dt);
        acc += dt / 6.0 * (left + 4.0 * f(a + 0.5 * dt) + right);
        out.push(acc);
        left = right;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let v = simpson_adaptive(|x: f64| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn cumulative_tracks_antiderivative() {
        let vals = cumulative(|x: f64| x.cos(), 0.0, 0.01, 200);
        for (i, v) in vals.iter().enumerate() {
            assert!((v - (i as f64 * 0.01).sin()).abs() < 1e-10);
        }
    }
}
