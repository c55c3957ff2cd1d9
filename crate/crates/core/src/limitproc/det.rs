use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|c - 1|` below which the q-limit is replaced by its Pólya counterpart.
const NEAR_ONE: f64 = 1e-8;

fn check_pair(a: f64, b: f64, k: f64) -> Result<()> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::param("a, b", "must be finite and non-negative"));
    }
    if a + b == 0.0 {
        return Err(Error::param("a, b", "must not both be zero"));
    }
    if !(k > 0.0) {
        return Err(Error::param("k", "must be positive"));
    }
    Ok(())
}

/// Fluid limit of the rescaled white count for the classical urn.
pub fn polya_det_limit(a: f64, b: f64, k: f64, t: f64) -> Result<f64> {
    check_pair(a, b, k)?;
    Ok(a * (a + b + k * t) / (a + b))
}

/// Fluid limit of the rescaled white count when `q = c^{1/m}`.
///
/// Evaluated as `a - ln(1 - expm1(-aL) expm1(-ktL) / (expm1(bL) - expm1(-aL))) / L`
/// with `L = ln c`, which is the closed form with every difference of powers
/// of `c` written through `expm1`.
pub fn qpolya_det_limit(a: f64, b: f64, k: f64, c: f64, t: f64) -> Result<f64> {
    check_pair(a, b, k)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("must be positive and finite, got {c}")));
    }
    let l = c.ln();
    if l.exp_m1().abs() < NEAR_ONE {
        return polya_det_limit(a, b, k, t);
    }
    let den = (b * l).exp_m1() - (-a * l).exp_m1();
    let shift = (-(-a * l).exp_m1() * (-k * t * l).exp_m1() / den).ln_1p();
    Ok(a - shift / l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetRegime {
    /// `q = c^{1/m}` with `c` in (0, 1).
    Deformed,
    /// `q = 1 + o(1/m)`: every colour grows proportionally.
    Linear,
}

/// Fluid limit of the rescaled colour counts of the many-colour urn.
pub fn multicolor_det_limit(a: &[f64], k: f64, c: f64, t: f64, regime: DetRegime) -> Result<Vec<f64>> {
    if a.is_empty() || a.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::param("a", "must be a non-empty vector of finite non-negative reals"));
    }
    let total: f64 = a.iter().sum();
    if total == 0.0 {
        return Err(Error::param("a", "must not be all zero"));
    }
    if !(k > 0.0) {
        return Err(Error::param("k", "must be positive"));
    }
    if regime == DetRegime::Linear {
        return Ok(a.iter().map(|&x| (1.0 + k * t / total) * x).collect());
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::param("c", format!("must lie in (0, 1), got {c}")));
    }
    let l = c.ln();
    let kt = k * t;
    // D_i = (1 - c^{sigma_l + kt}) - c^{sigma_i} (1 - c^{kt})
    let head = -((total + kt) * l).exp_m1();
    let tail = -(kt * l).exp_m1();
    let d = |sigma: f64| head - (sigma * l).exp() * tail;
    let mut sigma = 0.0;
    let mut prev = d(0.0);
    let mut out = Vec::with_capacity(a.len());
    for &ai in a {
        sigma += ai;
        let cur = d(sigma);
        out.push(ai + (prev / cur).ln() / l);
        prev = cur;
    }
    Ok(out)
}
