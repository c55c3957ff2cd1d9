//! q-calculus kernel.
//!
//! Every quantity is evaluated through `expm1`/`ln_1p` so that the q-formulas
//! keep their significant digits as `q` approaches 1. Inside the band
//! `|q - 1| < 1e-8` the classical limits are substituted outright.

pub mod identities;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the band around `q = 1` in which classical formulas are used.
pub const NEAR_ONE_THRESHOLD: f64 = 1e-8;

/// The deformation parameter `q > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QParam {
    q: f64,
    ln_q: f64,
    near_one: bool,
}

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::param("q", format!("must be a positive finite real, got {q}")));
        }
        Ok(Self {
            q,
            ln_q: q.ln(),
            near_one: (q - 1.0).abs() < NEAR_ONE_THRESHOLD,
        })
    }

    /// Builds `q = exp(ln_q)` without the rounding of an explicit power.
    /// This is how the scaling regimes `q = c^{1/m}` are constructed.
    pub fn from_ln(ln_q: f64) -> Result<Self> {
        if !ln_q.is_finite() {
            return Err(Error::param("ln_q", format!("must be finite, got {ln_q}")));
        }
        Ok(Self {
            q: ln_q.exp(),
            ln_q,
            near_one: ln_q.exp_m1().abs() < NEAR_ONE_THRESHOLD,
        })
    }

    /// `q = 1`, the classical Pólya urn.
    pub fn classical() -> Self {
        Self {
            q: 1.0,
            ln_q: 0.0,
            near_one: true,
        }
    }

    pub fn value(&self) -> f64 {
        self.q
    }

    pub fn ln(&self) -> f64 {
        self.ln_q
    }

    pub fn near_one(&self) -> bool {
        self.near_one
    }

    /// `q^e` as a new parameter, e.g. `q^{-k}`.
    pub fn pow(&self, e: f64) -> Result<Self> {
        Self::from_ln(self.ln_q * e)
    }
}

impl TryFrom<f64> for QParam {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<QParam> for f64 {
    fn from(q: QParam) -> f64 {
        q.q
    }
}

/// A real number stored as `sign * exp(ln_abs)`; `sign == 0` encodes an exact zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLn {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLn {
    pub const ONE: SignedLn = SignedLn {
        sign: 1.0,
        ln_abs: 0.0,
    };
    pub const ZERO: SignedLn = SignedLn {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0
    }

    pub fn value(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn mul(self, other: SignedLn) -> SignedLn {
        if self.is_zero() || other.is_zero() {
            return SignedLn::ZERO;
        }
        SignedLn {
            sign: self.sign * other.sign,
            ln_abs: self.ln_abs + other.ln_abs,
        }
    }

    /// Division by a nonzero quantity.
    pub fn div(self, other: SignedLn) -> SignedLn {
        debug_assert!(!other.is_zero());
        if self.is_zero() {
            return SignedLn::ZERO;
        }
        SignedLn {
            sign: self.sign * other.sign,
            ln_abs: self.ln_abs - other.ln_abs,
        }
    }
}

/// `ln |e^z - 1|` for `z != 0`, without overflow for large `|z|`.
pub(crate) fn ln_abs_expm1(z: f64) -> f64 {
    if z > 30.0 {
        z + (-(-z).exp()).ln_1p()
    } else if z < -30.0 {
        (-z.exp()).ln_1p()
    } else {
        z.exp_m1().abs().ln()
    }
}

/// `ln(1 - theta^y)` for `theta in (0,1)` given as `ln_theta < 0`, and `y >= 0`.
pub(crate) fn ln_one_minus_pow(ln_theta: f64, y: f64) -> f64 {
    if y == 0.0 {
        return f64::NEG_INFINITY;
    }
    (-(y * ln_theta).exp_m1()).ln()
}

/// `ln [y+j-1 choose j]_theta = sum_{i<j} ln((1-theta^{y+i}) / (1-theta^{i+1}))`
/// for a base `theta in (0,1)` and real `y >= 0`.
pub(crate) fn ln_qbinom_rising(ln_theta: f64, y: f64, j: u64) -> f64 {
    let mut acc = 0.0;
    for i in 0..j {
        let fi = i as f64;
        acc += ln_one_minus_pow(ln_theta, y + fi) - ln_one_minus_pow(ln_theta, fi + 1.0);
    }
    acc
}

/// Prefix sums `F(j) = sum_{i<j} ln(1 - theta^{y+i})` for `j = 0..=len`.
pub(crate) fn ln_one_minus_pow_prefix(ln_theta: f64, y: f64, len: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len as usize + 1);
    let mut acc = 0.0;
    out.push(acc);
    for i in 0..len {
        acc += ln_one_minus_pow(ln_theta, y + i as f64);
        out.push(acc);
    }
    out
}

/// The q-number `[x]_q = (q^x - 1)/(q - 1)`.
pub fn q_number(x: f64, q: QParam) -> f64 {
    if q.near_one {
        return x;
    }
    (x * q.ln_q).exp_m1() / q.ln_q.exp_m1()
}

/// `ln |[x]_q|` with the sign of `[x]_q` (which is the sign of `x`).
pub fn ln_q_number(x: f64, q: QParam) -> SignedLn {
    if x == 0.0 {
        return SignedLn::ZERO;
    }
    let sign = x.signum();
    let ln_abs = if q.near_one {
        x.abs().ln()
    } else {
        ln_abs_expm1(x * q.ln_q) - ln_abs_expm1(q.ln_q)
    };
    SignedLn { sign, ln_abs }
}

/// `ln [n]_q!`.
pub fn ln_q_factorial(n: u64, q: QParam) -> Result<f64> {
    Ok((1..=n).map(|j| ln_q_number(j as f64, q).ln_abs).sum())
}

/// The q-factorial `[n]_q! = [1]_q [2]_q ... [n]_q`, with `[0]_q! = 1`.
pub fn q_factorial(n: u64, q: QParam) -> Result<f64> {
    let v = ln_q_factorial(n, q)?.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow("q_factorial"))
    }
}

fn signed_ln_q_falling(x: f64, k: u64, q: QParam) -> SignedLn {
    (0..k).fold(SignedLn::ONE, |acc, j| acc.mul(ln_q_number(x - j as f64, q)))
}

/// `ln |[x]_{k,q}|` with sign; errors when the product vanishes.
pub fn ln_q_falling(x: f64, k: u64, q: QParam) -> Result<SignedLn> {
    let v = signed_ln_q_falling(x, k, q);
    if v.is_zero() {
        Err(Error::LogOfZero("q_falling"))
    } else {
        Ok(v)
    }
}

/// The q-factorial of order `k`: `[x]_q [x-1]_q ... [x-k+1]_q`; 1 when `k = 0`.
pub fn q_falling(x: f64, k: u64, q: QParam) -> f64 {
    signed_ln_q_falling(x, k, q).value()
}

fn signed_ln_q_binomial(x: f64, k: u64, q: QParam) -> Result<SignedLn> {
    let fact = SignedLn {
        sign: 1.0,
        ln_abs: ln_q_factorial(k, q)?,
    };
    Ok(signed_ln_q_falling(x, k, q).div(fact))
}

/// `ln |[x choose k]_q|` with sign; errors when the coefficient vanishes.
pub fn ln_q_binomial(x: f64, k: u64, q: QParam) -> Result<SignedLn> {
    let v = signed_ln_q_binomial(x, k, q)?;
    if v.is_zero() {
        Err(Error::LogOfZero("q_binomial"))
    } else {
        Ok(v)
    }
}

/// The q-binomial coefficient `[x]_{k,q} / [k]_q!` for real `x`.
pub fn q_binomial(x: f64, k: u64, q: QParam) -> f64 {
    signed_ln_q_binomial(x, k, q)
        .map(|v| v.value())
        .unwrap_or(f64::NAN)
}

fn check_parts(n: u64, parts: &[u64]) -> Result<()> {
    let total: u64 = parts.iter().sum();
    if total != n {
        return Err(Error::param(
            "parts",
            format!("must sum to n = {n}, got {total}"),
        ));
    }
    Ok(())
}

/// `ln [n; x_1, ..., x_l]_q`.
pub fn ln_q_multinomial(n: u64, parts: &[u64], q: QParam) -> Result<f64> {
    check_parts(n, parts)?;
    let mut acc = ln_q_factorial(n, q)?;
    for &p in parts {
        acc -= ln_q_factorial(p, q)?;
    }
    Ok(acc)
}

/// The q-multinomial coefficient `[n]_q! / prod_i [x_i]_q!`.
pub fn q_multinomial(n: u64, parts: &[u64], q: QParam) -> Result<f64> {
    let v = ln_q_multinomial(n, parts, q)?.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow("q_multinomial"))
    }
}

/// Result of a truncated infinite product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPochhammer {
    pub value: f64,
    /// Bound on `|value - (x;q)_inf|`.
    pub error_bound: f64,
    /// Set when some factor `1 - x q^i` is exactly zero.
    pub exact_zero: bool,
    pub terms: usize,
}

const POCHHAMMER_MAX_TERMS: usize = 50_000_000;

/// `(x; q)_inf = prod_{i>=0} (1 - x q^i)` for `0 < q < 1`.
///
/// Terms are taken until `|x| q^N <= 1/2` and the geometric bound
/// `sum_{i>=N} |ln(1 - x q^i)| <= 2|x| q^N / (1-q)` guarantees an absolute
/// error at most `tol`.
pub fn q_pochhammer_inf(x: f64, q: f64, tol: f64) -> Result<QPochhammer> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("(x;q)_inf needs 0 < q < 1, got {q}")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !x.is_finite() {
        return Err(Error::param("x", "must be finite"));
    }
    let ln_q = q.ln();
    let mut sign = 1.0;
    let mut ln_abs = 0.0f64;
    let mut i = 0usize;
    loop {
        let t = x * (i as f64 * ln_q).exp();
        let tail = 2.0 * t.abs() / (1.0 - q);
        if t.abs() <= 0.5 {
            let err = ln_abs.exp() * tail.exp_m1();
            if err <= tol {
                return Ok(QPochhammer {
                    value: sign * ln_abs.exp(),
                    error_bound: err,
                    exact_zero: false,
                    terms: i,
                });
            }
        }
        if t == 1.0 {
            return Ok(QPochhammer {
                value: 0.0,
                error_bound: 0.0,
                exact_zero: true,
                terms: i + 1,
            });
        }
        if t > 1.0 {
            sign = -sign;
            ln_abs += (t - 1.0).ln();
        } else {
            ln_abs += (-t).ln_1p();
        }
        i += 1;
        if i > POCHHAMMER_MAX_TERMS {
            return Err(Error::NumericGuard(format!(
                "q-Pochhammer product did not reach tol {tol} within {POCHHAMMER_MAX_TERMS} terms"
            )));
        }
    }
}

/// `ln (x;q)_inf` for `0 <= x < 1` and `0 < q < 1`, accumulated in log space
/// so the error bound `tol` is relative. `ln_q = ln q` is passed explicitly so
/// bases such as `q^k` built from a tiny `ln q` keep full precision.
pub(crate) fn ln_q_pochhammer_unit(x: f64, ln_q: f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::param("x", format!("expected 0 <= x < 1, got {x}")));
    }
    if !(ln_q < 0.0) {
        return Err(Error::param("q", "expected 0 < q < 1"));
    }
    let one_minus_q = -ln_q.exp_m1();
    let mut acc = 0.0;
    let mut i = 0usize;
    loop {
        let t = x * (i as f64 * ln_q).exp();
        if t <= 0.5 && 2.0 * t / one_minus_q <= tol {
            return Ok(acc);
        }
        acc += (-t).ln_1p();
        i += 1;
        if i > POCHHAMMER_MAX_TERMS {
            return Err(Error::NumericGuard(format!(
                "log q-Pochhammer product did not reach tol {tol} within {POCHHAMMER_MAX_TERMS} terms"
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn qparam_validation() {
        assert!(QParam::new(0.0).is_err());
        assert!(QParam::new(-1.0).is_err());
        assert!(QParam::new(f64::NAN).is_err());
        assert!(QParam::new(1.0 + 1e-9).unwrap().near_one());
        assert!(!QParam::new(1.0 + 1e-7).unwrap().near_one());
        let q = QParam::from_ln(2f64.ln() / 1e4).unwrap();
        assert!(!q.near_one());
        assert!(QParam::from_ln(1e-12).unwrap().near_one());
    }

    #[test]
    fn q_number_examples() {
        assert!(close(q_number(2.0, qp(3.0)), 4.0, 1e-15));
        assert!((q_number(5.0, qp(1.0 + 1e-12)) - 5.0).abs() < 1e-9);
        assert!((q_number(-2.0, qp(2.0)) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn q_number_stays_accurate_just_outside_the_band() {
        // (q^x - 1)/(q - 1) with q = 1 + 1e-7: the naive form loses ~9 digits.
        let q = qp(1.0 + 1e-7);
        // [5]_q = 1 + q + q^2 + q^3 + q^4 exactly for integer arguments
        let v = 1e-7f64;
        let exact = (0..5).map(|j| (1.0 + v).powi(j)).sum::<f64>();
        assert!(close(q_number(5.0, q), exact, 1e-14));
    }

    #[test]
    fn q_factorial_examples() {
        assert_eq!(q_factorial(0, qp(2.0)).unwrap(), 1.0);
        assert!(close(q_factorial(2, qp(2.0)).unwrap(), 3.0, 1e-14));
        assert!(close(q_factorial(3, qp(0.5)).unwrap(), 2.625, 1e-14));
        assert!(matches!(q_factorial(2000, qp(2.0)), Err(Error::Overflow(_))));
        assert!(ln_q_factorial(2000, qp(2.0)).unwrap().is_finite());
    }

    #[test]
    fn q_falling_examples() {
        assert_eq!(q_falling(3.0, 0, qp(2.0)), 1.0);
        assert!(close(q_falling(2.0, 2, qp(2.0)), 3.0, 1e-14));
        // direct product [-1.5]_2 [-2.5]_2
        let direct = ((2f64.powf(-1.5) - 1.0) / 1.0) * ((2f64.powf(-2.5) - 1.0) / 1.0);
        assert!(close(q_falling(-1.5, 2, qp(2.0)), direct, 1e-14));
        // a vanishing factor gives exactly zero and an error in log space
        assert_eq!(q_falling(1.0, 3, qp(2.0)), 0.0);
        assert!(matches!(ln_q_falling(1.0, 3, qp(2.0)), Err(Error::LogOfZero(_))));
    }

    #[test]
    fn q_binomial_examples() {
        assert!(close(q_binomial(2.0, 1, qp(2.0)), 3.0, 1e-14));
        assert!((q_binomial(5.0, 2, qp(1.0 + 1e-12)) - 10.0).abs() < 1e-6);
        // negative upper argument against the sign-flip identity
        let (x, k, q) = (1.5, 3u64, qp(0.5));
        let lhs = q_binomial(-x, k, q);
        let kf = k as f64;
        let rhs = -(0.5f64.powf(-kf * (kf + 2.0 * x - 1.0) / 2.0)) * q_binomial(x + kf - 1.0, k, q);
        assert!(close(lhs, rhs, 1e-13), "{lhs} vs {rhs}");
    }

    #[test]
    fn q_multinomial_examples() {
        assert!(close(q_multinomial(3, &[3], qp(2.0)).unwrap(), 1.0, 1e-14));
        assert!(close(q_multinomial(2, &[1, 1], qp(2.0)).unwrap(), 3.0, 1e-14));
        // [4]! / ([2]! [1]! [1]!) at q = 0.5 by direct products
        let qn = |j: u32| (1.0 - 0.5f64.powi(j as i32)) / 0.5;
        let f = |n: u32| (1..=n).map(qn).product::<f64>();
        let direct = f(4) / (f(2) * f(1) * f(1));
        assert!(close(q_multinomial(4, &[2, 1, 1], qp(0.5)).unwrap(), direct, 1e-13));
        assert!(q_multinomial(4, &[2, 1], qp(0.5)).is_err());
    }

    #[test]
    fn log_variants() {
        assert_eq!(ln_q_factorial(0, qp(2.0)).unwrap(), 0.0);
        assert!(close(ln_q_factorial(3, qp(0.5)).unwrap().exp(), 2.625, 1e-12));
        let direct: f64 = (0..4)
            .map(|j| (2f64.powi(10 - j) - 1.0) / (2f64.powi(j + 1) - 1.0))
            .product();
        let v = ln_q_binomial(10.0, 4, qp(2.0)).unwrap();
        assert!(close(v.value(), direct, 1e-10));
    }

    #[test]
    fn pochhammer_examples() {
        let p = q_pochhammer_inf(0.0, 0.5, 1e-15).unwrap();
        assert_eq!(p.value, 1.0);
        let p = q_pochhammer_inf(0.5, 0.5, 1e-14).unwrap();
        assert!((p.value - 0.288_788_095_086_602_4).abs() < 1e-13);
        assert!(p.error_bound <= 1e-14);
        let tol = 1e-13;
        let num = q_pochhammer_inf(0.5, 0.5, tol).unwrap().value;
        let den = q_pochhammer_inf(0.25, 0.5, tol).unwrap().value;
        assert!((num / den - 0.5).abs() < 2.0 * tol);
    }

    #[test]
    fn pochhammer_errors_and_zero() {
        assert!(q_pochhammer_inf(0.5, 1.0, 1e-10).is_err());
        assert!(q_pochhammer_inf(0.5, 1.5, 1e-10).is_err());
        assert!(q_pochhammer_inf(0.5, 0.5, 0.0).is_err());
        // x q^1 = 1
        let p = q_pochhammer_inf(2.0, 0.5, 1e-12).unwrap();
        assert!(p.exact_zero);
        assert_eq!(p.value, 0.0);
        // a factor that is negative flips the sign: (3; 0.5) has 1-3 < 0, 1-1.5 < 0, rest positive
        let p = q_pochhammer_inf(3.0, 0.5, 1e-12).unwrap();
        assert!(p.value > 0.0);
        let p = q_pochhammer_inf(1.5, 0.5, 1e-12).unwrap();
        assert!(p.value < 0.0);
    }

    #[test]
    fn pochhammer_near_one_base_uses_tail_bound() {
        let tol = 1e-10;
        let p = q_pochhammer_inf(0.01, 0.999, tol).unwrap();
        // direct long product
        let direct: f64 = (0..200_000).map(|i| 1.0 - 0.01 * 0.999f64.powi(i)).product();
        assert!((p.value - direct).abs() < 10.0 * tol);
        assert!(p.terms < 200_000);
    }

    #[test]
    fn ln_abs_expm1_large_arguments() {
        assert!((ln_abs_expm1(800.0) - 800.0).abs() < 1e-12);
        assert!((ln_abs_expm1(-800.0)).abs() < 1e-12);
        assert!((ln_abs_expm1(1e-20) - (1e-20f64).ln()).abs() < 1e-12);
    }
}
