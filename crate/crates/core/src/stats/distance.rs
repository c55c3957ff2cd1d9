use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::empirical::{EmpiricalLaw, EmpiricalSample};
use crate::dist::Pmf;
use crate::error::{Error, Result};

/// Total variation distance between two discrete laws, one of which may be a
/// truncated table. The distance over the tabulated supports is `distance`;
/// the distance between the untruncated laws lies within `slack` of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    pub distance: f64,
    pub slack: f64,
}

impl TvBound {
    pub fn upper(&self) -> f64 {
        (self.distance + self.slack).min(1.0)
    }
}

/// Something with finitely many tabulated atoms and a known missing mass.
pub trait DiscreteLaw<K: Ord> {
    fn atoms(&self) -> Vec<(&K, f64)>;
    fn missing_mass(&self) -> f64;
}

impl<K: Ord> DiscreteLaw<K> for Pmf<K> {
    fn atoms(&self) -> Vec<(&K, f64)> {
        self.iter().collect()
    }
    fn missing_mass(&self) -> f64 {
        self.truncation_mass
    }
}

impl<K: Ord> DiscreteLaw<K> for EmpiricalLaw<K> {
    fn atoms(&self) -> Vec<(&K, f64)> {
        let n = self.n().max(1) as f64;
        self.counts().iter().map(|(k, c)| (k, *c as f64 / n)).collect()
    }
    fn missing_mass(&self) -> f64 {
        0.0
    }
}

/// `1/2 sum |p - q|` over the union of the two supports.
pub fn tv_distance<K: Ord, P: DiscreteLaw<K> + ?Sized, Q: DiscreteLaw<K> + ?Sized>(p: &P, q: &Q) -> TvBound {
    let mut a = p.atoms();
    let mut b = q.atoms();
    a.sort_by(|x, y| x.0.cmp(y.0));
    b.sort_by(|x, y| x.0.cmp(y.0));
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.cmp(y.0),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Less => {
                sum += a[i].1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                sum += b[j].1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                sum += (a[i].1 - b[j].1).abs();
                i += 1;
                j += 1;
            }
        }
    }
    TvBound {
        distance: (sum / 2.0).min(1.0),
        slack: p.missing_mass() + q.missing_mass(),
    }
}

/// Kolmogorov-Smirnov statistic `sup |F_N - F|`, evaluated on both sides of
/// every jump of the empirical cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &EmpiricalSample, cdf: F) -> f64 {
    let xs = sample.sorted();
    let n = xs.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        // ties form one jump of the empirical cdf
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        worst = worst.max((j + 1) as f64 / n - f).max(f - i as f64 / n);
        i = j + 1;
    }
    worst
}

/// Sample mean and unbiased variance.
pub fn moments(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(Error::param("sample", "needs at least two observations"));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let ss = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

/// Normal cdf with the given mean and standard deviation.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return if x >= mean { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u64,
}

/// Pearson statistic of `law` against `pmf`. Consecutive support points are
/// merged until each bin expects at least 5 observations; the final bin
/// also collects everything beyond the table.
pub fn chi_square(law: &EmpiricalLaw, pmf: &Pmf) -> Result<ChiSquare> {
    if law.n() == 0 {
        return Err(Error::param("sample", "must not be empty"));
    }
    let n = law.n() as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut expected, mut observed) = (0.0, 0.0);
    let mut covered_obs = 0u64;
    let mut covered_prob = 0.0;
    for (x, p) in pmf.iter() {
        expected += p * n;
        let c = law.count(x);
        observed += c as f64;
        covered_obs += c;
        covered_prob += p;
        if expected >= 5.0 {
            bins.push((observed, expected));
            expected = 0.0;
            observed = 0.0;
        }
    }
    expected += (1.0 - covered_prob).max(0.0) * n;
    observed += (law.n() - covered_obs) as f64;
    if expected > 0.0 || observed > 0.0 {
        match bins.last_mut() {
            Some(last) if expected < 5.0 => {
                last.0 += observed;
                last.1 += expected;
            }
            _ => bins.push((observed, expected)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::param("sample", "too small for two bins with expected count >= 5"));
    }
    let statistic = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    Ok(ChiSquare {
        statistic,
        dof: bins.len() as u64 - 1,
    })
}
