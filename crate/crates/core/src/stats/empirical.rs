use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical law of a discrete sample: value to count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw<K: Ord = u64> {
    n: u64,
    counts: BTreeMap<K, u64>,
    seed: Option<u64>,
}

impl<K: Ord> EmpiricalLaw<K> {
    pub fn from_values<I: IntoIterator<Item = K>>(values: I) -> Self {
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for v in values {
            *counts.entry(v).or_insert(0) += 1;
            n += 1;
        }
        Self { n, counts, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn counts(&self) -> &BTreeMap<K, u64> {
        &self.counts
    }

    pub fn count(&self, x: &K) -> u64 {
        self.counts.get(x).copied().unwrap_or(0)
    }

    pub fn prob(&self, x: &K) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.count(x) as f64 / self.n as f64
    }
}

impl EmpiricalLaw<u64> {
    /// Sample mean and unbiased variance.
    pub fn moments(&self) -> Result<(f64, f64)> {
        if self.n < 2 {
            return Err(Error::param("sample", "needs at least two observations"));
        }
        let n = self.n as f64;
        let mean = self.counts.iter().map(|(x, c)| *x as f64 * *c as f64).sum::<f64>() / n;
        let ss = self.counts.iter().map(|(x, c)| (*x as f64 - mean).powi(2) * *c as f64).sum::<f64>();
        Ok((mean, ss / (n - 1.0)))
    }
}

/// Sorted sample of a continuous observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    sorted: Vec<f64>,
    seed: Option<u64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("sample", "must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sample", "must be finite"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            sorted: values,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}
