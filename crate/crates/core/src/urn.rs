//! Forward simulation of Pólya and q-Pólya urns.
//!
//! Colour `i` (0-based here) is the `i+1`-th block of the priority line. For
//! `q < 1` the line is walked from colour 0; for `q > 1` from the last colour,
//! with pick probability `1 - 1/q`. With two colours, colour 0 is white.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qcalc::QParam;
use crate::rng::seeded_rng;

/// A ball count, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Count {
    Finite(u64),
    Infinite,
}

impl Count {
    pub fn finite(self) -> Option<u64> {
        match self {
            Count::Finite(v) => Some(v),
            Count::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Count::Infinite)
    }

    fn add(self, v: u64) -> Count {
        match self {
            Count::Finite(c) => Count::Finite(c + v),
            Count::Infinite => Count::Infinite,
        }
    }
}

impl From<u64> for Count {
    fn from(v: u64) -> Self {
        Count::Finite(v)
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Finite(v) => write!(f, "{v}"),
            Count::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Count {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Count::Infinite),
            t => t
                .parse::<u64>()
                .map(Count::Finite)
                .map_err(|_| Error::Parse(format!("`{s}` is neither a non-negative integer nor `inf`"))),
        }
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Count::Finite(v) => s.serialize_u64(*v),
            Count::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Count::Finite(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Initial composition, replacement count and deformation parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawUrnConfig")]
pub struct UrnConfig {
    initial: Vec<Count>,
    k: u64,
    q: QParam,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUrnConfig {
    initial: Vec<Count>,
    k: u64,
    q: QParam,
}

impl TryFrom<RawUrnConfig> for UrnConfig {
    type Error = Error;
    fn try_from(raw: RawUrnConfig) -> Result<Self> {
        UrnConfig::new(raw.initial, raw.k, raw.q)
    }
}

impl UrnConfig {
    pub fn new(initial: Vec<Count>, k: u64, q: QParam) -> Result<Self> {
        if initial.len() < 2 {
            return Err(Error::param("initial", "need at least two colours"));
        }
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if !initial.iter().any(|c| *c != Count::Finite(0)) {
            return Err(Error::param("initial", "at least one colour needs a positive count"));
        }
        for (i, c) in initial.iter().enumerate() {
            if c.is_infinite() && (i != 0 || initial.len() != 2) {
                return Err(Error::Unsupported(
                    "an infinite count is only supported for the first colour of a two-colour urn".into(),
                ));
            }
        }
        if initial[0].is_infinite() && initial[1] == Count::Finite(0) {
            return Err(Error::param("initial", "an infinite urn needs a positive second count"));
        }
        Ok(Self { initial, k, q })
    }

    /// Two-colour urn with `white` and `black` balls.
    pub fn two_colour(white: Count, black: u64, k: u64, q: QParam) -> Result<Self> {
        Self::new(vec![white, Count::Finite(black)], k, q)
    }

    pub fn initial(&self) -> &[Count] {
        &self.initial
    }

    pub fn colours(&self) -> usize {
        self.initial.len()
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn initial_state(&self) -> UrnState {
        UrnState {
            counts: self.initial.clone(),
            draws: vec![0; self.initial.len()],
            n: 0,
        }
    }

    fn finite_total(&self) -> Option<u64> {
        self.initial.iter().map(|c| c.finite()).sum()
    }
}

/// Current composition after `n` draws.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub counts: Vec<Count>,
    pub draws: Vec<u64>,
    pub n: u64,
}

impl UrnState {
    fn check(&self, config: &UrnConfig) -> Result<()> {
        if self.counts.len() != config.colours() || self.draws.len() != config.colours() {
            return Err(Error::param("state", "colour count differs from the configuration"));
        }
        Ok(())
    }

    fn apply(&mut self, colour: usize, k: u64) {
        self.counts[colour] = self.counts[colour].add(k);
        self.draws[colour] += 1;
        self.n += 1;
    }
}

/// Probability of drawing each colour from the composition `counts`.
pub fn draw_probabilities(state: &UrnState, config: &UrnConfig) -> Result<Vec<f64>> {
    state.check(config)?;
    let q = config.q();
    if let Count::Infinite = state.counts[0] {
        let b = state.counts[1]
            .finite()
            .ok_or_else(|| Error::Unsupported("both counts infinite".into()))?;
        let white = if q.ln() > 0.0 { (-(b as f64) * q.ln()).exp() } else { 1.0 };
        return Ok(vec![white, 1.0 - white]);
    }
    let counts: Vec<u64> = state
        .counts
        .iter()
        .map(|c| c.finite().ok_or_else(|| Error::Unsupported("infinite count outside the first colour".into())))
        .collect::<Result<_>>()?;
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::param("state", "the urn is empty"));
    }
    if q.near_one() {
        return Ok(counts.iter().map(|&w| w as f64 / total as f64).collect());
    }
    let lam = q.ln().abs();
    let em = |j: u64| (-(j as f64) * lam).exp_m1();
    let ex = |j: u64| (-(j as f64) * lam).exp();
    let denom = em(total);
    let mut out = Vec::with_capacity(counts.len());
    let mut before = 0u64;
    for &w in &counts {
        let after = total - before - w;
        let lead = if q.ln() < 0.0 { before } else { after };
        out.push(ex(lead) * em(w) / denom);
        before += w;
    }
    Ok(out)
}

/// Precomputed `expm1(-j |ln q|)` and `exp(-j |ln q|)` for `j` up to a bound.
#[derive(Debug, Clone)]
struct PowTable {
    lam: f64,
    em: Vec<f64>,
    ex: Vec<f64>,
}

impl PowTable {
    fn new(lam: f64, max: u64) -> Self {
        let em = (0..=max).map(|j| (-(j as f64) * lam).exp_m1()).collect();
        let ex = (0..=max).map(|j| (-(j as f64) * lam).exp()).collect();
        Self { lam, em, ex }
    }

    #[inline]
    fn em(&self, j: u64) -> f64 {
        match self.em.get(j as usize) {
            Some(v) => *v,
            None => (-(j as f64) * self.lam).exp_m1(),
        }
    }

    #[inline]
    fn ex(&self, j: u64) -> f64 {
        match self.ex.get(j as usize) {
            Some(v) => *v,
            None => (-(j as f64) * self.lam).exp(),
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    Classical,
    Deformed { table: PowTable, ascending: bool },
}

/// Reusable stepping kernel for one configuration.
///
/// Powers of `q` are tabulated up to the largest total reachable within the
/// declared horizon, so a step costs one uniform and a few lookups.
#[derive(Debug, Clone)]
pub struct UrnSampler {
    config: UrnConfig,
    kernel: Kernel,
}

impl UrnSampler {
    pub fn new(config: UrnConfig, horizon: u64) -> Self {
        let q = config.q();
        let kernel = if q.near_one() {
            Kernel::Classical
        } else {
            let max = config
                .finite_total()
                .map(|t| t + config.k() * horizon)
                .unwrap_or_else(|| config.initial[1].finite().unwrap_or(0) + config.k() * horizon);
            Kernel::Deformed {
                table: PowTable::new(q.ln().abs(), max),
                ascending: q.ln() < 0.0,
            }
        };
        Self { config, kernel }
    }

    pub fn config(&self) -> &UrnConfig {
        &self.config
    }

    /// Probability that colour 0 is drawn from `w` balls of colour 0 and `b` of colour 1.
    #[inline]
    pub fn first_colour_probability(&self, w: u64, b: u64) -> f64 {
        match &self.kernel {
            Kernel::Classical => w as f64 / (w + b) as f64,
            Kernel::Deformed { table, ascending } => {
                let ratio = table.em(w) / table.em(w + b);
                if *ascending {
                    ratio
                } else {
                    table.ex(b) * ratio
                }
            }
        }
    }

    /// Same as [`Self::first_colour_probability`] with infinitely many balls of colour 0.
    #[inline]
    pub fn infinite_first_colour_probability(&self, b: u64) -> f64 {
        match &self.kernel {
            Kernel::Deformed { table, ascending: false } => table.ex(b),
            _ => 1.0,
        }
    }

    /// Draws a colour for `state`, updates it and returns the colour index.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut UrnState, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let colour = self.pick(&state.counts, u);
        state.apply(colour, self.config.k());
        colour
    }

    fn pick(&self, counts: &[Count], u: f64) -> usize {
        if counts.len() == 2 {
            let p = match (counts[0], counts[1]) {
                (Count::Infinite, Count::Finite(b)) => self.infinite_first_colour_probability(b),
                (Count::Finite(w), Count::Finite(b)) => self.first_colour_probability(w, b),
                _ => unreachable!("validated by UrnConfig"),
            };
            return if u < p { 0 } else { 1 };
        }
        let finite: Vec<u64> = counts.iter().map(|c| c.finite().unwrap_or(0)).collect();
        let total: u64 = finite.iter().sum();
        let mut acc = 0.0;
        let mut before = 0u64;
        for (i, &w) in finite.iter().enumerate() {
            let p = match &self.kernel {
                Kernel::Classical => w as f64 / total as f64,
                Kernel::Deformed { table, ascending } => {
                    let lead = if *ascending { before } else { total - before - w };
                    table.ex(lead) * table.em(w) / table.em(total)
                }
            };
            acc += p;
            if u < acc {
                return i;
            }
            before += w;
        }
        // Rounding can leave `acc` a hair below 1; fall back to the last colour
        // that can actually be drawn.
        finite.iter().rposition(|&w| w > 0).unwrap_or(0)
    }
}

/// One draw from `state`, returning the updated state.
pub fn step<R: Rng + ?Sized>(state: &UrnState, config: &UrnConfig, rng: &mut R) -> Result<UrnState> {
    state.check(config)?;
    let sampler = UrnSampler::new(config.clone(), 1);
    let mut next = state.clone();
    sampler.step(&mut next, rng);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub config: UrnConfig,
    pub seed: Option<u64>,
}

/// Ball counts recorded at draw indices `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<Vec<Count>>,
    pub meta: PathMeta,
}

/// Simulates `horizon` draws, recording the composition every `stride`
/// draws as well as at `n = 0` and `n = horizon`.
pub fn simulate_path<R: Rng + ?Sized>(config: &UrnConfig, horizon: u64, stride: u64, rng: &mut R) -> Result<Path> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::param("stride", "must be at least 1"));
    }
    let sampler = UrnSampler::new(config.clone(), horizon);
    let mut state = config.initial_state();
    let mut times = vec![0.0];
    let mut values = vec![state.counts.clone()];
    for n in 1..=horizon {
        sampler.step(&mut state, rng);
        if n % stride == 0 || n == horizon {
            times.push(n as f64);
            values.push(state.counts.clone());
        }
    }
    Ok(Path {
        times,
        values,
        meta: PathMeta {
            config: config.clone(),
            seed: None,
        },
    })
}

/// [`simulate_path`] with a generator derived from `seed`, recorded in the path metadata.
pub fn simulate_path_seeded(config: &UrnConfig, horizon: u64, stride: u64, seed: u64) -> Result<Path> {
    let mut rng = seeded_rng(seed);
    let mut path = simulate_path(config, horizon, stride, &mut rng)?;
    path.meta.seed = Some(seed);
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    fn state(counts: &[u64]) -> UrnState {
        UrnState {
            counts: counts.iter().map(|&c| Count::Finite(c)).collect(),
            draws: vec![0; counts.len()],
            n: 0,
        }
    }

    #[test]
    fn two_colour_probabilities() {
        let cfg = UrnConfig::two_colour(1.into(), 1, 1, qp(2.0)).unwrap();
        let p = draw_probabilities(&state(&[1, 1]), &cfg).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_white() {
        let cfg = UrnConfig::two_colour(Count::Infinite, 2, 1, qp(2.0)).unwrap();
        let st = cfg.initial_state();
        let p = draw_probabilities(&st, &cfg).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let cfg = UrnConfig::two_colour(Count::Infinite, 2, 1, qp(0.5)).unwrap();
        assert_eq!(draw_probabilities(&cfg.initial_state(), &cfg).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn infinite_counts_are_restricted() {
        assert!(UrnConfig::new(vec![1.into(), Count::Infinite], 1, qp(2.0)).is_err());
        assert!(UrnConfig::new(vec![Count::Infinite, 1.into(), 1.into()], 1, qp(2.0)).is_err());
        assert!(UrnConfig::new(vec![0.into(), 0.into()], 1, qp(2.0)).is_err());
        assert!(UrnConfig::new(vec![1.into(), 1.into()], 0, qp(2.0)).is_err());
    }

    #[test]
    fn three_colour_telescoping() {
        let cfg = UrnConfig::new(vec![1.into(), 1.into(), 1.into()], 1, qp(0.5)).unwrap();
        let p = draw_probabilities(&state(&[1, 1, 1]), &cfg).unwrap();
        let expected = [0.5 / 0.875, 0.25 / 0.875, 0.125 / 0.875];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(
            counts in prop::collection::vec(0u64..40, 2..5),
            q in prop::sample::select(vec![0.3, 0.9, 1.0, 1.0 + 1e-9, 1.1, 3.0]),
        ) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let cfg = UrnConfig::new(counts.iter().map(|&c| c.into()).collect(), 1, qp(q)).unwrap();
            let p = draw_probabilities(&state(&counts), &cfg).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn reversed_line_matches_two_colour_formula(w in 0u64..60, b in 0u64..60, q in 1.01f64..4.0) {
            prop_assume!(w + b > 0);
            let cfg = UrnConfig::two_colour(w.into(), b, 1, qp(q)).unwrap();
            let p = draw_probabilities(&state(&[w, b]), &cfg).unwrap();
            let direct = (q.powi(w as i32) - 1.0) / (q.powi((w + b) as i32) - 1.0);
            prop_assert!((p[0] - direct).abs() < 1e-12);
        }

        #[test]
        fn bookkeeping(seed in 0u64..1000, q in prop::sample::select(vec![0.5, 1.0, 2.0]), k in 1u64..4) {
            let cfg = UrnConfig::new(vec![2.into(), 1.into(), 3.into()], k, qp(q)).unwrap();
            let sampler = UrnSampler::new(cfg.clone(), 1000);
            let mut st = cfg.initial_state();
            let mut rng = seeded_rng(seed);
            for _ in 0..1000 {
                sampler.step(&mut st, &mut rng);
            }
            let total: u64 = st.counts.iter().map(|c| c.finite().unwrap()).sum();
            prop_assert_eq!(total, 6 + k * st.n);
            for i in 0..3 {
                prop_assert_eq!(st.counts[i].finite().unwrap(), cfg.initial()[i].finite().unwrap() + k * st.draws[i]);
            }
            prop_assert_eq!(st.draws.iter().sum::<u64>(), st.n);
        }
    }

    #[test]
    fn sampler_table_matches_direct_formula() {
        for q in [0.5, 0.999, 1.001, 2.0] {
            let cfg = UrnConfig::new(vec![3.into(), 4.into(), 2.into()], 2, qp(q)).unwrap();
            let sampler = UrnSampler::new(cfg.clone(), 10);
            let st = state(&[7, 4, 12]);
            let p = draw_probabilities(&st, &cfg).unwrap();
            // sampling by inversion of u agrees with the cumulative probabilities
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                let u = acc + 0.5 * pi;
                assert_eq!(sampler.pick(&st.counts, u), i);
                acc += pi;
            }
        }
    }

    #[test]
    fn single_step_support() {
        let cfg = UrnConfig::two_colour(1.into(), 1, 2, qp(1.0)).unwrap();
        let mut rng = seeded_rng(3);
        let next = step(&cfg.initial_state(), &cfg, &mut rng).unwrap();
        let c: Vec<u64> = next.counts.iter().map(|c| c.finite().unwrap()).collect();
        assert!(c == vec![3, 1] || c == vec![1, 3]);
        assert_eq!(next.n, 1);
    }

    #[test]
    fn empirical_white_frequency() {
        let cfg = UrnConfig::two_colour(1.into(), 1, 1, qp(2.0)).unwrap();
        let mut rng = seeded_rng(11);
        let n = 100_000;
        let mut white = 0;
        for _ in 0..n {
            let next = step(&cfg.initial_state(), &cfg, &mut rng).unwrap();
            white += next.draws[0];
        }
        let p = white as f64 / n as f64;
        let sd = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
        assert!((p - 1.0 / 3.0).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn path_recording() {
        let cfg = UrnConfig::two_colour(1.into(), 1, 1, qp(0.5)).unwrap();
        let p = simulate_path_seeded(&cfg, 10, 10, 1).unwrap();
        assert_eq!(p.times, vec![0.0, 10.0]);
        let p = simulate_path_seeded(&cfg, 10, 3, 1).unwrap();
        assert_eq!(p.times, vec![0.0, 3.0, 6.0, 9.0, 10.0]);
        for w in p.values.windows(2) {
            for (after, before) in w[1].iter().zip(&w[0]) {
                assert!(after.finite().unwrap() >= before.finite().unwrap());
            }
        }
        assert_eq!(p, simulate_path_seeded(&cfg, 10, 3, 1).unwrap());
        assert_eq!(p.meta.seed, Some(1));
    }

    #[test]
    fn count_serde() {
        let v: Vec<Count> = serde_json::from_str(r#"[3, "inf"]"#).unwrap();
        assert_eq!(v, vec![Count::Finite(3), Count::Infinite]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[3,"inf"]"#);
        assert!("x".parse::<Count>().is_err());
    }
}
