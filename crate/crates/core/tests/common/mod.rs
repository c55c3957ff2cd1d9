//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the library's q-calculus or laws.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Probability that a draw picks colour `i` from `counts`, straight from the
/// line experiment: `(q^{s_{i-1}} - q^{s_i}) / (1 - q^{s_l})`.
pub fn line_draw_probability(counts: &[f64], i: usize, q: f64) -> f64 {
    let total: f64 = counts.iter().sum();
    if q == 1.0 {
        return counts[i] / total;
    }
    let before: f64 = counts[..i].iter().sum();
    (q.powf(before) - q.powf(before + counts[i])) / (1.0 - q.powf(total))
}

/// Law of the number of draws of colour 0 in `n` draws, by enumerating all
/// colour sequences. `r = None` stands for infinitely many white balls
/// (white drawn with probability `q^{-s}` when `q > 1`).
pub fn enumerate_two_colour(r: Option<u64>, s: u64, k: u64, q: f64, n: u32) -> Vec<f64> {
    let mut law = vec![0.0; n as usize + 1];
    for mask in 0u32..(1 << n) {
        let mut p = 1.0;
        let mut w = r.map(|r| r as f64);
        let mut b = s as f64;
        for i in 0..n {
            let white = mask & (1 << i) != 0;
            let pw = match w {
                Some(w) => line_draw_probability(&[w, b], 0, q),
                None => q.powf(-b),
            };
            if white {
                p *= pw;
                w = w.map(|w| w + k as f64);
            } else {
                p *= 1.0 - pw;
                b += k as f64;
            }
        }
        law[mask.count_ones() as usize] += p;
    }
    law
}

/// Law of the draw counts of colours `2..=l` in `n` draws, by enumerating
/// all `l^n` colour sequences.
pub fn enumerate_multicolour(a: &[u64], k: u64, q: f64, n: u32) -> BTreeMap<Vec<u64>, f64> {
    let l = a.len();
    let mut law = BTreeMap::new();
    let total = (l as u64).pow(n);
    for code in 0..total {
        let mut counts: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let mut draws = vec![0u64; l];
        let mut p = 1.0;
        let mut c = code;
        for _ in 0..n {
            let i = (c % l as u64) as usize;
            c /= l as u64;
            p *= line_draw_probability(&counts, i, q);
            counts[i] += k as f64;
            draws[i] += 1;
        }
        *law.entry(draws[1..].to_vec()).or_insert(0.0) += p;
    }
    law
}

/// `[x]_q` for real `x`, from the definition.
pub fn q_number(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        x
    } else {
        (q.powf(x) - 1.0) / (q - 1.0)
    }
}

/// `[x choose j]_q = prod_{i<j} [x-i]_q / [i+1]_q`, from the definition.
pub fn q_binomial(x: f64, j: u64, q: f64) -> f64 {
    (0..j).map(|i| q_number(x - i as f64, q) / q_number(i as f64 + 1.0, q)).product()
}

/// `(x; q)_inf` by plain multiplication until the factors stop mattering.
pub fn q_pochhammer(x: f64, q: f64) -> f64 {
    let mut p = 1.0;
    let mut term = x;
    while term.abs() > 1e-18 {
        p *= 1.0 - term;
        term *= q;
    }
    p
}

/// The signed form of the two-colour draw law:
/// `q^{k(n-x)(a+x)} [-a, x]_{q^-k} [-b, n-x]_{q^-k} / [-a-b, n]_{q^-k}`.
pub fn two_colour_signed_form(r: u64, s: u64, k: u64, q: f64, n: u64, x: u64) -> f64 {
    let (a, b) = (r as f64 / k as f64, s as f64 / k as f64);
    let base = q.powf(-(k as f64));
    q.powf(k as f64 * (n - x) as f64 * (a + x as f64)) * q_binomial(-a, x, base) * q_binomial(-b, n - x, base)
        / q_binomial(-a - b, n, base)
}

/// The signed form of the many-colour draw law,
/// `q^{sum_{i>=2} x_i sum_{j<i} (a_j + k x_j)} prod [-a_i/k, x_i]_{q^-k} / [-sigma/k, n]_{q^-k}`,
/// with `x_1 = n - sum_{i>=2} x_i`.
pub fn multicolour_signed_form(a: &[u64], k: u64, q: f64, n: u64, rest: &[u64]) -> f64 {
    let kf = k as f64;
    let mut x = vec![n - rest.iter().sum::<u64>()];
    x.extend_from_slice(rest);
    let mut exponent = 0.0;
    for i in 1..a.len() {
        let before: f64 = (0..i).map(|j| a[j] as f64 + kf * x[j] as f64).sum();
        exponent += x[i] as f64 * before;
    }
    let base = q.powf(-kf);
    let num: f64 = a.iter().zip(&x).map(|(&ai, &xi)| q_binomial(-(ai as f64) / kf, xi, base)).product();
    let sigma: f64 = a.iter().map(|&v| v as f64).sum();
    q.powf(exponent) * num / q_binomial(-sigma / kf, n, base)
}

/// Joint law of the eventual draw counts of colours `2..=l` for `q < 1`, from its product form.
pub fn multicolour_limit(a: &[u64], k: u64, q: f64, rest: &[u64]) -> f64 {
    let kf = k as f64;
    let theta = q.powf(kf);
    let mut p = 1.0;
    let mut before = a[0] as f64;
    for (i, &xi) in rest.iter().enumerate() {
        let ai = a[i + 1] as f64;
        p *= q.powf(xi as f64 * before) * q_binomial(xi as f64 + ai / kf - 1.0, xi, theta);
        before += ai;
    }
    let sigma: f64 = a.iter().map(|&v| v as f64).sum();
    p * q_pochhammer(q.powf(a[0] as f64), theta) / q_pochhammer(q.powf(sigma), theta)
}

/// Eventual number of white draws for `q > 1`, from its closed form with finite `r`.
pub fn extinction_law(r: u64, s: u64, k: u64, q: f64, x: u64) -> f64 {
    let theta = q.powf(-(k as f64));
    q.powf(-(s as f64) * x as f64)
        * q_binomial(r as f64 / k as f64 + x as f64 - 1.0, x, theta)
        * q_pochhammer(q.powf(-(s as f64)), theta)
        / q_pochhammer(q.powf(-((r + s) as f64)), theta)
}

/// The q-fluctuation closed form's variance at `t`, by direct quadrature of
/// the Itô isometry: `G(t)^2 k^2 (c^a-1)(c^b-1) int_0^t c^{a+ks} / (c^{a+b+ks}-1)^2 ds`.
pub fn q_fluct_variance(a: f64, b: f64, k: f64, c: f64, t: f64) -> f64 {
    let g = (c.powf(a + b + k * t) - 1.0) / (c.powf(a + b + k * t) - c.powf(a + k * t) + c.powf(a) - 1.0);
    let f = |s: f64| c.powf(a + k * s) / (c.powf(a + b + k * s) - 1.0).powi(2);
    let n = 20_000;
    let h = t / n as f64;
    let mut acc = f(0.0) + f(t);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    g * g * k * k * (c.powf(a) - 1.0) * (c.powf(b) - 1.0) * acc * h / 3.0
}
