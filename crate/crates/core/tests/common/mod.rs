//! Reference implementations shared by the integration tests.
//!
//! Everything here is written directly from the textbook definitions, with
//! exact rational arithmetic where it matters, so it can serve as an oracle
//! for the optimised library code.

#![allow(dead_code)]

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

pub fn choose(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact null probabilities of every outcome, in outcome order.
pub fn binomial_pmf(total: u64) -> Vec<BigRational> {
    let denom = BigInt::one() << total as usize;
    (0..=total)
        .map(|k| BigRational::new(choose(total, k), denom.clone()))
        .collect()
}

/// Outcomes `lo..=hi` of the first cell and their exact probabilities.
pub fn hypergeometric_pmf(n1: u64, n2: u64, m: u64) -> (u64, Vec<BigRational>) {
    let lo = m.saturating_sub(n2);
    let hi = m.min(n1);
    let denom = choose(n1 + n2, m);
    let pmf = (lo..=hi)
        .map(|k| BigRational::new(choose(n1, k) * choose(n2, m - k), denom.clone()))
        .collect();
    (lo, pmf)
}

/// p-value of outcome `idx`: lower tail, or total mass of outcomes no more
/// likely than the observed one.
pub fn exact_pvalue(pmf: &[BigRational], idx: usize, two_sided: bool) -> BigRational {
    if two_sided {
        pmf.iter()
            .filter(|w| **w <= pmf[idx])
            .fold(BigRational::zero(), |a, w| a + w)
    } else {
        pmf[..=idx].iter().fold(BigRational::zero(), |a, w| a + w)
    }
}

/// Exact null distribution of the p-value as sorted `(p, mass)` pairs.
pub fn exact_null(pmf: &[BigRational], two_sided: bool) -> Vec<(BigRational, BigRational)> {
    let mut atoms: Vec<(BigRational, BigRational)> = Vec::new();
    for idx in 0..pmf.len() {
        let p = exact_pvalue(pmf, idx, two_sided);
        match atoms.iter_mut().find(|(q, _)| *q == p) {
            Some((_, w)) => *w += &pmf[idx],
            None => atoms.push((p, pmf[idx].clone())),
        }
    }
    atoms.sort_by(|a, b| a.0.cmp(&b.0));
    atoms
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("finite rational")
}

/// Largest `t` on a grid of all weighted p-values and their midpoints at
/// which `min(1, (1 - pi0) t m / max(R(t), 1)) <= alpha`, and the set
/// `{i : w_i <= t}` at that point. Evaluated straight from the definition.
pub fn grid_threshold(weighted: &[f64], pi0: f64, alpha: f64) -> (f64, Vec<usize>) {
    let m = weighted.len() as f64;
    let mut finite: Vec<f64> = weighted.iter().copied().filter(|w| w.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    finite.dedup();
    let mut grid = vec![0.0];
    for (i, &w) in finite.iter().enumerate() {
        grid.push(w);
        if let Some(&next) = finite.get(i + 1) {
            grid.push(0.5 * (w + next));
        }
    }
    if let Some(&last) = finite.last() {
        grid.push(last * 2.0 + 1.0);
    }
    let estimate = |t: f64| {
        let r = weighted.iter().filter(|&&w| w <= t).count().max(1) as f64;
        ((1.0 - pi0) * t / (r / m)).min(1.0)
    };
    let best = grid
        .into_iter()
        .filter(|&t| estimate(t) <= alpha)
        .fold(0.0_f64, f64::max);
    let rejected = (0..weighted.len())
        .filter(|&i| weighted[i] <= best)
        .collect();
    (best, rejected)
}

/// `max{i : scale * x_(i) <= i alpha / m}` by scanning every rank.
pub fn step_up_oracle(values: &[f64], scale: f64, alpha: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    let mut k = 0;
    for (rank, v) in sorted.iter().enumerate() {
        if scale * v <= (rank + 1) as f64 * alpha / m {
            k = rank + 1;
        }
    }
    k
}
