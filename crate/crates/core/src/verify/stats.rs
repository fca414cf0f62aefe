//! Chi-square tests on integer samples.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::Pmf;

/// Smallest expected count allowed in a pooled bin.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquareResult {
    fn degenerate(p_value: f64) -> Self {
        Self {
            statistic: if p_value == 0.0 { f64::INFINITY } else { 0.0 },
            df: 0,
            p_value,
        }
    }
}

fn upper_tail(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).expect("df positive").sf(statistic)
}

/// Goodness of fit of `sample` to `expected`. Adjacent states are pooled
/// left to right until each bin expects at least [`MIN_EXPECTED`] counts;
/// the last bin is open-ended and absorbs any remainder. A sample value the
/// law cannot produce gives p = 0.
pub fn chi_square_gof(sample: &[u32], expected: &Pmf) -> ChiSquareResult {
    let n = sample.len();
    if n == 0 {
        return ChiSquareResult::degenerate(1.0);
    }
    let head = expected.probs().len();
    let max_obs = sample.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max_obs.max(head) + 1];
    for &x in sample {
        counts[x as usize] += 1;
    }
    let impossible = counts
        .iter()
        .enumerate()
        .any(|(x, &c)| c > 0 && expected.prob(x) == 0.0 && (x < head || expected.tail_mass() == 0.0));
    if impossible {
        return ChiSquareResult::degenerate(0.0);
    }

    let nf = n as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (x, &c) in counts.iter().enumerate().take(head) {
        obs += c as f64;
        exp += nf * expected.prob(x);
        if exp >= MIN_EXPECTED {
            bins.push((obs, exp));
            (obs, exp) = (0.0, 0.0);
        }
    }
    obs += counts[head..].iter().sum::<u64>() as f64;
    exp += nf * expected.tail_mass();
    match bins.last_mut() {
        Some(last) if exp < MIN_EXPECTED => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => bins.push((obs, exp)),
    }
    let statistic: f64 = bins
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let df = bins.len().saturating_sub(1);
    ChiSquareResult {
        statistic,
        df,
        p_value: upper_tail(statistic, df),
    }
}

/// Bin label of every value: values are grouped in increasing order until
/// each group holds at least `min_count` observations, leftovers joining
/// the last group.
fn marginal_bins(sample: &[u32], min_count: usize) -> BTreeMap<u32, usize> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &x in sample {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut label = BTreeMap::new();
    let (mut bin, mut filled) = (0usize, 0usize);
    let mut pending = Vec::new();
    for (&x, &c) in &counts {
        pending.push(x);
        filled += c;
        if filled >= min_count {
            for v in pending.drain(..) {
                label.insert(v, bin);
            }
            bin += 1;
            filled = 0;
        }
    }
    let last = bin.saturating_sub(1);
    for v in pending {
        label.insert(v, last);
    }
    label
}

/// Pearson test of independence between paired samples. Each margin is
/// binned so that every bin holds at least `ceil(sqrt(5 N))` observations,
/// which keeps every expected cell count at or above 5.
pub fn chi_square_independence(xs: &[u32], ys: &[u32]) -> ChiSquareResult {
    assert_eq!(xs.len(), ys.len(), "paired samples must have equal length");
    let n = xs.len();
    if n == 0 {
        return ChiSquareResult::degenerate(1.0);
    }
    let min_count = (MIN_EXPECTED * n as f64).sqrt().ceil() as usize;
    let bx = marginal_bins(xs, min_count);
    let by = marginal_bins(ys, min_count);
    let r = bx.values().max().map_or(1, |m| m + 1);
    let c = by.values().max().map_or(1, |m| m + 1);
    let mut table = vec![vec![0u64; c]; r];
    for (x, y) in xs.iter().zip(ys) {
        table[bx[x]][by[y]] += 1;
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c)
        .map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64)
        .collect();
    let nf = n as f64;
    let mut statistic = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / nf;
            statistic += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let df = (r - 1) * (c - 1);
    ChiSquareResult {
        statistic,
        df,
        p_value: upper_tail(statistic, df),
    }
}

/// Bonferroni-adjusted smallest p-value of a family, capped at 1.
pub fn bonferroni_min(p_values: &[f64]) -> f64 {
    let min = p_values.iter().copied().fold(1.0, f64::min);
    (min * p_values.len().max(1) as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{binomial_pmf, poisson_pmf, sample, SeedSpec};

    #[test]
    fn gof_accepts_own_law_and_rejects_shift() {
        let p = poisson_pmf(2.0, 1e-12).unwrap();
        let xs = sample(&p, SeedSpec::new(3, 0), 20_000).unwrap();
        let r = chi_square_gof(&xs, &p);
        assert!(r.p_value > 1e-3 && r.df >= 5, "{r:?}");
        let q = poisson_pmf(2.2, 1e-12).unwrap();
        assert!(chi_square_gof(&xs, &q).p_value < 1e-10);
    }

    #[test]
    fn gof_pooling_and_degenerate_cases() {
        // Binomial(3, 0.5) with 8 draws: expected 1, 3, 3, 1 pools into one bin.
        let b = binomial_pmf(3, 0.5).unwrap();
        let r = chi_square_gof(&[0, 1, 1, 1, 2, 2, 2, 3], &b);
        assert_eq!(r.df, 0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(chi_square_gof(&[0, 4], &b).p_value, 0.0);
        let point = Pmf::point_mass(0);
        assert_eq!(chi_square_gof(&[0; 50], &point).p_value, 1.0);
        assert_eq!(chi_square_gof(&[0, 0, 1], &point).p_value, 0.0);
    }

    #[test]
    fn gof_statistic_by_hand() {
        // Two states with equal mass: 60 vs 40 of 100 gives 2 + 2 on one df.
        let p = Pmf::new(vec![0.5, 0.5], 0.0).unwrap();
        let mut xs = vec![0u32; 60];
        xs.extend([1u32; 40]);
        let r = chi_square_gof(&xs, &p);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        assert!((r.p_value - 0.045_500_263_896_358_4).abs() < 1e-9);
    }

    #[test]
    fn independence_detects_coupling() {
        let p = poisson_pmf(1.5, 1e-12).unwrap();
        let xs = sample(&p, SeedSpec::new(5, 0), 20_000).unwrap();
        let ys = sample(&p, SeedSpec::new(5, 1), 20_000).unwrap();
        assert!(chi_square_independence(&xs, &ys).p_value > 1e-3);
        let coupled: Vec<u32> = xs.iter().zip(&ys).map(|(x, y)| y + u32::from(*x > 1)).collect();
        assert!(chi_square_independence(&xs, &coupled).p_value < 1e-10);
    }

    #[test]
    fn independence_on_constant_margin() {
        let r = chi_square_independence(&[0; 100], &(0..100).map(|i| i % 3).collect::<Vec<_>>());
        assert_eq!((r.df, r.p_value), (0, 1.0));
    }

    #[test]
    fn binning_respects_min_count() {
        let xs: Vec<u32> = (0..1000).map(|i| (i % 10) as u32).collect();
        let bins = marginal_bins(&xs, 250);
        assert_eq!(bins[&0], 0);
        assert_eq!(bins[&2], 0);
        assert_eq!(bins[&3], 1);
        assert_eq!(bins[&9], 2);
    }

    #[test]
    fn bonferroni() {
        assert_eq!(bonferroni_min(&[0.5, 0.01, 0.2]), 0.03);
        assert_eq!(bonferroni_min(&[0.9, 0.8]), 1.0);
        assert_eq!(bonferroni_min(&[]), 1.0);
    }
}
