//! Interlaced dependence over finite windows, the Markov reduction of the
//! past/future coefficient, gap certificates and decay-rate fits.
//!
//! Window values are exact for the truncated window law and are lower
//! bounds on the coefficient over all of the index set: a supremum over
//! more pairs can only be larger.

mod certificate;

pub use certificate::{
    gap_for_epsilon, verify_absorbing_lambda_bound, verify_chain_bound, verify_indicator_bound, AbsorbingBoundReport,
    BoundStatus, DeltaBound, DeltaRegistry, GapCertificate, WindowBoundReport,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{window_joint_pmf, MarkovChainSpec};
use crate::dependence::maximal_correlation;
use crate::error::{invalid, Error, Result};

/// Largest window width the pair enumeration accepts (3^8 assignments).
pub const MAX_WINDOW_WIDTH: usize = 8;

/// Coefficients below this are treated as zero by [`fit_decay_rate`].
pub const DECAY_FLOOR: f64 = 1e-13;

/// Two disjoint nonempty index sets inside `{0, ..., width - 1}` at
/// distance at least `gap`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowSpec {
    pub width: usize,
    pub s: Vec<usize>,
    pub t: Vec<usize>,
    pub gap: usize,
}

fn set_distance(s: &[usize], t: &[usize]) -> usize {
    s.iter()
        .flat_map(|&i| t.iter().map(move |&j| i.abs_diff(j)))
        .min()
        .unwrap_or(usize::MAX)
}

impl WindowSpec {
    pub fn new(width: usize, mut s: Vec<usize>, mut t: Vec<usize>, gap: usize) -> Result<Self> {
        s.sort_unstable();
        t.sort_unstable();
        s.dedup();
        t.dedup();
        if s.is_empty() || t.is_empty() {
            return Err(invalid("S and T must be nonempty"));
        }
        if s.iter().chain(&t).any(|&i| i >= width) {
            return Err(invalid(format!("indices must lie below the window width {width}")));
        }
        let d = set_distance(&s, &t);
        if d == 0 {
            return Err(invalid("S and T must be disjoint"));
        }
        if d < gap {
            return Err(invalid(format!("dist(S, T) = {d} is below the gap {gap}")));
        }
        Ok(Self { width, s, t, gap })
    }

    /// `min |s - t|` over `s` in S, `t` in T.
    pub fn distance(&self) -> usize {
        set_distance(&self.s, &self.t)
    }
}

/// All unordered pairs `{S, T}` of disjoint nonempty subsets of
/// `{0, ..., width - 1}` at distance at least `gap`. Each pair appears once,
/// oriented so that the smallest index used belongs to S.
pub fn enumerate_window_pairs(width: usize, gap: usize) -> Result<Vec<WindowSpec>> {
    if width > MAX_WINDOW_WIDTH {
        return Err(Error::TooWideWindow {
            width,
            max: MAX_WINDOW_WIDTH,
        });
    }
    let gap = gap.max(1);
    let mut out = Vec::new();
    let total = 3usize.pow(width as u32);
    for code in 0..total {
        // digit i: 0 unused, 1 in S, 2 in T
        let (mut s, mut t) = (Vec::new(), Vec::new());
        let mut c = code;
        for i in 0..width {
            match c % 3 {
                1 => s.push(i),
                2 => t.push(i),
                _ => {}
            }
            c /= 3;
        }
        if s.is_empty() || t.is_empty() || t[0] < s[0] {
            continue;
        }
        if set_distance(&s, &t) >= gap {
            out.push(WindowSpec { width, s, t, gap });
        }
    }
    Ok(out)
}

/// Result of a finite-window interlaced coefficient computation.
#[derive(Debug, Clone, Serialize)]
pub struct RhoStarValue {
    pub value: f64,
    pub attaining: Option<WindowSpec>,
    pub pair_count: usize,
    pub truncation_error: f64,
    /// No admissible pair fits in the window; the value 0 is a convention.
    pub vacuous: bool,
}

/// Maximal correlation of the tuple over S against the tuple over T,
/// maximised over every pair from [`enumerate_window_pairs`], using the
/// exact law of `(X_0, ..., X_{W-1})` truncated at `cap`.
pub fn rho_star_window(spec: &MarkovChainSpec, width: usize, gap: usize, cap: usize) -> Result<RhoStarValue> {
    let pairs = enumerate_window_pairs(width, gap)?;
    if pairs.is_empty() {
        return Ok(RhoStarValue {
            value: 0.0,
            attaining: None,
            pair_count: 0,
            truncation_error: 0.0,
            vacuous: true,
        });
    }
    let indices: Vec<usize> = (0..width).collect();
    let law = window_joint_pmf(spec, &indices, cap)?;
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|p| law.joint_between(&p.s, &p.t).map(|j| maximal_correlation(&j)))
        .collect::<Result<_>>()?;
    // first maximum in enumeration order
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(RhoStarValue {
        value: values[best],
        attaining: Some(pairs[best].clone()),
        pair_count: pairs.len(),
        truncation_error: law.truncation_error(),
        vacuous: false,
    })
}

/// A coefficient with the mass its truncated law is missing.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhoValue {
    pub value: f64,
    pub truncation_error: f64,
}

/// Maximal correlation of `(X_0, X_n)` from the exact `n`-step joint. For
/// a Markov chain this equals the past/future coefficient at gap `n`.
pub fn rho_markov(spec: &MarkovChainSpec, n: usize, cap: usize) -> Result<RhoValue> {
    if n == 0 {
        return Err(invalid("gap n must be positive"));
    }
    let law = window_joint_pmf(spec, &[0, n], cap)?;
    let joint = law.joint_between(&[0], &[n])?;
    Ok(RhoValue {
        value: maximal_correlation(&joint),
        truncation_error: law.truncation_error(),
    })
}

/// Refuses caps below the chain's own state cap, which is sized to its
/// tail budget.
pub fn check_cap(spec: &MarkovChainSpec, cap: usize) -> Result<()> {
    if cap < spec.state_cap {
        return Err(Error::CapTooSmall {
            cap,
            required: spec.state_cap,
        });
    }
    Ok(())
}

/// Least-squares fit of `ln c = intercept + slope * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `exp(slope)`.
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits a geometric decay to the points with coefficient above
/// [`DECAY_FLOOR`]; needs at least three of them.
pub fn fit_decay_rate(values: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .filter(|(_, c)| *c > DECAY_FLOOR && c.is_finite())
        .map(|&(n, c)| (n, c.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            usable: pts.len(),
            required: 3,
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("decay fit needs at least two distinct n"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit {
        rate: slope.exp(),
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}
