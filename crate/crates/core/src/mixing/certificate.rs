//! Gap certificates and the exact checks that consume them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{rho_star_window, WindowSpec};
use crate::chains::{check_unit_open, indicator_chain_spec, MarkovChainSpec, WindowLaw};
use crate::dependence::lambda_coefficient;
use crate::error::{invalid, Error, Result};

/// A function `epsilon ↦ delta` such that a lambda coefficient at most
/// `delta` forces a maximal correlation at most `epsilon`.
#[derive(Clone)]
pub struct DeltaBound {
    name: String,
    evaluator: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for DeltaBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeltaBound").field("name", &self.name).finish()
    }
}

impl DeltaBound {
    pub fn new(name: impl Into<String>, evaluator: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            evaluator: Arc::new(evaluator),
        }
    }

    /// `delta = epsilon`. A runnable default, not a proven bound: no closed
    /// form for delta is assumed, so this is labelled non-sharp wherever
    /// it is reported.
    pub fn identity() -> Self {
        Self::new("identity", |e| e)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Evaluates the bound, rejecting values outside `(0, 1]`.
    pub fn eval(&self, epsilon: f64) -> Result<f64> {
        let delta = (self.evaluator)(epsilon);
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidBound {
                name: self.name.clone(),
                epsilon,
                delta,
            });
        }
        Ok(delta)
    }

    /// Whether the bound is nondecreasing across a sorted grid.
    pub fn is_monotone_on(&self, grid: &[f64]) -> bool {
        let vals: Vec<f64> = grid.iter().map(|&e| (self.evaluator)(e)).collect();
        vals.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Named delta bounds; starts with `identity`.
#[derive(Debug, Clone)]
pub struct DeltaRegistry {
    bounds: BTreeMap<String, DeltaBound>,
}

impl Default for DeltaRegistry {
    fn default() -> Self {
        let mut r = Self {
            bounds: BTreeMap::new(),
        };
        r.register(DeltaBound::identity());
        r
    }
}

impl DeltaRegistry {
    pub fn register(&mut self, bound: DeltaBound) {
        self.bounds.insert(bound.name.clone(), bound);
    }

    pub fn get(&self, name: &str) -> Option<&DeltaBound> {
        self.bounds.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bounds.keys().map(String::as_str)
    }
}

/// The tuple `(a, epsilon, delta, gamma, m)` with
/// `gamma = min(1/9, (delta/3)^2)` and `m` the least positive integer with
/// `a^m <= gamma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCertificate {
    pub a: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub m: usize,
    pub delta_bound: String,
}

impl GapCertificate {
    /// Rechecks every stated relation between the fields.
    pub fn holds(&self) -> bool {
        let m = self.m as i32;
        self.gamma <= 1.0 / 9.0
            && 3.0 * self.gamma.sqrt() <= self.delta * (1.0 + 1e-12)
            && self.m >= 1
            && self.a.powi(m) <= self.gamma
            && (self.m == 1 || self.a.powi(m - 1) > self.gamma)
    }
}

pub fn gap_for_epsilon(a: f64, epsilon: f64, bound: &DeltaBound) -> Result<GapCertificate> {
    check_unit_open(a, "a")?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} must lie in (0, 1]")));
    }
    let delta = bound.eval(epsilon)?;
    let gamma = (1.0f64 / 9.0).min((delta / 3.0).powi(2));
    let mut m = 1;
    while a.powi(m as i32) > gamma {
        m += 1;
    }
    Ok(GapCertificate {
        a,
        epsilon,
        delta,
        gamma,
        m,
        delta_bound: bound.name.clone(),
    })
}

/// Exact finite-window check that the certified gap keeps the interlaced
/// coefficient of a chain at or below epsilon.
#[derive(Debug, Clone, Serialize)]
pub struct WindowBoundReport {
    pub chain: String,
    pub params: serde_json::Value,
    pub certificate: GapCertificate,
    pub window_width: usize,
    pub cap: usize,
    pub value: f64,
    pub attaining: Option<WindowSpec>,
    pub pair_count: usize,
    pub truncation_error: f64,
    /// `epsilon - value`.
    pub margin: f64,
    /// The window is narrower than the gap, so no pair was checked.
    pub vacuous: bool,
    pub pass: bool,
}

/// Computes the gap for `(a, epsilon)` and the exact window coefficient of
/// `spec` at that gap.
pub fn verify_chain_bound(
    spec: &MarkovChainSpec,
    a: f64,
    epsilon: f64,
    bound: &DeltaBound,
    width: usize,
    cap: usize,
) -> Result<WindowBoundReport> {
    let certificate = gap_for_epsilon(a, epsilon, bound)?;
    let r = rho_star_window(spec, width, certificate.m, cap)?;
    Ok(WindowBoundReport {
        chain: spec.name.clone(),
        params: spec.params.clone(),
        window_width: width,
        cap,
        value: r.value,
        attaining: r.attaining,
        pair_count: r.pair_count,
        truncation_error: r.truncation_error,
        margin: epsilon - r.value,
        vacuous: r.vacuous,
        pass: r.value <= epsilon,
        certificate,
    })
}

/// [`verify_chain_bound`] for the indicator chain with `zeta_0 ~ Bernoulli(p0)`.
pub fn verify_indicator_bound(
    p0: f64,
    a: f64,
    epsilon: f64,
    bound: &DeltaBound,
    width: usize,
) -> Result<WindowBoundReport> {
    let spec = indicator_chain_spec(p0, a)?;
    verify_chain_bound(&spec, a, epsilon, bound, width, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Pass,
    Fail,
    /// The supplied law does not meet the hypotheses, so no claim applies.
    Inapplicable,
}

/// Outcome of the lambda bound for sequences with an absorbing zero.
#[derive(Debug, Clone, Serialize)]
pub struct AbsorbingBoundReport {
    pub epsilon: f64,
    pub length: usize,
    /// `3 sqrt(epsilon)`.
    pub bound: f64,
    pub value: Option<f64>,
    pub margin: Option<f64>,
    pub status: BoundStatus,
    pub hypothesis_failures: Vec<String>,
}

/// Slack allowed when checking the hypotheses on a floating-point law.
const HYPOTHESIS_TOLERANCE: f64 = 1e-12;

/// For a law of `(X_1, ..., X_L)` in which 0 is absorbing and every step
/// hits 0 with conditional probability at least `1 - epsilon`, the lambda
/// coefficient between the odd- and even-indexed variables is at most
/// `3 sqrt(epsilon)`. Checks the hypotheses on `law`, then the bound.
pub fn verify_absorbing_lambda_bound(law: &WindowLaw, epsilon: f64) -> Result<AbsorbingBoundReport> {
    let len = law.width();
    if !(2..=6).contains(&len) {
        return Err(invalid(format!("sequence length {len} must lie in 2..=6")));
    }
    let mut failures = Vec::new();
    if !(epsilon > 0.0 && epsilon <= 1.0 / 9.0) {
        failures.push(format!("epsilon = {epsilon} is outside (0, 1/9]"));
    }
    let total = law.total_mass();
    for n in 1..len {
        let mut prefix: BTreeMap<&[u32], (f64, f64)> = BTreeMap::new();
        let mut leaks = 0.0;
        for (t, p) in law.atoms() {
            let e = prefix.entry(&t[..n]).or_insert((0.0, 0.0));
            e.0 += p;
            if t[n] == 0 {
                e.1 += p;
            }
            if t[n - 1] == 0 && t[n] != 0 {
                leaks += p;
            }
        }
        if leaks > HYPOTHESIS_TOLERANCE * total {
            failures.push(format!("state 0 is left at step {} with mass {leaks:e}", n + 1));
        }
        for (past, (mass, zero)) in prefix {
            if zero / mass < 1.0 - epsilon - HYPOTHESIS_TOLERANCE {
                failures.push(format!(
                    "P(X_{} = 0 | {:?}) = {} is below 1 - epsilon",
                    n + 1,
                    past,
                    zero / mass
                ));
            }
        }
    }
    let bound = 3.0 * epsilon.sqrt();
    if !failures.is_empty() {
        return Ok(AbsorbingBoundReport {
            epsilon,
            length: len,
            bound,
            value: None,
            margin: None,
            status: BoundStatus::Inapplicable,
            hypothesis_failures: failures,
        });
    }
    let idx = law.indices();
    let odd: Vec<usize> = idx.iter().step_by(2).copied().collect();
    let even: Vec<usize> = idx.iter().skip(1).step_by(2).copied().collect();
    let value = lambda_coefficient(&law.joint_between(&odd, &even)?)?;
    Ok(AbsorbingBoundReport {
        epsilon,
        length: len,
        bound,
        value: Some(value),
        margin: Some(bound - value),
        status: if value <= bound {
            BoundStatus::Pass
        } else {
            BoundStatus::Fail
        },
        hypothesis_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{binomial_death_chain, poisson_death_chain, window_joint_pmf};

    fn fixed(delta: f64) -> DeltaBound {
        DeltaBound::new("fixed", move |_| delta)
    }

    #[test]
    fn certificate_values() {
        let c = gap_for_epsilon(0.5, 1.0, &DeltaBound::identity()).unwrap();
        assert_eq!((c.m, c.gamma), (4, 1.0 / 9.0));
        assert!(c.holds());
        let c = gap_for_epsilon(0.5, 0.3, &fixed(0.3)).unwrap();
        assert!((c.gamma - 0.01).abs() < 1e-17);
        assert_eq!(c.m, 7);
        assert_eq!(gap_for_epsilon(0.9, 0.3, &fixed(0.3)).unwrap().m, 44);
        // exact tie a^m = gamma takes the smaller m
        let c = gap_for_epsilon(0.25, 0.75, &DeltaBound::identity()).unwrap();
        assert_eq!((c.gamma, c.m), (0.0625, 2));
        assert!(c.holds());
    }

    #[test]
    fn certificate_errors() {
        let id = DeltaBound::identity();
        assert!(gap_for_epsilon(1.0, 0.5, &id).is_err());
        assert!(gap_for_epsilon(0.5, 0.0, &id).is_err());
        assert!(gap_for_epsilon(0.5, 1.5, &id).is_err());
        let zero = DeltaBound::new("zero", |_| 0.0);
        assert!(matches!(
            gap_for_epsilon(0.5, 0.5, &zero),
            Err(Error::InvalidBound { .. })
        ));
    }

    #[test]
    fn gap_nonincreasing_in_epsilon() {
        let id = DeltaBound::identity();
        let sqrt = DeltaBound::new("sqrt", f64::sqrt);
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        for bound in [&id, &sqrt] {
            assert!(bound.is_monotone_on(&grid));
            for a in [0.2, 0.5, 0.9] {
                let ms: Vec<usize> = grid.iter().map(|&e| gap_for_epsilon(a, e, bound).unwrap().m).collect();
                assert!(ms.windows(2).all(|w| w[1] <= w[0]));
                assert!(grid.iter().all(|&e| gap_for_epsilon(a, e, bound).unwrap().holds()));
            }
        }
        assert!(!DeltaBound::new("down", |e| 1.0 - e).is_monotone_on(&grid));
    }

    #[test]
    fn registry() {
        let mut r = DeltaRegistry::default();
        assert!(r.get("identity").is_some());
        assert!(r.get("sharp").is_none());
        r.register(DeltaBound::new("half", |e| e / 2.0));
        assert_eq!(r.names().collect::<Vec<_>>(), ["half", "identity"]);
    }

    #[test]
    fn indicator_bound() {
        let id = DeltaBound::identity();
        let zero = verify_indicator_bound(0.0, 0.5, 0.5, &id, 6).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.pass);
        // a = 0.5, epsilon = 0.5 gives m = 6: nothing fits in a width-6 window
        let r = verify_indicator_bound(0.5, 0.5, 0.5, &id, 6).unwrap();
        assert_eq!(r.certificate.m, 6);
        assert!(r.vacuous && r.pass && r.pair_count == 0);
        // a = 0.2 gives m = 3 at both epsilons, leaving real pairs
        for eps in [0.3, 0.5] {
            let r = verify_indicator_bound(0.6, 0.2, eps, &id, 6).unwrap();
            assert_eq!(r.certificate.m, 3);
            assert!(!r.vacuous && r.pass && r.pair_count > 1, "{r:?}");
        }
        for a in [0.2, 0.3, 0.5] {
            for eps in [0.3, 0.5] {
                for p0 in [0.3, 0.7, 1.0] {
                    let r = verify_indicator_bound(p0, a, eps, &id, 6).unwrap();
                    assert!(r.pass, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn larger_gaps_never_raise_the_coefficient() {
        let spec = indicator_chain_spec(0.8, 0.3).unwrap();
        let values: Vec<f64> = (1..6).map(|n| rho_star_window(&spec, 6, n, 1).unwrap().value).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn death_chains_respect_the_indicator_gap() {
        let id = DeltaBound::identity();
        let binom = binomial_death_chain(3, 0.5, 0.2).unwrap();
        let pois = poisson_death_chain(1.0, 0.2, 1e-12).unwrap();
        for eps in [0.3, 0.5] {
            let r = verify_chain_bound(&binom, 0.2, eps, &id, 4, 3).unwrap();
            assert!(r.pass && !r.vacuous, "{r:?}");
            let r = verify_chain_bound(&pois, 0.2, eps, &id, 4, pois.state_cap).unwrap();
            assert!(r.pass && !r.vacuous, "{r:?}");
        }
    }

    #[test]
    fn absorbing_bound_on_indicator_chains() {
        for eps in [0.01, 0.05, 1.0 / 9.0] {
            for len in 2..=6 {
                let spec = indicator_chain_spec(1.0, eps).unwrap();
                let law = window_joint_pmf(&spec, &(0..len).collect::<Vec<_>>(), 1).unwrap();
                let r = verify_absorbing_lambda_bound(&law, eps).unwrap();
                assert_eq!(r.status, BoundStatus::Pass, "{r:?}");
                assert!(r.value.unwrap() <= r.bound);
            }
        }
    }

    #[test]
    fn absorbing_bound_all_zero_and_hypothesis_failures() {
        let zeros = WindowLaw::from_atoms(vec![0, 1, 2, 3], &[(vec![0, 0, 0, 0], 1.0)]).unwrap();
        let r = verify_absorbing_lambda_bound(&zeros, 0.05).unwrap();
        assert_eq!(r.value, Some(0.0));
        assert_eq!(r.status, BoundStatus::Pass);

        // survival probability above epsilon
        let spec = indicator_chain_spec(1.0, 0.5).unwrap();
        let law = window_joint_pmf(&spec, &[0, 1, 2], 1).unwrap();
        let r = verify_absorbing_lambda_bound(&law, 0.05).unwrap();
        assert_eq!(r.status, BoundStatus::Inapplicable);
        assert!(r.value.is_none() && !r.hypothesis_failures.is_empty());

        // zero is not absorbing
        let leaky =
            WindowLaw::from_atoms(vec![0, 1], &[(vec![0, 0], 0.5), (vec![0, 1], 0.01), (vec![1, 0], 0.49)]).unwrap();
        let r = verify_absorbing_lambda_bound(&leaky, 0.1).unwrap();
        assert_eq!(r.status, BoundStatus::Inapplicable);

        let r = verify_absorbing_lambda_bound(&zeros, 0.2).unwrap();
        assert_eq!(r.status, BoundStatus::Inapplicable);
    }

    #[test]
    fn stationary_inar_windows_respect_the_gap() {
        use crate::chains::{inar_kernel, InarParams};
        let id = DeltaBound::identity();
        for lambda in [0.5, 1.0] {
            let spec = inar_kernel(InarParams::new(0.2, lambda).unwrap(), 1e-9).unwrap();
            for eps in [0.3, 0.5] {
                let r = verify_chain_bound(&spec, 0.2, eps, &id, 4, spec.state_cap).unwrap();
                assert!(!r.vacuous && r.pass, "lambda={lambda} eps={eps} value={}", r.value);
            }
        }
    }

    mod props {
        use super::*;
        use crate::chains::{indicator_chain_spec, MarkovChainSpec};
        use crate::mixing::rho_markov;
        use proptest::prelude::*;

        fn arb_chain() -> impl Strategy<Value = MarkovChainSpec> {
            prop_oneof![
                (1usize..4, 0.05f64..0.95, 0.05f64..0.95).prop_map(|(n, p, a)| binomial_death_chain(n, p, a).unwrap()),
                (0.05f64..1.0, 0.05f64..0.95).prop_map(|(p0, a)| indicator_chain_spec(p0, a).unwrap()),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn window_supremum_is_monotone(spec in arb_chain(), w in 2usize..6, n in 1usize..4) {
                let cap = spec.state_cap;
                let v = rho_star_window(&spec, w, n, cap).unwrap().value;
                prop_assert!(rho_star_window(&spec, w, n + 1, cap).unwrap().value <= v + 1e-12);
                prop_assert!(rho_star_window(&spec, w + 1, n, cap).unwrap().value >= v - 1e-12);
                if n < w {
                    prop_assert!(v >= rho_markov(&spec, n, cap).unwrap().value - 1e-12);
                }
            }

            #[test]
            fn certificate_arithmetic_holds(a in 0.01f64..0.99, eps in 0.001f64..=1.0) {
                for bound in [DeltaBound::identity(), DeltaBound::new("sqrt", f64::sqrt)] {
                    let c = gap_for_epsilon(a, eps, &bound).unwrap();
                    prop_assert!(c.holds());
                    prop_assert!(c.gamma <= 1.0 / 9.0);
                    prop_assert!(a.powi(c.m as i32) <= c.gamma);
                    prop_assert!(c.m == 1 || a.powi(c.m as i32 - 1) > c.gamma);
                }
            }
        }
    }
}
