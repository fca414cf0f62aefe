//! The stochastic processes under study and their exact finite-window laws.
//!
//! Every chain here is described by a [`MarkovChainSpec`]: an initial law
//! and a one-step kernel. The same description drives both Monte Carlo
//! simulation and the exact forward computations in [`window`].

mod csv;
mod simulate;
mod superposition;
mod window;

pub use csv::{read_paths_csv, CsvTable};
pub use simulate::{indicator_chain, simulate_chain, simulate_inar_direct, InnovationDecomposition, PathEnsemble};
pub use superposition::{
    direct_decomposition_law, neglected_mass, simulate_inar_superposition, superposition_decomposition_law,
    DecompositionLaw, SuperpositionConfig,
};
pub use window::{window_joint_pmf, WindowLaw, DEFAULT_EXPLOSION_LIMIT};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dist::{binomial_pmf, convolve, poisson_pmf, thin_unchecked, Pmf};
use crate::error::{invalid, Result};
use crate::numeric::CompensatedSum;

/// Parameters of the stationary INAR(1) chain with Poisson innovations:
/// survival probability `a` and innovation mean `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InarParams {
    pub a: f64,
    pub lambda: f64,
}

impl InarParams {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        check_unit_open(a, "a")?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda = {lambda} must be positive")));
        }
        Ok(Self { a, lambda })
    }

    /// Mean of the invariant Poisson marginal, `lambda / (1 - a)`.
    pub fn stationary_mean(&self) -> f64 {
        self.lambda / (1.0 - self.a)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "a": self.a, "lambda": self.lambda })
    }
}

pub(crate) fn check_unit_open(x: f64, name: &str) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{name} = {x} must lie in (0, 1)")));
    }
    Ok(())
}

pub(crate) fn check_unit_closed(x: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("{name} = {x} must lie in [0, 1]")));
    }
    Ok(())
}

/// One-step transition law, state ↦ [`Pmf`].
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `x ↦ Binomial(x, a) * innovation`.
    Inar { a: f64, innovation: Pmf },
    /// Pure death: `y ↦ Binomial(y, a)`.
    Death { a: f64 },
    /// Ignores the current state.
    Independent(Pmf),
    /// Explicit rows; states past the table reuse the last row.
    Table(Vec<Pmf>),
}

impl Kernel {
    pub fn row(&self, state: usize) -> Pmf {
        match self {
            Kernel::Inar { a, innovation } => convolve(&binomial_pmf(state, *a).expect("a validated"), innovation),
            Kernel::Death { a } => binomial_pmf(state, *a).expect("a validated"),
            Kernel::Independent(p) => p.clone(),
            Kernel::Table(rows) => rows[state.min(rows.len() - 1)].clone(),
        }
    }

    /// Whether rows never move mass upwards.
    pub fn is_death(&self) -> bool {
        matches!(self, Kernel::Death { .. })
    }

    /// One-step push of a law through the kernel.
    pub fn push(&self, p: &Pmf) -> Pmf {
        if let Kernel::Death { a } = self {
            return thin_unchecked(p, *a);
        }
        let mut acc: Vec<CompensatedSum> = Vec::new();
        let mut tail = CompensatedSum::new();
        tail.add(p.tail_mass());
        for (x, &px) in p.probs().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let row = self.row(x);
            if acc.len() < row.probs().len() {
                acc.resize(row.probs().len(), CompensatedSum::new());
            }
            for (y, &r) in row.probs().iter().enumerate() {
                acc[y].add(px * r);
            }
            tail.add(px * row.tail_mass());
        }
        if acc.is_empty() {
            acc.push(CompensatedSum::new());
        }
        Pmf::from_parts(acc.iter().map(CompensatedSum::value).collect(), tail.value()).trimmed()
    }
}

/// The kernel `y ↦ Binomial(y, a)`.
pub fn death_kernel(a: f64) -> Result<Kernel> {
    check_unit_open(a, "a")?;
    Ok(Kernel::Death { a })
}

/// Initial law, kernel, and the largest state the exact machinery tabulates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainSpec {
    pub initial: Pmf,
    pub kernel: Kernel,
    pub state_cap: usize,
    /// Construction name echoed into exported artifacts.
    pub name: String,
    pub params: serde_json::Value,
}

impl MarkovChainSpec {
    pub fn row(&self, state: usize) -> Pmf {
        self.kernel.row(state)
    }
}

/// Stationary INAR(1) chain: kernel `Binomial(x, a) * Poisson(lambda)`,
/// started from its invariant law `Poisson(lambda / (1 - a))`.
pub fn inar_kernel(params: InarParams, tail_budget: f64) -> Result<MarkovChainSpec> {
    let params = InarParams::new(params.a, params.lambda)?;
    let innovation = poisson_pmf(params.lambda, tail_budget)?;
    let initial = poisson_pmf(params.stationary_mean(), tail_budget)?;
    let state_cap = initial.max_state();
    Ok(MarkovChainSpec {
        initial,
        kernel: Kernel::Inar {
            a: params.a,
            innovation,
        },
        state_cap,
        name: "inar".into(),
        params: json!({ "a": params.a, "lambda": params.lambda, "tail_budget": tail_budget }),
    })
}

/// Pure-death chain started from `Binomial(n, p)`.
pub fn binomial_death_chain(n: usize, p: f64, a: f64) -> Result<MarkovChainSpec> {
    if n == 0 {
        return Err(invalid("binomial death chain needs N >= 1"));
    }
    check_unit_open(p, "p")?;
    Ok(MarkovChainSpec {
        initial: binomial_pmf(n, p)?,
        kernel: death_kernel(a)?,
        state_cap: n,
        name: "death-binomial".into(),
        params: json!({ "n": n, "p": p, "a": a }),
    })
}

/// Pure-death chain started from `Poisson(lambda)`.
pub fn poisson_death_chain(lambda: f64, a: f64, tail_budget: f64) -> Result<MarkovChainSpec> {
    let initial = poisson_pmf(lambda, tail_budget)?;
    Ok(MarkovChainSpec {
        state_cap: initial.max_state(),
        initial,
        kernel: death_kernel(a)?,
        name: "death-poisson".into(),
        params: json!({ "lambda": lambda, "a": a, "tail_budget": tail_budget }),
    })
}

/// The `{0,1}`-valued chain `zeta_k = zeta_0 * eta_1 * ... * eta_k`, viewed
/// as a death chain on `{0, 1}` started from `Bernoulli(p0)`.
pub fn indicator_chain_spec(p0: f64, a: f64) -> Result<MarkovChainSpec> {
    check_unit_closed(p0, "p0")?;
    Ok(MarkovChainSpec {
        initial: binomial_pmf(1, p0)?,
        kernel: death_kernel(a)?,
        state_cap: 1,
        name: "indicator".into(),
        params: json!({ "p0": p0, "a": a }),
    })
}

/// Chain of i.i.d. draws from `p`.
pub fn iid_chain(p: Pmf) -> MarkovChainSpec {
    MarkovChainSpec {
        state_cap: p.max_state(),
        initial: p.clone(),
        kernel: Kernel::Independent(p),
        name: "iid".into(),
        params: json!({}),
    }
}

/// Law of `X_j`: the initial law pushed `j` times through the kernel.
pub fn marginal_at(spec: &MarkovChainSpec, j: usize) -> Pmf {
    (0..j).fold(spec.initial.clone(), |p, _| spec.kernel.push(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{thin, total_variation};

    #[test]
    fn params_validation() {
        assert!(InarParams::new(0.5, 1.0).is_ok());
        assert!(InarParams::new(0.0, 1.0).is_err());
        assert!(InarParams::new(1.0, 1.0).is_err());
        assert!(InarParams::new(1.5, 1.0).is_err());
        assert!(InarParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn inar_kernel_rows() {
        let spec = inar_kernel(InarParams::new(0.5, 1.0).unwrap(), 1e-12).unwrap();
        let pois = poisson_pmf(1.0, 1e-12).unwrap();
        assert_eq!(spec.row(0), pois);
        // P(0 | 1) = (1 - a) e^{-lambda}
        let expected = 0.5 * (-1.0f64).exp();
        assert!((spec.row(1).prob(0) - expected).abs() < 1e-16);
        assert!((expected - 0.183_940).abs() < 1e-6);
    }

    #[test]
    fn inar_stationary_under_one_push() {
        for a in [0.3, 0.5, 0.7] {
            for lambda in [0.5, 1.0, 2.0] {
                let spec = inar_kernel(InarParams::new(a, lambda).unwrap(), 1e-12).unwrap();
                let pushed = spec.kernel.push(&spec.initial);
                assert!(total_variation(&pushed, &spec.initial) <= 1e-10);
            }
        }
    }

    #[test]
    fn death_kernel_rows() {
        let k = death_kernel(0.5).unwrap();
        assert_eq!(k.row(0), Pmf::point_mass(0));
        let k3 = death_kernel(0.3).unwrap().row(1);
        assert!((k3.prob(0) - 0.7).abs() < 1e-15 && (k3.prob(1) - 0.3).abs() < 1e-15);
        assert!((k.row(3).prob(2) - 0.375).abs() < 1e-15);
        for y in 0..20 {
            assert_eq!(k.row(y).max_state(), y);
        }
        assert!(death_kernel(1.0).is_err());
    }

    #[test]
    fn binomial_death_marginals() {
        let (n, p, a) = (6, 0.7, 0.4);
        let spec = binomial_death_chain(n, p, a).unwrap();
        assert_eq!(marginal_at(&spec, 0), binomial_pmf(n, p).unwrap());
        let mut oracle = binomial_pmf(n, p).unwrap();
        for j in 1..8 {
            oracle = thin(&oracle, a).unwrap();
            let m = marginal_at(&spec, j);
            assert!(m.max_state() <= n);
            assert!(m.sup_distance(&oracle) < 1e-15);
            let closed = binomial_pmf(n, p * a.powi(j as i32)).unwrap();
            assert!(m.sup_distance(&closed) <= 1e-12, "j={j}");
        }
    }

    #[test]
    fn poisson_death_marginals() {
        let spec = poisson_death_chain(2.0, 0.5, 1e-12).unwrap();
        assert_eq!(marginal_at(&spec, 0), poisson_pmf(2.0, 1e-12).unwrap());
        let m3 = marginal_at(&spec, 3);
        assert!(m3.sup_distance(&poisson_pmf(0.25, 1e-12).unwrap()) <= 1e-12);
        for j in 0..10 {
            let m = marginal_at(&spec, j);
            let mean = 2.0 * 0.5f64.powi(j as i32);
            assert!((m.head_mean() - mean).abs() < 1e-10);
        }
    }

    #[test]
    fn inar_marginal_stays_stationary() {
        let params = InarParams::new(0.7, 2.0).unwrap();
        let spec = inar_kernel(params, 1e-12).unwrap();
        let target = poisson_pmf(params.stationary_mean(), 1e-12).unwrap();
        for j in [0, 1, 5, 20] {
            assert!(total_variation(&marginal_at(&spec, j), &target) <= 1e-10, "j={j}");
        }
    }

    #[test]
    fn marginal_semigroup() {
        let spec = inar_kernel(InarParams::new(0.3, 0.5).unwrap(), 1e-12).unwrap();
        let m4 = marginal_at(&spec, 4);
        let m5 = marginal_at(&spec, 5);
        assert!(spec.kernel.push(&m4).sup_distance(&m5) <= 1e-12);
    }

    mod props {
        use super::*;
        use crate::dist::SeedSpec;
        use proptest::prelude::*;

        fn arb_params() -> impl Strategy<Value = InarParams> {
            (0.05f64..0.9, 0.1f64..3.0).prop_map(|(a, l)| InarParams::new(a, l).unwrap())
        }

        fn arb_death_chain() -> impl Strategy<Value = MarkovChainSpec> {
            prop_oneof![
                (1usize..8, 0.05f64..0.95, 0.05f64..0.95).prop_map(|(n, p, a)| binomial_death_chain(n, p, a).unwrap()),
                (0.1f64..4.0, 0.05f64..0.95).prop_map(|(l, a)| poisson_death_chain(l, a, 1e-12).unwrap()),
                (0.05f64..1.0, 0.05f64..0.95).prop_map(|(p0, a)| indicator_chain_spec(p0, a).unwrap()),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn death_chains_never_grow(spec in arb_death_chain(), root in any::<u64>()) {
                prop_assert_eq!(spec.row(0), Pmf::point_mass(0));
                for y in 0..=spec.state_cap {
                    prop_assert!(spec.row(y).support_max() <= y);
                }
                let e = simulate_chain(&spec, 12, 50, SeedSpec::new(root, 0)).unwrap();
                prop_assert!(e.paths().all(|p| p.windows(2).all(|w| w[1] <= w[0])));
            }

            #[test]
            fn decompositions_add_up(p in arb_params(), root in any::<u64>()) {
                let seed = SeedSpec::new(root, 0);
                let (_, direct) = simulate_inar_direct(p, 10, 40, seed).unwrap();
                prop_assert!(direct.iter().all(InnovationDecomposition::is_consistent));
                let config = SuperpositionConfig::for_params(p, 1e-6).unwrap();
                let (_, sup) = simulate_inar_superposition(p, config, 10, 40, seed).unwrap();
                prop_assert!(sup.iter().all(InnovationDecomposition::is_consistent));
            }

            #[test]
            fn marginals_follow_the_kernel(spec in arb_death_chain(), j in 0usize..8) {
                let next = spec.kernel.push(&marginal_at(&spec, j));
                prop_assert!(next.sup_distance(&marginal_at(&spec, j + 1)) <= 1e-12);
            }

            #[test]
            fn inar_marginals_follow_the_kernel(p in arb_params(), j in 0usize..6) {
                let spec = inar_kernel(p, 1e-12).unwrap();
                let next = spec.kernel.push(&marginal_at(&spec, j));
                prop_assert!(next.sup_distance(&marginal_at(&spec, j + 1)) <= 1e-12);
            }
        }
    }
}
