//! Verification campaigns: Monte Carlo and exact checks that both INAR(1)
//! constructions have the stationary law, the innovation structure and the
//! Markov property they are supposed to have, plus exact checks of the
//! dependence bounds behind the mixing rate.
//!
//! Every check yields a [`CheckReport`] whose pass flag is recomputable
//! from its statistic, threshold and comparison. Errors inside a check are
//! recorded in its report and never abort a campaign.

mod properties;
mod stats;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chains::{
    direct_decomposition_law, inar_kernel, marginal_at, neglected_mass, poisson_death_chain, simulate_inar_direct,
    simulate_inar_superposition, superposition_decomposition_law, window_joint_pmf, DecompositionLaw, InarParams,
    InnovationDecomposition, PathEnsemble, SuperpositionConfig, WindowLaw,
};
use crate::dependence::markov_triplet_residual;
use crate::dist::{binomial_pmf, poisson_pmf, total_variation, Pmf, SeedSpec, DEFAULT_SAMPLING_THRESHOLD};
use crate::error::{Error, Result};
use crate::json::to_string_pretty;

pub use properties::{inar_decay_rate, non_markov_control_law, poisson_split_law, property_checks};
pub use stats::{bonferroni_min, chi_square_gof, chi_square_independence, ChiSquareResult, MIN_EXPECTED};

/// Fewest paths accepted for distributional checks.
pub const MIN_PATHS: usize = 10_000;
/// Conditioning strata with fewer observations are skipped.
pub const MIN_STRATUM: usize = 200;
/// Tolerance of exact distributional identities.
pub const EXACT_TOLERANCE: f64 = 1e-10;
/// Last time index of the exact stationary-marginal check.
pub const EXACT_HORIZON: usize = 20;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;
/// Monte Carlo checks run per grid point.
const MC_CHECKS_PER_POINT: usize = 7;

/// Deliberately broken variants that the campaign must reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// `V'_k = V_k + 1{X'_{k-1} > mean}` and `X'_k = U_k + V'_k`.
    CorruptInnovation,
    /// The simulated superposition uses `a + 0.1`.
    PerturbedSuperposition,
    /// Simulated marginals are compared with `Poisson(lambda)`.
    WrongMean,
    /// Adds the Markov check of a process with two-step memory.
    NonMarkov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub path_length: usize,
    pub seed: SeedSpec,
    /// Family-wise false-alarm rate of all Monte Carlo checks together.
    pub significance: f64,
    pub truncation_budget: f64,
    pub grid_a: Vec<f64>,
    pub grid_lambda: Vec<f64>,
    /// Paths simulated for the window-law comparison.
    pub equivalence_paths: usize,
    pub equivalence_width: usize,
    /// Whether the campaign includes the exact dependence-bound checks.
    pub property_checks: bool,
    pub control: Option<Control>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            path_length: 50,
            seed: SeedSpec::new(20_240_601, 0),
            significance: DEFAULT_SIGNIFICANCE,
            truncation_budget: 1e-12,
            grid_a: vec![0.3, 0.5, 0.7],
            grid_lambda: vec![0.5, 1.0, 2.0],
            equivalence_paths: 200_000,
            equivalence_width: 2,
            property_checks: true,
            control: None,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_paths < MIN_PATHS || self.equivalence_paths < MIN_PATHS {
            return bad(format!(
                "n_paths = {} and equivalence_paths = {} must both be at least {MIN_PATHS}",
                self.n_paths, self.equivalence_paths
            ));
        }
        if self.path_length < 2 {
            return bad(format!("path_length = {} must be at least 2", self.path_length));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return bad(format!("significance = {} must lie in (0, 1)", self.significance));
        }
        if !(self.truncation_budget > 0.0 && self.truncation_budget < 1.0) {
            return bad(format!(
                "truncation_budget = {} must lie in (0, 1)",
                self.truncation_budget
            ));
        }
        if !(1..=4).contains(&self.equivalence_width) {
            return bad(format!(
                "equivalence_width = {} must lie in 1..=4",
                self.equivalence_width
            ));
        }
        if self.grid_a.is_empty() || self.grid_lambda.is_empty() {
            return bad("the parameter grid is empty".into());
        }
        for p in self.grid() {
            InarParams::new(p.0, p.1).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    fn grid(&self) -> Vec<(f64, f64)> {
        self.grid_a
            .iter()
            .flat_map(|&a| self.grid_lambda.iter().map(move |&l| (a, l)))
            .collect()
    }

    /// Significance of one Monte Carlo check: the campaign level split
    /// evenly over all of them.
    pub fn check_significance(&self) -> f64 {
        self.significance / (MC_CHECKS_PER_POINT * self.grid().len()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    /// NaN never passes.
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub construction: String,
    pub params: Value,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub provenance: Provenance,
    pub seed: Option<SeedSpec>,
    /// Truncation mass the statistic or threshold accounts for.
    pub budget: f64,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(
        check: &str,
        construction: &str,
        params: Value,
        statistic: f64,
        threshold: f64,
        comparison: Comparison,
        provenance: Provenance,
    ) -> Self {
        Self {
            check: check.into(),
            construction: construction.into(),
            params,
            statistic,
            threshold,
            comparison,
            pass: comparison.holds(statistic, threshold),
            provenance,
            seed: None,
            budget: 0.0,
            notes: Vec::new(),
        }
    }

    /// A failed report recording why the check could not run.
    pub fn errored(
        check: &str,
        construction: &str,
        params: Value,
        provenance: Provenance,
        error: impl std::fmt::Display,
    ) -> Self {
        let mut r = Self::new(
            check,
            construction,
            params,
            f64::NAN,
            0.0,
            Comparison::AtMost,
            provenance,
        );
        r.notes.push(format!("error: {error}"));
        r
    }

    fn with_seed(mut self, seed: SeedSpec) -> Self {
        self.seed = Some(seed);
        self
    }

    fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Whether the pass flag agrees with the statistic and threshold.
    pub fn is_consistent(&self) -> bool {
        self.pass == self.comparison.holds(self.statistic, self.threshold)
    }

    pub fn label(&self) -> String {
        format!("{} [{}] {}", self.check, self.construction, self.params)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub failing: Vec<String>,
    pub all_pass: bool,
}

impl Summary {
    pub fn of(checks: &[CheckReport]) -> Self {
        let failing: Vec<String> = checks.iter().filter(|c| !c.pass).map(CheckReport::label).collect();
        Self {
            total: checks.len(),
            passed: checks.len() - failing.len(),
            failed: failing.len(),
            all_pass: failing.is_empty(),
            failing,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub config: McConfig,
    pub notes: Vec<String>,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
}

impl CampaignReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(to_string_pretty(self)?)
    }
}

/// Seed for the job named `tag`: a fixed mix of the root seed and the tag,
/// on the configured stream.
pub fn derive_seed(seed: SeedSpec, tag: &str) -> SeedSpec {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finaliser
    let mut z = seed.root_seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    SeedSpec::new(z ^ (z >> 31), seed.stream_index)
}

fn params_json(params: InarParams) -> Value {
    json!({ "a": params.a, "lambda": params.lambda })
}

/// Runs `f`, turning an error into a failed report.
fn capture(
    check: &str,
    construction: &str,
    params: &Value,
    provenance: Provenance,
    f: impl FnOnce() -> Result<CheckReport>,
) -> CheckReport {
    f().unwrap_or_else(|e| CheckReport::errored(check, construction, params.clone(), provenance, e))
}

/// Chi-square goodness of fit of every time index of `ensemble` to
/// `expected`, Bonferroni-corrected across indices. The statistic is the
/// adjusted smallest p-value.
pub fn check_stationary_marginal(ensemble: &PathEnsemble, expected: &Pmf, alpha: f64) -> CheckReport {
    let ps: Vec<f64> = (0..ensemble.length())
        .into_par_iter()
        .map(|k| chi_square_gof(&ensemble.column(k), expected).p_value)
        .collect();
    CheckReport::new(
        "stationary-marginal",
        &ensemble.construction,
        ensemble.params.clone(),
        bonferroni_min(&ps),
        alpha,
        Comparison::AtLeast,
        Provenance::MonteCarlo,
    )
    .with_seed(ensemble.seed)
    .with_budget(expected.tail_mass())
    .note(format!("{} time indices tested", ps.len()))
}

/// Largest total variation between the propagated marginal of the INAR
/// kernel and its stationary Poisson law over `j <= 20`.
pub fn check_stationary_marginal_exact(params: InarParams, tail_budget: f64) -> Result<CheckReport> {
    let spec = inar_kernel(params, tail_budget)?;
    let target = poisson_pmf(params.stationary_mean(), tail_budget)?;
    let mut worst: f64 = 0.0;
    let mut marginal = spec.initial.clone();
    for j in 0..=EXACT_HORIZON {
        if j > 0 {
            marginal = spec.kernel.push(&marginal);
        }
        worst = worst.max(total_variation(&marginal, &target));
    }
    debug_assert_eq!(marginal, marginal_at(&spec, EXACT_HORIZON));
    Ok(CheckReport::new(
        "stationary-marginal",
        "inar-kernel",
        params_json(params),
        worst,
        EXACT_TOLERANCE,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(marginal.tail_mass().max(target.tail_mass())))
}

/// Chi-square independence of `V_k` against `X_{k-1}`, `U_k` and
/// `V_{k-1}` at every time index, Bonferroni-corrected.
pub fn check_innovation_independence(
    decompositions: &[InnovationDecomposition],
    construction: &str,
    params: Value,
    alpha: f64,
) -> CheckReport {
    let length = decompositions.first().map_or(0, |d| d.x.len());
    let col = |f: fn(&InnovationDecomposition) -> &Vec<u32>, k: usize| -> Vec<u32> {
        decompositions.iter().map(|d| f(d)[k]).collect()
    };
    let ps: Vec<f64> = (0..length)
        .into_par_iter()
        .flat_map_iter(|k| {
            let v = col(|d| &d.v, k);
            let mut out = vec![chi_square_independence(&v, &col(|d| &d.u, k)).p_value];
            if k > 0 {
                out.push(chi_square_independence(&v, &col(|d| &d.x, k - 1)).p_value);
                out.push(chi_square_independence(&v, &col(|d| &d.v, k - 1)).p_value);
            }
            out
        })
        .collect();
    CheckReport::new(
        "innovation-independence",
        construction,
        params,
        bonferroni_min(&ps),
        alpha,
        Comparison::AtLeast,
        Provenance::MonteCarlo,
    )
    .note(format!("{} pairwise tests", ps.len()))
}

/// Goodness of fit of `U_k` given `X_{k-1} = x` to `Binomial(x, a)`, pooled
/// over `k >= 1`, one test per stratum `x` with at least 200 observations.
pub fn check_thinning_conditional(
    decompositions: &[InnovationDecomposition],
    construction: &str,
    params: InarParams,
    alpha: f64,
) -> Result<CheckReport> {
    let mut strata: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for d in decompositions {
        for k in 1..d.x.len() {
            strata.entry(d.x[k - 1]).or_default().push(d.u[k]);
        }
    }
    let (tested, skipped): (Vec<_>, Vec<_>) = strata.into_iter().partition(|(_, s)| s.len() >= MIN_STRATUM);
    let ps = tested
        .par_iter()
        .map(|(x, s)| Ok(chi_square_gof(s, &binomial_pmf(*x as usize, params.a)?).p_value))
        .collect::<Result<Vec<f64>>>()?;
    let skipped_obs: usize = skipped.iter().map(|(_, s)| s.len()).sum();
    Ok(CheckReport::new(
        "thinning-conditional",
        construction,
        params_json(params),
        bonferroni_min(&ps),
        alpha,
        Comparison::AtLeast,
        Provenance::MonteCarlo,
    )
    .note(format!("{} strata tested", ps.len()))
    .note(format!(
        "{} strata skipped with fewer than {MIN_STRATUM} observations ({skipped_obs} observations)",
        skipped.len()
    )))
}

/// Exact version: largest total variation between the law of `U_1` given
/// `X_0 = x` and `Binomial(x, a)`.
pub fn check_thinning_conditional_exact(law: &DecompositionLaw) -> CheckReport {
    CheckReport::new(
        "thinning-conditional",
        &law.construction,
        params_json(law.params),
        law.thinning_error(),
        EXACT_TOLERANCE,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(law.innovation.truncation_error())
}

/// Residuals of the observation triplet `((X_0, X_1), X_1, X_2)` and of the
/// decomposition triplet `((U_0, V_0), X_0, U_1)`; the statistic is the
/// larger.
pub fn check_markov_property(law: &DecompositionLaw) -> Result<CheckReport> {
    let obs = markov_triplet_residual(&law.observation_triplet()?);
    let inn = markov_triplet_residual(&law.innovation_triplet()?);
    Ok(CheckReport::new(
        "markov-property",
        &law.construction,
        params_json(law.params),
        obs.max(inn),
        EXACT_TOLERANCE,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(
        law.observation
            .truncation_error()
            .max(law.innovation.truncation_error()),
    )
    .note(format!("observation residual {obs:e}, decomposition residual {inn:e}")))
}

/// Markov residual of `((X_0, X_1), X_1, X_2)` for an arbitrary law on
/// three consecutive states.
pub fn check_window_markov(law: &WindowLaw, construction: &str, params: Value) -> Result<CheckReport> {
    let r = markov_triplet_residual(&law.triplet(&[0, 1], &[1], &[2])?);
    Ok(CheckReport::new(
        "markov-property",
        construction,
        params,
        r,
        EXACT_TOLERANCE,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(law.truncation_error()))
}

/// Total variation between the exact decomposition laws of the two
/// constructions, the larger of the innovation and observation windows.
pub fn check_construction_equivalence_exact(direct: &DecompositionLaw, superposed: &DecompositionLaw) -> CheckReport {
    let obs = direct.observation.total_variation(&superposed.observation);
    let inn = direct.innovation.total_variation(&superposed.innovation);
    CheckReport::new(
        "construction-equivalence",
        &superposed.construction,
        params_json(superposed.params),
        obs.max(inn),
        EXACT_TOLERANCE,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(
        superposed
            .observation
            .truncation_error()
            .max(superposed.innovation.truncation_error()),
    )
    .note(format!("observation TV {obs:e}, decomposition TV {inn:e}"))
}

/// Empirical law of the first `width` states of each path.
fn empirical_window(ensemble: &PathEnsemble, width: usize) -> Result<WindowLaw> {
    let mut counts: HashMap<&[u32], u64> = HashMap::new();
    for p in ensemble.paths() {
        *counts.entry(&p[..width]).or_insert(0) += 1;
    }
    let n = ensemble.n_paths() as f64;
    let atoms: Vec<(Vec<u32>, f64)> = counts.into_iter().map(|(t, c)| (t.to_vec(), c as f64 / n)).collect();
    WindowLaw::from_atoms((0..width).collect(), &atoms)
}

/// Threshold for the total variation between an empirical law of `n` draws
/// and `exact`: the mean bound `0.5 sum sqrt(p (1 - p) / n)`, plus the
/// McDiarmid deviation `sqrt(ln(1 / alpha) / (2 n))` (one draw moves the
/// distance by at most `1 / n`), plus the truncation mass of both sides.
pub fn fluctuation_threshold(exact: &WindowLaw, n: usize, alpha: f64, simulation_error: f64) -> f64 {
    let nf = n as f64;
    let mean: f64 =
        exact.atoms().map(|(_, p)| (p * (1.0 - p) / nf).sqrt()).sum::<f64>() + (exact.truncation_error() / nf).sqrt();
    0.5 * mean + ((1.0 / alpha).ln() / (2.0 * nf)).sqrt() + exact.truncation_error() + simulation_error
}

/// Total variation between the exact INAR window law of the first `width`
/// states and the empirical law of `n_paths` superposition paths simulated
/// with thinning parameter `a_sim`.
pub fn check_construction_equivalence(
    params: InarParams,
    a_sim: f64,
    width: usize,
    n_paths: usize,
    tail_budget: f64,
    seed: SeedSpec,
    alpha: f64,
) -> Result<CheckReport> {
    let spec = inar_kernel(params, tail_budget)?;
    let indices: Vec<usize> = (0..width).collect();
    let exact = window_joint_pmf(&spec, &indices, spec.state_cap)?;
    let sim_params = InarParams::new(a_sim, params.lambda)?;
    let sup = SuperpositionConfig::for_params(sim_params, tail_budget)?;
    let (ensemble, _) = simulate_inar_superposition(sim_params, sup, width, n_paths, seed)?;
    let empirical = empirical_window(&ensemble, width)?;
    // dropped chains plus one truncated starting draw per chain
    let simulation_error =
        neglected_mass(sim_params, sup.depth + 1) + (sup.warmup + width) as f64 * DEFAULT_SAMPLING_THRESHOLD;
    let threshold = fluctuation_threshold(&exact, n_paths, alpha, simulation_error);
    let mut params_out = params_json(params);
    params_out["width"] = json!(width);
    params_out["n_paths"] = json!(n_paths);
    let mut report = CheckReport::new(
        "construction-equivalence",
        "superposition",
        params_out,
        exact.total_variation(&empirical),
        threshold,
        Comparison::AtMost,
        Provenance::MonteCarlo,
    )
    .with_seed(seed)
    .with_budget(exact.truncation_error() + simulation_error);
    if a_sim != params.a {
        report = report.note(format!("simulated with a = {a_sim}"));
    }
    Ok(report)
}

/// Sup-norm distance between the pure-death chain started at
/// `Poisson(lambda)` after `j` steps and `Poisson(lambda a^j)`, worst over
/// `j <= 10`.
pub fn check_death_marginal(params: InarParams, tail_budget: f64) -> Result<CheckReport> {
    let spec = poisson_death_chain(params.lambda, params.a, tail_budget)?;
    let mut worst: f64 = 0.0;
    for j in 0..=10 {
        let target = poisson_pmf(params.lambda * params.a.powi(j), tail_budget)?;
        worst = worst.max(marginal_at(&spec, j as usize).sup_distance(&target));
    }
    Ok(CheckReport::new(
        "death-chain-marginal",
        "death-poisson",
        params_json(params),
        worst,
        1e-12,
        Comparison::AtMost,
        Provenance::Exact,
    )
    .with_budget(tail_budget))
}

/// Applies the corrupted-innovation control in place.
fn corrupt_innovations(decompositions: &mut [InnovationDecomposition], mean: f64) {
    for d in decompositions {
        for k in 1..d.x.len() {
            d.v[k] += u32::from(d.x[k - 1] as f64 > mean);
            d.x[k] = d.u[k] + d.v[k];
        }
    }
}

fn simulated_ensemble(
    construction: &str,
    params: InarParams,
    config: &McConfig,
    seed: SeedSpec,
) -> Result<(PathEnsemble, Vec<InnovationDecomposition>)> {
    let (mut ensemble, mut decompositions) = if construction == "direct" {
        simulate_inar_direct(params, config.path_length, config.n_paths, seed)?
    } else {
        let mut sim = params;
        if config.control == Some(Control::PerturbedSuperposition) {
            sim = InarParams::new(params.a + 0.1, params.lambda)?;
        }
        let sup = SuperpositionConfig::for_params(sim, config.truncation_budget)?;
        simulate_inar_superposition(sim, sup, config.path_length, config.n_paths, seed)?
    };
    if config.control == Some(Control::CorruptInnovation) {
        corrupt_innovations(&mut decompositions, params.stationary_mean());
        let paths = decompositions.iter().map(|d| d.x.clone()).collect();
        ensemble = PathEnsemble::from_paths(paths, ensemble.seed, ensemble.construction, ensemble.params)?;
    }
    Ok((ensemble, decompositions))
}

/// Monte Carlo checks of one simulated construction, in canonical order.
fn simulated_checks(construction: &str, params: InarParams, config: &McConfig, alpha: f64) -> Vec<CheckReport> {
    let pj = params_json(params);
    let seed = derive_seed(config.seed, &format!("{construction}/{}/{}", params.a, params.lambda));
    let names = ["stationary-marginal", "innovation-independence", "thinning-conditional"];
    let (ensemble, decompositions) = match simulated_ensemble(construction, params, config, seed) {
        Ok(sim) => sim,
        Err(e) => {
            return names
                .iter()
                .map(|n| CheckReport::errored(n, construction, pj.clone(), Provenance::MonteCarlo, &e).with_seed(seed))
                .collect()
        }
    };
    let expected_mean = if config.control == Some(Control::WrongMean) {
        params.lambda
    } else {
        params.stationary_mean()
    };
    let marginal = capture(names[0], construction, &pj, Provenance::MonteCarlo, || {
        let mut r = check_stationary_marginal(&ensemble, &poisson_pmf(expected_mean, config.truncation_budget)?, alpha);
        r.params = pj.clone();
        Ok(r)
    });
    let independence = check_innovation_independence(&decompositions, construction, pj.clone(), alpha);
    let thinning = capture(names[2], construction, &pj, Provenance::MonteCarlo, || {
        check_thinning_conditional(&decompositions, construction, params, alpha)
    });
    [marginal, independence, thinning]
        .into_iter()
        .map(|r| r.with_seed(seed))
        .collect()
}

/// Every check at one parameter point, in canonical order.
fn grid_point_checks(params: InarParams, config: &McConfig, alpha: f64) -> Vec<CheckReport> {
    let pj = params_json(params);
    let budget = config.truncation_budget;
    let exact_marginal = capture("stationary-marginal", "inar-kernel", &pj, Provenance::Exact, || {
        check_stationary_marginal_exact(params, budget)
    });
    let direct_law = direct_decomposition_law(params, budget);
    let sup_law =
        SuperpositionConfig::for_params(params, budget).and_then(|c| superposition_decomposition_law(params, c));
    let direct_mc = simulated_checks("direct", params, config, alpha);
    let sup_mc = simulated_checks("superposition", params, config, alpha);

    let exact_or = |check: &str,
                    construction: &str,
                    law: &Result<DecompositionLaw>,
                    f: &dyn Fn(&DecompositionLaw) -> Result<CheckReport>| {
        match law {
            Ok(l) => capture(check, construction, &pj, Provenance::Exact, || f(l)),
            Err(e) => CheckReport::errored(check, construction, pj.clone(), Provenance::Exact, e),
        }
    };
    let thinning_exact = exact_or("thinning-conditional", "superposition", &sup_law, &|l| {
        Ok(check_thinning_conditional_exact(l))
    });
    let equivalence_exact = match (&direct_law, &sup_law) {
        (Ok(d), Ok(s)) => check_construction_equivalence_exact(d, s),
        (Err(e), _) | (_, Err(e)) => CheckReport::errored(
            "construction-equivalence",
            "superposition",
            pj.clone(),
            Provenance::Exact,
            e,
        ),
    };
    let a_sim = if config.control == Some(Control::PerturbedSuperposition) {
        params.a + 0.1
    } else {
        params.a
    };
    let eq_seed = derive_seed(config.seed, &format!("equivalence/{}/{}", params.a, params.lambda));
    let equivalence_mc = capture(
        "construction-equivalence",
        "superposition",
        &pj,
        Provenance::MonteCarlo,
        || {
            check_construction_equivalence(
                params,
                a_sim,
                config.equivalence_width,
                config.equivalence_paths,
                budget,
                eq_seed,
                alpha,
            )
        },
    );
    let markov_direct = exact_or("markov-property", "direct", &direct_law, &check_markov_property);
    let markov_sup = exact_or("markov-property", "superposition", &sup_law, &check_markov_property);
    let death = capture("death-chain-marginal", "death-poisson", &pj, Provenance::Exact, || {
        check_death_marginal(params, budget)
    });

    let [d_marg, d_ind, d_thin]: [CheckReport; 3] = direct_mc.try_into().expect("three reports");
    let [s_marg, s_ind, s_thin]: [CheckReport; 3] = sup_mc.try_into().expect("three reports");
    vec![
        exact_marginal,
        d_marg,
        s_marg,
        d_ind,
        s_ind,
        d_thin,
        s_thin,
        thinning_exact,
        equivalence_exact,
        equivalence_mc,
        markov_direct,
        markov_sup,
        death,
    ]
}

/// Runs every grid-point check. Deterministic given the configuration.
pub fn run_all(config: &McConfig) -> Result<Vec<CheckReport>> {
    config.validate()?;
    let alpha = config.check_significance();
    let grid: Vec<InarParams> = config
        .grid()
        .into_iter()
        .map(|(a, l)| InarParams::new(a, l))
        .collect::<Result<_>>()?;
    let per_point: Vec<Vec<CheckReport>> = grid.par_iter().map(|&p| grid_point_checks(p, config, alpha)).collect();
    let mut checks: Vec<CheckReport> = per_point.into_iter().flatten().collect();
    if config.control == Some(Control::NonMarkov) {
        checks.push(capture(
            "markov-property",
            "non-markov-control",
            &Value::Null,
            Provenance::Exact,
            || {
                check_window_markov(
                    &non_markov_control_law()?,
                    "non-markov-control",
                    json!({ "p_repeat": 0.8 }),
                )
            },
        ));
    }
    Ok(checks)
}

/// [`run_all`] plus, when enabled, the exact dependence-bound checks.
pub fn run_campaign(config: &McConfig) -> Result<CampaignReport> {
    let mut checks = run_all(config)?;
    if config.property_checks {
        checks.extend(property_checks(config));
    }
    let mut notes = vec![format!(
        "family-wise significance {} split over {} Monte Carlo checks: {:e} each",
        config.significance,
        MC_CHECKS_PER_POINT * config.grid().len(),
        config.check_significance()
    )];
    if config.significance != DEFAULT_SIGNIFICANCE {
        notes.push(format!(
            "non-default significance {} (default {DEFAULT_SIGNIFICANCE}); false failures become more likely",
            config.significance
        ));
    }
    if let Some(c) = config.control {
        notes.push(format!(
            "negative control enabled: {}",
            serde_json::to_value(c)?.as_str().unwrap_or("")
        ));
    }
    let summary = Summary::of(&checks);
    Ok(CampaignReport {
        config: config.clone(),
        notes,
        checks,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> McConfig {
        McConfig {
            n_paths: MIN_PATHS,
            path_length: 8,
            grid_a: vec![0.5],
            grid_lambda: vec![1.0],
            equivalence_paths: 20_000,
            property_checks: false,
            ..McConfig::default()
        }
    }

    fn find<'a>(checks: &'a [CheckReport], check: &str, construction: &str, provenance: Provenance) -> &'a CheckReport {
        checks
            .iter()
            .find(|c| c.check == check && c.construction == construction && c.provenance == provenance)
            .unwrap_or_else(|| panic!("no {check} [{construction}] report"))
    }

    #[test]
    fn config_defaults_and_validation() {
        let d = McConfig::default();
        assert!(d.validate().is_ok());
        assert_eq!(d.grid().len(), 9);
        assert!((d.check_significance() - 0.01 / 63.0).abs() < 1e-18);
        let parsed: McConfig = serde_json::from_str(r#"{"n_paths": 12000, "control": "wrong-mean"}"#).unwrap();
        assert_eq!(parsed.n_paths, 12_000);
        assert_eq!(parsed.control, Some(Control::WrongMean));
        assert_eq!(parsed.path_length, d.path_length);
        assert!(serde_json::from_str::<McConfig>(r#"{"paths": 1}"#).is_err());
        for bad in [
            McConfig {
                n_paths: 9_999,
                ..d.clone()
            },
            McConfig {
                significance: 1.0,
                ..d.clone()
            },
            McConfig {
                equivalence_width: 5,
                ..d.clone()
            },
            McConfig {
                grid_a: vec![1.2],
                ..d.clone()
            },
            McConfig {
                grid_lambda: vec![],
                ..d.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
            assert!(run_all(&bad).is_err());
        }
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let s = SeedSpec::new(7, 3);
        assert_eq!(derive_seed(s, "x"), derive_seed(s, "x"));
        assert_ne!(derive_seed(s, "x"), derive_seed(s, "y"));
        assert_ne!(derive_seed(s, "x"), derive_seed(SeedSpec::new(8, 3), "x"));
        assert_eq!(derive_seed(s, "x").stream_index, 3);
    }

    #[test]
    fn comparisons_and_errored_reports() {
        assert!(Comparison::AtMost.holds(1.0, 1.0) && !Comparison::AtMost.holds(1.1, 1.0));
        assert!(Comparison::AtLeast.holds(0.5, 0.1) && !Comparison::AtLeast.holds(f64::NAN, 0.0));
        let r = CheckReport::errored("c", "k", Value::Null, Provenance::Exact, "boom");
        assert!(!r.pass && r.is_consistent());
        let s = to_string_pretty(&r).unwrap();
        assert!(s.contains("\"statistic\": null") && s.contains("error: boom"), "{s}");
    }

    #[test]
    fn non_markov_control_has_hand_computed_residual() {
        // Given X_1, P(X_0 = x, X_2 = x) = 0.4 while the product is 0.25.
        let law = non_markov_control_law().unwrap();
        let r = check_window_markov(&law, "control", Value::Null).unwrap();
        assert!((r.statistic - 0.15).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn poisson_split_is_exact() {
        let checks = poisson_split_checks_for_test();
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| c.pass), "{checks:#?}");
    }

    fn poisson_split_checks_for_test() -> Vec<CheckReport> {
        property_checks(&McConfig {
            grid_a: vec![0.5],
            grid_lambda: vec![1.0],
            ..McConfig::default()
        })
        .into_iter()
        .filter(|c| c.construction == "poisson-split")
        .collect()
    }

    #[test]
    fn small_campaign_passes_and_is_deterministic() {
        let config = small_config();
        let a = run_campaign(&config).unwrap();
        assert!(a.summary.all_pass, "{:#?}", a.summary.failing);
        assert_eq!(a.checks.len(), 13);
        assert!(a.checks.iter().all(CheckReport::is_consistent));
        let b = run_campaign(&config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

        // exact checks do not depend on the seed; Monte Carlo ones do
        let other = run_all(&McConfig {
            seed: SeedSpec::new(99, 1),
            ..config
        })
        .unwrap();
        for (x, y) in a.checks.iter().zip(&other) {
            match x.provenance {
                Provenance::Exact => {
                    assert_eq!(x.statistic.to_bits(), y.statistic.to_bits(), "{}", x.label());
                    assert!(x.seed.is_none());
                }
                Provenance::MonteCarlo => assert_ne!(x.seed, y.seed),
            }
        }
    }

    #[test]
    fn negative_controls_fail() {
        for (control, check, construction) in [
            (Control::CorruptInnovation, "innovation-independence", "direct"),
            (Control::CorruptInnovation, "innovation-independence", "superposition"),
            (Control::WrongMean, "stationary-marginal", "direct"),
            (
                Control::PerturbedSuperposition,
                "construction-equivalence",
                "superposition",
            ),
            (Control::PerturbedSuperposition, "stationary-marginal", "superposition"),
        ] {
            let checks = run_all(&McConfig {
                control: Some(control),
                ..small_config()
            })
            .unwrap();
            let r = find(&checks, check, construction, Provenance::MonteCarlo);
            assert!(!r.pass, "{control:?} did not break {check}: {r:?}");
            // exact checks are untouched by the controls
            assert!(checks
                .iter()
                .filter(|c| c.provenance == Provenance::Exact)
                .all(|c| c.pass));
        }
        let checks = run_all(&McConfig {
            control: Some(Control::NonMarkov),
            ..small_config()
        })
        .unwrap();
        let r = find(&checks, "markov-property", "non-markov-control", Provenance::Exact);
        assert!(!r.pass && r.statistic >= 1e-3);
    }

    #[test]
    fn corrupted_innovations_stay_consistent() {
        let (_, mut d) = simulate_inar_direct(InarParams::new(0.5, 1.0).unwrap(), 6, 50, SeedSpec::new(1, 0)).unwrap();
        let before = d.clone();
        corrupt_innovations(&mut d, 2.0);
        assert!(d
            .iter()
            .all(|p| p.x.iter().zip(&p.u).zip(&p.v).all(|((x, u), v)| *x == u + v)));
        assert!(d.iter().zip(&before).any(|(p, q)| p.v != q.v));
    }

    #[test]
    fn fluctuation_threshold_by_hand() {
        // Two atoms of mass 1/2 with n = 100: 0.5 * 2 * 0.05 + sqrt(ln 100 / 200).
        let law = WindowLaw::from_atoms(vec![0], &[(vec![0], 0.5), (vec![1], 0.5)]).unwrap();
        let t = fluctuation_threshold(&law, 100, 0.01, 0.0);
        assert!((t - (0.05 + (100f64.ln() / 200.0).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn thinning_check_notes_skipped_strata() {
        let params = InarParams::new(0.3, 0.5).unwrap();
        let (_, d) = simulate_inar_direct(params, 10, 2_000, SeedSpec::new(4, 0)).unwrap();
        let r = check_thinning_conditional(&d, "direct", params, 0.01).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.notes.iter().any(|n| n.contains("skipped")));
    }

    mod props {
        use super::*;
        use crate::json::to_string_compact;
        use proptest::prelude::*;

        fn arb_stat() -> impl Strategy<Value = f64> {
            prop_oneof![8 => 0.0f64..1.0, 1 => Just(f64::NAN), 1 => Just(0.5)]
        }

        proptest! {
            #[test]
            fn pass_flag_is_recomputable(stat in arb_stat(), thr in 0.0f64..1.0, at_least in any::<bool>()) {
                let cmp = if at_least { Comparison::AtLeast } else { Comparison::AtMost };
                let r = CheckReport::new("c", "x", Value::Null, stat, thr, cmp, Provenance::Exact);
                prop_assert!(r.is_consistent());
                let v: Value = serde_json::from_str(&to_string_compact(&r).unwrap()).unwrap();
                let (s, t) = (v["statistic"].as_f64(), v["threshold"].as_f64().unwrap());
                let recomputed = s.is_some_and(|s| if at_least { s >= t } else { s <= t });
                prop_assert_eq!(v["pass"].as_bool().unwrap(), recomputed);
            }
        }
    }
}
