//! Exact checks of the dependence bounds and distributional facts the
//! mixing rate rests on.

use rayon::prelude::*;
use serde_json::json;

use super::{capture, CheckReport, Comparison, McConfig, Provenance, EXACT_TOLERANCE};
use crate::chains::{
    binomial_death_chain, inar_kernel, indicator_chain_spec, poisson_death_chain, window_joint_pmf, InarParams,
    WindowLaw,
};
use crate::dependence::markov_triplet_residual;
use crate::dist::{binomial_pmf, poisson_pmf, total_variation, Pmf};
use crate::error::{invalid, Result};
use crate::mixing::{
    fit_decay_rate, gap_for_epsilon, rho_markov, verify_absorbing_lambda_bound, verify_chain_bound, BoundStatus,
    DeltaBound,
};

/// Gap epsilons of the window-bound checks.
const WINDOW_EPSILONS: [f64; 2] = [0.3, 0.5];
/// Thinning parameter of the window-bound checks; small enough that the
/// certified gap fits inside the windows.
const WINDOW_A: f64 = 0.2;
const ABSORBING_EPSILONS: [f64; 3] = [0.01, 0.05, 1.0 / 9.0];
/// Largest gap of the decay fit.
const DECAY_HORIZON: usize = 6;
const DECAY_TOLERANCE: f64 = 0.01;

/// Joint law of `(Y_1, Y_2, Y_1 + Y_2, Z_1 + Z_2)` for independent
/// `Y_i ~ Poisson(mu_i)` and `Z_i | Y_i ~ Binomial(Y_i, a)`.
pub fn poisson_split_law(mu: [f64; 2], a: f64, tail_budget: f64) -> Result<WindowLaw> {
    let p1 = poisson_pmf(mu[0], tail_budget / 2.0)?;
    let p2 = poisson_pmf(mu[1], tail_budget / 2.0)?;
    let mut atoms = Vec::new();
    for (y1, &q1) in p1.probs().iter().enumerate() {
        for (y2, &q2) in p2.probs().iter().enumerate() {
            // Z_1 + Z_2 given (y1, y2) is Binomial(y1 + y2, a)
            let z = binomial_pmf(y1 + y2, a)?;
            for (s, &qz) in z.probs().iter().enumerate() {
                let t = vec![y1 as u32, y2 as u32, (y1 + y2) as u32, s as u32];
                atoms.push((t, q1 * q2 * qz));
            }
        }
    }
    WindowLaw::from_atoms(vec![0, 1, 2, 3], &atoms)
}

/// Law of three binary states where `X_0, X_1` are fair and independent
/// and `X_2` copies `X_0` with probability 0.8, so `X_2` depends on the
/// past beyond `X_1`.
pub fn non_markov_control_law() -> Result<WindowLaw> {
    let mut atoms = Vec::new();
    for x0 in 0..2u32 {
        for x1 in 0..2u32 {
            atoms.push((vec![x0, x1, x0], 0.25 * 0.8));
            atoms.push((vec![x0, x1, 1 - x0], 0.25 * 0.2));
        }
    }
    WindowLaw::from_atoms(vec![0, 1, 2], &atoms)
}

fn poisson_split_checks(tail_budget: f64) -> Vec<CheckReport> {
    let (mu, a) = ([0.7, 1.3], 0.4);
    let pj = json!({ "mu": mu, "a": a });
    let law = match poisson_split_law(mu, a, tail_budget) {
        Ok(l) => l,
        Err(e) => {
            return ["markov-property", "thinning-conditional", "stationary-marginal"]
                .iter()
                .map(|c| CheckReport::errored(c, "poisson-split", pj.clone(), Provenance::Exact, &e))
                .collect()
        }
    };
    let markov = capture("markov-property", "poisson-split", &pj, Provenance::Exact, || {
        let r = markov_triplet_residual(&law.triplet(&[0, 1], &[2], &[3])?);
        Ok(CheckReport::new(
            "markov-property",
            "poisson-split",
            pj.clone(),
            r,
            EXACT_TOLERANCE,
            Comparison::AtMost,
            Provenance::Exact,
        ))
    });
    let thinning = capture("thinning-conditional", "poisson-split", &pj, Provenance::Exact, || {
        let joint = law.project(&[2, 3])?;
        let mut worst: f64 = 0.0;
        let ymax = joint.atoms().map(|(t, _)| t[0]).max().unwrap_or(0);
        for y in 0..=ymax {
            let row: Vec<f64> = (0..=y).map(|z| joint.prob(&[y, z])).collect();
            let mass: f64 = row.iter().sum();
            if mass <= crate::dependence::CONDITIONING_FLOOR {
                continue;
            }
            let conditional = Pmf::new(row.iter().map(|p| p / mass).collect(), 0.0)?;
            worst = worst.max(total_variation(&conditional, &binomial_pmf(y as usize, a)?));
        }
        Ok(CheckReport::new(
            "thinning-conditional",
            "poisson-split",
            pj.clone(),
            worst,
            EXACT_TOLERANCE,
            Comparison::AtMost,
            Provenance::Exact,
        ))
    });
    let sum = capture("stationary-marginal", "poisson-split", &pj, Provenance::Exact, || {
        let y = law.marginal(2)?;
        let head = Pmf::new(y, law.truncation_error())?;
        let tv = total_variation(&head, &poisson_pmf(mu[0] + mu[1], tail_budget)?);
        Ok(CheckReport::new(
            "stationary-marginal",
            "poisson-split",
            pj.clone(),
            tv,
            EXACT_TOLERANCE,
            Comparison::AtMost,
            Provenance::Exact,
        )
        .with_budget(law.truncation_error())
        .note("law of Y_1 + Y_2 against Poisson(mu_1 + mu_2)"))
    });
    vec![markov, thinning, sum]
}

fn gap_certificate_check() -> CheckReport {
    let id = DeltaBound::identity();
    let epsilons: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let pj = json!({ "a": [0.2, 0.5, 0.9], "epsilon": "0.01..=1.00 step 0.01", "delta_bound": id.name() });
    capture("gap-certificate", "identity", &pj, Provenance::Exact, || {
        let mut failures = 0usize;
        let mut monotone = true;
        for a in [0.2, 0.5, 0.9] {
            let mut prev = usize::MAX;
            for &e in &epsilons {
                let c = gap_for_epsilon(a, e, &id)?;
                failures += usize::from(!c.holds());
                monotone &= c.m <= prev;
                prev = c.m;
            }
        }
        failures += usize::from(!monotone);
        Ok(CheckReport::new(
            "gap-certificate",
            "identity",
            pj.clone(),
            failures as f64,
            0.0,
            Comparison::AtMost,
            Provenance::Exact,
        )
        .note("statistic counts certificates breaking their defining relations, plus one if m rises with epsilon"))
    })
}

fn window_bound_checks(tail_budget: f64) -> Vec<CheckReport> {
    let id = DeltaBound::identity();
    let jobs: Vec<(&str, f64)> = ["indicator", "death-binomial", "death-poisson"]
        .into_iter()
        .flat_map(|c| WINDOW_EPSILONS.map(|e| (c, e)))
        .collect();
    jobs.par_iter()
        .map(|&(chain, eps)| {
            let pj = json!({ "a": WINDOW_A, "epsilon": eps });
            capture("window-bound", chain, &pj, Provenance::Exact, || {
                let (spec, width, cap) = match chain {
                    "indicator" => (indicator_chain_spec(0.6, WINDOW_A)?, 6, 1),
                    "death-binomial" => (binomial_death_chain(4, 0.5, WINDOW_A)?, 4, 4),
                    _ => (poisson_death_chain(1.0, WINDOW_A, tail_budget)?, 4, 30),
                };
                let r = verify_chain_bound(&spec, WINDOW_A, eps, &id, width, cap)?;
                let mut params = spec.params.clone();
                params["epsilon"] = json!(eps);
                params["width"] = json!(width);
                params["cap"] = json!(cap);
                params["m"] = json!(r.certificate.m);
                let mut report = CheckReport::new(
                    "window-bound",
                    chain,
                    params,
                    r.value,
                    eps,
                    Comparison::AtMost,
                    Provenance::Exact,
                )
                .with_budget(r.truncation_error)
                .note(format!("{} window pairs, margin {:e}", r.pair_count, r.margin));
                if r.vacuous {
                    report = report.note("vacuous: no pair fits in the window");
                }
                Ok(report)
            })
        })
        .collect()
}

fn absorbing_checks() -> Vec<CheckReport> {
    ABSORBING_EPSILONS
        .iter()
        .map(|&eps| {
            let pj = json!({ "epsilon": eps, "lengths": [2, 6] });
            capture("absorbing-lambda-bound", "indicator", &pj, Provenance::Exact, || {
                let spec = indicator_chain_spec(1.0, eps)?;
                let mut worst: f64 = 0.0;
                let mut margins = Vec::new();
                for len in 2..=6 {
                    let law = window_joint_pmf(&spec, &(0..len).collect::<Vec<_>>(), 1)?;
                    let r = verify_absorbing_lambda_bound(&law, eps)?;
                    match (r.status, r.value) {
                        (BoundStatus::Inapplicable, _) | (_, None) => {
                            return Err(invalid(format!("hypotheses fail: {:?}", r.hypothesis_failures)))
                        }
                        (_, Some(v)) => {
                            worst = worst.max(v);
                            margins.push(r.bound - v);
                        }
                    }
                }
                Ok(CheckReport::new(
                    "absorbing-lambda-bound",
                    "indicator",
                    pj.clone(),
                    worst,
                    3.0 * eps.sqrt(),
                    Comparison::AtMost,
                    Provenance::Exact,
                )
                .note(format!("margins by length 2..=6: {margins:?}")))
            })
        })
        .collect()
}

/// Fitted decay rate of the INAR Markov coefficient over `n = 1..=6`.
pub fn inar_decay_rate(params: InarParams, tail_budget: f64) -> Result<f64> {
    let spec = inar_kernel(params, tail_budget)?;
    let pts = (1..=DECAY_HORIZON)
        .into_par_iter()
        .map(|n| Ok((n as f64, rho_markov(&spec, n, spec.state_cap)?.value)))
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_decay_rate(&pts)?.rate)
}

fn decay_checks(config: &McConfig) -> Vec<CheckReport> {
    config
        .grid_a
        .par_iter()
        .flat_map_iter(|&a| {
            let pj = json!({ "a": a, "lambda": config.grid_lambda });
            let rates: Result<Vec<f64>> = config
                .grid_lambda
                .iter()
                .map(|&l| inar_decay_rate(InarParams::new(a, l)?, config.truncation_budget))
                .collect();
            let rates = match rates {
                Ok(r) => r,
                Err(e) => {
                    return vec![
                        CheckReport::errored("rho-decay-rate", "inar-kernel", pj.clone(), Provenance::Exact, &e),
                        CheckReport::errored("rho-decay-agreement", "inar-kernel", pj, Provenance::Exact, e),
                    ]
                }
            };
            let off = rates.iter().map(|r| (r - a).abs()).fold(0.0, f64::max);
            let hi = rates.iter().copied().fold(f64::MIN, f64::max);
            let lo = rates.iter().copied().fold(f64::MAX, f64::min);
            let note = format!("fitted rates by lambda: {rates:?}");
            vec![
                CheckReport::new(
                    "rho-decay-rate",
                    "inar-kernel",
                    pj.clone(),
                    off,
                    DECAY_TOLERANCE,
                    Comparison::AtMost,
                    Provenance::Exact,
                )
                .note(note.clone()),
                CheckReport::new(
                    "rho-decay-agreement",
                    "inar-kernel",
                    pj,
                    hi - lo,
                    DECAY_TOLERANCE,
                    Comparison::AtMost,
                    Provenance::Exact,
                )
                .note(note),
            ]
        })
        .collect()
}

/// Exact dependence-bound checks, in canonical order.
pub fn property_checks(config: &McConfig) -> Vec<CheckReport> {
    let mut out = poisson_split_checks(config.truncation_budget);
    out.push(gap_certificate_check());
    out.extend(window_bound_checks(config.truncation_budget));
    out.extend(absorbing_checks());
    out.extend(decay_checks(config));
    out
}
