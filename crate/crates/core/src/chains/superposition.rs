//! The stationary INAR(1) chain as a superposition of independent
//! Poisson-start death chains: `X_k = sum_{j>=0} Y^{(k-j)}_j`, with
//! `U_k = sum_{j>=1} Y^{(k-j)}_j` and `V_k = Y^{(k)}_0`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::simulate::{path_rngs, thin_draw};
use super::window::{window_joint_pmf, WindowLaw};
use super::{inar_kernel, poisson_death_chain, InarParams, InnovationDecomposition, MarkovChainSpec, PathEnsemble};
use crate::dependence::CONDITIONING_FLOOR;
use crate::dist::{binomial_pmf, poisson_pmf, thin, Sampler, SeedSpec, DEFAULT_TAIL_BUDGET};
use crate::error::{Error, Result};

/// Truncation of the infinite superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionConfig {
    /// Largest age `j` kept in the sum.
    pub depth: usize,
    /// Number of chains started before the first observed index.
    pub warmup: usize,
    pub tail_budget: f64,
}

/// Mean mass of the chains dropped at depth `depth`: `lambda a^depth / (1 - a)`.
pub fn neglected_mass(params: InarParams, depth: usize) -> f64 {
    params.lambda * params.a.powi(depth as i32) / (1.0 - params.a)
}

impl SuperpositionConfig {
    /// Smallest depth meeting the budget, with warmup equal to the depth.
    pub fn for_params(params: InarParams, tail_budget: f64) -> Result<Self> {
        if !(tail_budget > 0.0 && tail_budget < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tail_budget = {tail_budget} must lie in (0, 1)"
            )));
        }
        let mut depth = 1;
        while neglected_mass(params, depth) > tail_budget {
            depth += 1;
        }
        Ok(Self {
            depth,
            warmup: depth,
            tail_budget,
        })
    }

    pub fn validate(&self, params: InarParams) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be positive".into()));
        }
        let neglected = neglected_mass(params, self.depth);
        if neglected > self.tail_budget {
            return Err(Error::InvalidConfig(format!(
                "depth {} neglects mean mass {neglected:e} above tail budget {:e}",
                self.depth, self.tail_budget
            )));
        }
        if self.warmup < self.depth {
            return Err(Error::InvalidConfig(format!(
                "warmup {} is shorter than depth {}; chains of age up to the depth would be missing",
                self.warmup, self.depth
            )));
        }
        Ok(())
    }
}

/// Simulates chains `Y^{(l)}` for `l` in `[-warmup, length - 1]` and sums
/// them along diagonals up to the configured depth.
pub fn simulate_inar_superposition(
    params: InarParams,
    config: SuperpositionConfig,
    length: usize,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<(PathEnsemble, Vec<InnovationDecomposition>)> {
    let params = InarParams::new(params.a, params.lambda)?;
    config.validate(params)?;
    if length == 0 || n_paths == 0 {
        return Err(crate::error::invalid("length and n_paths must be positive"));
    }
    let start = Sampler::new(&poisson_pmf(params.lambda, DEFAULT_TAIL_BUDGET)?)?;
    let decompositions: Vec<InnovationDecomposition> = path_rngs(seed, n_paths)
        .map(|mut rng| {
            let mut x = vec![0u32; length];
            let mut u = vec![0u32; length];
            let mut v = vec![0u32; length];
            for l in -(config.warmup as i64)..length as i64 {
                let mut y = start.draw(&mut rng);
                for j in 0..=config.depth as i64 {
                    let k = l + j;
                    if y == 0 || k >= length as i64 {
                        break;
                    }
                    if k >= 0 {
                        let k = k as usize;
                        x[k] += y;
                        if j == 0 {
                            v[k] += y;
                        } else {
                            u[k] += y;
                        }
                    }
                    y = thin_draw(&mut rng, y, params.a);
                }
            }
            InnovationDecomposition { x, u, v }
        })
        .collect();
    let paths = decompositions.iter().map(|d| d.x.clone()).collect();
    let mut meta = params.to_json();
    meta["depth"] = json!(config.depth);
    meta["warmup"] = json!(config.warmup);
    meta["tail_budget"] = json!(config.tail_budget);
    let ensemble = PathEnsemble::from_paths(paths, seed, "superposition", meta)?;
    Ok((ensemble, decompositions))
}

/// Exact laws of the first few decomposition variables.
///
/// `innovation` has coordinates `(U_0, V_0, X_0, U_1)` and `observation`
/// has `(X_0, X_1, X_2)`. Both are sub-stochastic; their truncation errors
/// include the mass of any neglected chains.
#[derive(Debug, Clone)]
pub struct DecompositionLaw {
    pub construction: String,
    pub params: InarParams,
    pub innovation: WindowLaw,
    pub observation: WindowLaw,
}

impl DecompositionLaw {
    /// `((U_0, V_0), X_0, U_1)`: innovations up to time 0, the state at 0,
    /// and the survivors at time 1.
    pub fn innovation_triplet(&self) -> Result<crate::dependence::TripletPmf> {
        self.innovation.triplet(&[0, 1], &[2], &[3])
    }

    /// `((X_0, X_1), X_1, X_2)`.
    pub fn observation_triplet(&self) -> Result<crate::dependence::TripletPmf> {
        self.observation.triplet(&[0, 1], &[1], &[2])
    }

    /// Largest total variation between the law of `U_1` given `X_0 = x` and
    /// `Binomial(x, a)`, over states `x` with mass above
    /// [`CONDITIONING_FLOOR`].
    pub fn thinning_error(&self) -> f64 {
        let mut by_x: HashMap<u32, Vec<f64>> = HashMap::new();
        for (t, p) in self.innovation.atoms() {
            let row = by_x.entry(t[2]).or_insert_with(|| vec![0.0; t[2] as usize + 1]);
            row[t[3] as usize] += p;
        }
        by_x.into_iter()
            .filter_map(|(x, row)| {
                let total: f64 = row.iter().sum();
                if total <= CONDITIONING_FLOOR {
                    return None;
                }
                let binom = binomial_pmf(x as usize, self.params.a).expect("a validated");
                Some(
                    0.5 * row
                        .iter()
                        .zip(binom.probs())
                        .map(|(p, q)| (p / total - q).abs())
                        .sum::<f64>(),
                )
            })
            .fold(0.0, f64::max)
    }
}

/// Atoms lighter than this are dropped while summing chains; they sit far
/// below [`CONDITIONING_FLOOR`] and only inflate the support.
const PRUNE_MASS: f64 = 1e-60;

/// Dense sub-stochastic law on a box of `N`-tuples.
struct Dense<const N: usize> {
    dims: [usize; N],
    data: Vec<f64>,
}

impl<const N: usize> Dense<N> {
    fn point_at_zero() -> Self {
        Self {
            dims: [1; N],
            data: vec![1.0],
        }
    }

    fn offset(dims: &[usize; N], key: &[u32; N]) -> usize {
        key.iter().zip(dims).fold(0, |acc, (&k, &d)| acc * d + k as usize)
    }

    fn atoms(&self) -> impl Iterator<Item = ([u32; N], f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(mut i, &p)| {
                let mut key = [0u32; N];
                for c in (0..N).rev() {
                    key[c] = (i % self.dims[c]) as u32;
                    i /= self.dims[c];
                }
                (key, p)
            })
    }

    /// Law of the sum of an independent draw from `self` and from `law`,
    /// whose atoms are mapped into the box by `place`.
    fn add_independent(&self, law: &WindowLaw, place: impl Fn(&[u32]) -> [u32; N]) -> Self {
        let placed: Vec<([u32; N], f64)> = law.atoms().map(|(t, p)| (place(t), p)).collect();
        let mut dims = self.dims;
        for (k, _) in &placed {
            for c in 0..N {
                dims[c] = dims[c].max(self.dims[c] + k[c] as usize);
            }
        }
        let mut data = vec![0.0; dims.iter().product()];
        for (key, q) in self.atoms() {
            for (add, p) in &placed {
                let mut k = key;
                for c in 0..N {
                    k[c] += add[c];
                }
                data[Self::offset(&dims, &k)] += p * q;
            }
        }
        for p in &mut data {
            if *p < PRUNE_MASS {
                *p = 0.0;
            }
        }
        Self { dims, data }
    }

    fn into_window(self, extra_error: f64) -> Result<WindowLaw> {
        let atoms: Vec<(Vec<u32>, f64)> = self.atoms().map(|(k, p)| (k.to_vec(), p)).collect();
        let law = WindowLaw::from_atoms((0..N).collect(), &atoms)?;
        Ok(law.with_extra_error(extra_error))
    }
}

/// Exact decomposition laws from the superposition, by summing exact
/// death-chain window laws. Chains older than the configured depth are
/// dropped and their mass is charged to the truncation error.
pub fn superposition_decomposition_law(params: InarParams, config: SuperpositionConfig) -> Result<DecompositionLaw> {
    let params = InarParams::new(params.a, params.lambda)?;
    config.validate(params)?;
    let chain = poisson_death_chain(params.lambda, params.a, config.tail_budget)?;
    let cap = chain.state_cap;
    let window = |idx: &[usize]| window_joint_pmf(&chain, idx, cap);
    let dropped = neglected_mass(params, config.depth + 1);

    // A chain of age i is restarted from its own marginal at age i, cut to
    // a share of the budget; cutting only the starting law leaves every
    // later transition exact.
    let share = config.tail_budget / config.depth as f64;
    let mut older2 = Dense::<2>::point_at_zero();
    let mut older3 = Dense::<3>::point_at_zero();
    let mut marginal = poisson_pmf(params.lambda, 1e-300)?;
    let mut aged = Vec::with_capacity(config.depth);
    for _ in 1..=config.depth {
        marginal = chain.kernel.push(&marginal);
        let start = marginal.truncated_to_budget(share);
        let spec = MarkovChainSpec {
            state_cap: start.max_state(),
            initial: start,
            ..chain.clone()
        };
        aged.push(window_joint_pmf(&spec, &[0, 1, 2], spec.state_cap)?);
    }
    // oldest first, so the accumulator stays small for as long as possible
    for w in aged.iter().rev() {
        older3 = older3.add_independent(w, |t| [t[0], t[1], t[2]]);
        older2 = older2.add_independent(&w.project(&[0, 1])?, |t| [t[0], t[1]]);
    }

    let fresh = window(&[0, 1, 2])?;
    let observation = older3
        .add_independent(&fresh, |t| [t[0], t[1], t[2]])
        .add_independent(&fresh.project(&[0, 1])?, |t| [0, t[0], t[1]])
        .add_independent(&fresh.project(&[0])?, |t| [0, 0, t[0]]);

    let fresh2 = fresh.project(&[0, 1])?;
    let mut innovation: HashMap<[u32; 4], f64> = HashMap::new();
    for (c, pc) in fresh2.atoms() {
        for (w, pw) in older2.atoms() {
            let key = [w[0], c[0], w[0] + c[0], w[1] + c[1]];
            *innovation.entry(key).or_insert(0.0) += pc * pw;
        }
    }

    Ok(DecompositionLaw {
        construction: "superposition".into(),
        params,
        innovation: WindowLaw::from_atoms(
            (0..4).collect(),
            &innovation
                .into_iter()
                .filter(|&(_, p)| p >= PRUNE_MASS)
                .map(|(k, p)| (k.to_vec(), p))
                .collect::<Vec<_>>(),
        )?
        .with_extra_error(dropped),
        observation: observation.into_window(dropped)?,
    })
}

/// Exact decomposition laws from the direct recursion: `U_0` is a thinned
/// stationary state, `V_k` Poisson, `U_1 ~ Binomial(X_0, a)`.
pub fn direct_decomposition_law(params: InarParams, tail_budget: f64) -> Result<DecompositionLaw> {
    let params = InarParams::new(params.a, params.lambda)?;
    let spec = inar_kernel(params, tail_budget)?;
    let u0 = thin(&spec.initial, params.a)?;
    let v = poisson_pmf(params.lambda, tail_budget)?;
    let mut atoms = Vec::new();
    for (i, &pu) in u0.probs().iter().enumerate() {
        for (j, &pv) in v.probs().iter().enumerate() {
            let x = i + j;
            let row = binomial_pmf(x, params.a)?;
            for (k, &pk) in row.probs().iter().enumerate() {
                let p = pu * pv * pk;
                if p > 0.0 {
                    atoms.push((vec![i as u32, j as u32, x as u32, k as u32], p));
                }
            }
        }
    }
    let innovation = WindowLaw::from_atoms(vec![0, 1, 2, 3], &atoms)?;
    let observation = window_joint_pmf(&spec, &[0, 1, 2], spec.state_cap + v.max_state())?;
    Ok(DecompositionLaw {
        construction: "direct".into(),
        params,
        innovation,
        observation,
    })
}
