//! Seeded Monte Carlo path generation.
//!
//! Path `i` draws from the stream `seed.stream_index + i`, and paths are
//! collected in index order, so output does not depend on the thread count.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{check_unit_closed, check_unit_open, InarParams, MarkovChainSpec};
use crate::dist::{poisson_pmf, Sampler, SeedSpec, DEFAULT_TAIL_BUDGET};
use crate::error::{invalid, Result};
use crate::json::to_string_compact;

/// `n_paths` paths of equal length, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    n_paths: usize,
    length: usize,
    data: Vec<u32>,
    pub seed: SeedSpec,
    pub construction: String,
    pub params: serde_json::Value,
}

/// One path of `X_k = U_k + V_k`: survivors `u` of the previous state plus
/// the innovation `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnovationDecomposition {
    pub x: Vec<u32>,
    pub u: Vec<u32>,
    pub v: Vec<u32>,
}

impl InnovationDecomposition {
    /// Checks `x = u + v` everywhere and `u[k] <= x[k-1]`.
    pub fn is_consistent(&self) -> bool {
        let n = self.x.len();
        self.u.len() == n
            && self.v.len() == n
            && (0..n).all(|k| self.x[k] == self.u[k] + self.v[k])
            && (1..n).all(|k| self.u[k] <= self.x[k - 1])
    }
}

impl PathEnsemble {
    pub fn from_paths(
        paths: Vec<Vec<u32>>,
        seed: SeedSpec,
        construction: impl Into<String>,
        params: serde_json::Value,
    ) -> Result<Self> {
        let n_paths = paths.len();
        let length = paths.first().map_or(0, Vec::len);
        if paths.iter().any(|p| p.len() != length) {
            return Err(invalid("paths must share one length"));
        }
        Ok(Self {
            n_paths,
            length,
            data: paths.concat(),
            seed,
            construction: construction.into(),
            params,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn path(&self, i: usize) -> &[u32] {
        &self.data[i * self.length..(i + 1) * self.length]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.data.chunks_exact(self.length.max(1)).take(self.n_paths)
    }

    /// Values of `X_k` across all paths.
    pub fn column(&self, k: usize) -> Vec<u32> {
        self.paths().map(|p| p[k]).collect()
    }

    fn write_metadata<W: Write>(&self, w: &mut W, config: Option<&serde_json::Value>) -> Result<()> {
        writeln!(w, "# construction: {}", self.construction)?;
        writeln!(w, "# params: {}", to_string_compact(&self.params)?)?;
        writeln!(w, "# seed: {}", to_string_compact(&self.seed)?)?;
        writeln!(w, "# n_paths: {}", self.n_paths)?;
        writeln!(w, "# length: {}", self.length)?;
        if let Some(c) = config {
            writeln!(w, "# config: {}", to_string_compact(c)?)?;
        }
        Ok(())
    }

    /// CSV export: `#` metadata lines, a header `x0,...`, one row per path.
    pub fn write_csv<W: Write>(&self, mut w: W, config: Option<&serde_json::Value>) -> Result<()> {
        self.write_metadata(&mut w, config)?;
        let header: Vec<String> = (0..self.length).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.paths() {
            let row: Vec<String> = p.iter().map(u32::to_string).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Long-format CSV of the decomposition: `path,k,x,u,v`.
    pub fn write_decomposition_csv<W: Write>(
        &self,
        decompositions: &[InnovationDecomposition],
        mut w: W,
        config: Option<&serde_json::Value>,
    ) -> Result<()> {
        self.write_metadata(&mut w, config)?;
        writeln!(w, "path,k,x,u,v")?;
        for (i, d) in decompositions.iter().enumerate() {
            for k in 0..d.x.len() {
                writeln!(w, "{i},{k},{},{},{}", d.x[k], d.u[k], d.v[k])?;
            }
        }
        Ok(())
    }
}

fn check_shape(length: usize, n_paths: usize) -> Result<()> {
    if length == 0 || n_paths == 0 {
        return Err(invalid("length and n_paths must be positive"));
    }
    Ok(())
}

pub(crate) fn path_rngs(seed: SeedSpec, n_paths: usize) -> impl IndexedParallelIterator<Item = ChaCha8Rng> {
    (0..n_paths)
        .into_par_iter()
        .map(move |i| seed.stream(seed.stream_index.wrapping_add(i as u64)).rng())
}

/// Number of successes in `n` Bernoulli(`a`) trials.
pub(crate) fn thin_draw<R: Rng + ?Sized>(rng: &mut R, n: u32, a: f64) -> u32 {
    (0..n).filter(|_| rng.random::<f64>() < a).count() as u32
}

/// I.i.d. paths of a Markov chain. Rows are tabulated up to the state cap
/// and built on demand beyond it.
pub fn simulate_chain(spec: &MarkovChainSpec, length: usize, n_paths: usize, seed: SeedSpec) -> Result<PathEnsemble> {
    check_shape(length, n_paths)?;
    let initial = Sampler::new(&spec.initial)?;
    let rows: Vec<Sampler> = (0..=spec.state_cap)
        .map(|x| Sampler::new(&spec.row(x)))
        .collect::<Result<_>>()?;
    let paths: Vec<Result<Vec<u32>>> = path_rngs(seed, n_paths)
        .map(|mut rng| {
            let mut path = Vec::with_capacity(length);
            let mut x = initial.draw(&mut rng);
            path.push(x);
            for _ in 1..length {
                x = match rows.get(x as usize) {
                    Some(s) => s.draw(&mut rng),
                    None => Sampler::new(&spec.row(x as usize))?.draw(&mut rng),
                };
                path.push(x);
            }
            Ok(path)
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    PathEnsemble::from_paths(paths, seed, spec.name.clone(), spec.params.clone())
}

/// Paths of `zeta_k = zeta_0 * eta_1 * ... * eta_k` with `zeta_0 ~
/// Bernoulli(p0)` and `eta_i ~ Bernoulli(a)` independent.
pub fn indicator_chain(p0: f64, a: f64, length: usize, n_paths: usize, seed: SeedSpec) -> Result<PathEnsemble> {
    check_unit_closed(p0, "p0")?;
    check_unit_open(a, "a")?;
    check_shape(length, n_paths)?;
    let paths: Vec<Vec<u32>> = path_rngs(seed, n_paths)
        .map(|mut rng| {
            let mut z = u32::from(rng.random::<f64>() < p0);
            let mut path = Vec::with_capacity(length);
            path.push(z);
            for _ in 1..length {
                z &= u32::from(rng.random::<f64>() < a);
                path.push(z);
            }
            path
        })
        .collect();
    PathEnsemble::from_paths(paths, seed, "indicator", json!({ "p0": p0, "a": a }))
}

/// Direct INAR(1) recursion. A state `X_{-1}` is drawn from the stationary
/// law, then `U_k ~ Binomial(X_{k-1}, a)`, `V_k ~ Poisson(lambda)` and
/// `X_k = U_k + V_k` for `k = 0, 1, ...`, so the decomposition is complete
/// from the first observed index on.
pub fn simulate_inar_direct(
    params: InarParams,
    length: usize,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<(PathEnsemble, Vec<InnovationDecomposition>)> {
    let params = InarParams::new(params.a, params.lambda)?;
    check_shape(length, n_paths)?;
    let stationary = Sampler::new(&poisson_pmf(params.stationary_mean(), DEFAULT_TAIL_BUDGET)?)?;
    let innovation = Sampler::new(&poisson_pmf(params.lambda, DEFAULT_TAIL_BUDGET)?)?;
    let decompositions: Vec<InnovationDecomposition> = path_rngs(seed, n_paths)
        .map(|mut rng| {
            let mut d = InnovationDecomposition {
                x: Vec::with_capacity(length),
                u: Vec::with_capacity(length),
                v: Vec::with_capacity(length),
            };
            let mut prev = stationary.draw(&mut rng);
            for _ in 0..length {
                let u = thin_draw(&mut rng, prev, params.a);
                let v = innovation.draw(&mut rng);
                prev = u + v;
                d.x.push(prev);
                d.u.push(u);
                d.v.push(v);
            }
            d
        })
        .collect();
    let paths = decompositions.iter().map(|d| d.x.clone()).collect();
    let ensemble = PathEnsemble::from_paths(paths, seed, "direct", params.to_json())?;
    Ok((ensemble, decompositions))
}
