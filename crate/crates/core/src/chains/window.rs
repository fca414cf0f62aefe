//! Exact joint laws of a Markov chain over finite index windows.
//!
//! States are truncated at a per-coordinate cap. The computation runs on
//! the sub-stochastic truncated kernel, so every atom probability is a
//! lower bound on the true one and the missing total mass is an exact
//! account of what truncation removed.

use std::collections::{BTreeMap, HashMap};

use super::MarkovChainSpec;
use crate::dependence::{JointPmf, TripletPmf};
use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;

/// Default bound on the number of tuple atoms a window law may hold.
pub const DEFAULT_EXPLOSION_LIMIT: u128 = 2_000_000;

/// Sparse joint law of `(X_i)_{i in indices}`, atoms in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLaw {
    indices: Vec<usize>,
    states: Vec<u32>,
    probs: Vec<f64>,
    truncation_error: f64,
}

/// Dense truncated kernel matrix and its powers.
struct TruncatedKernel {
    size: usize,
    powers: HashMap<usize, Vec<f64>>,
}

impl TruncatedKernel {
    fn new(spec: &MarkovChainSpec, cap: usize) -> Self {
        let size = cap + 1;
        let mut m = vec![0.0; size * size];
        for x in 0..size {
            let row = spec.row(x);
            for (y, &p) in row.probs().iter().enumerate().take(size) {
                m[x * size + y] = p;
            }
        }
        let mut powers = HashMap::new();
        powers.insert(1, m);
        Self { size, powers }
    }

    fn power(&mut self, d: usize) -> &[f64] {
        if !self.powers.contains_key(&d) {
            let prev = self.power(d - 1).to_vec();
            let base = &self.powers[&1];
            let n = self.size;
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    let pik = prev[i * n + k];
                    if pik == 0.0 {
                        continue;
                    }
                    let (row, src) = (&mut out[i * n..(i + 1) * n], &base[k * n..(k + 1) * n]);
                    for (o, &b) in row.iter_mut().zip(src) {
                        *o += pik * b;
                    }
                }
            }
            self.powers.insert(d, out);
        }
        &self.powers[&d]
    }

    fn advance(&mut self, v: &[f64], d: usize) -> Vec<f64> {
        if d == 0 {
            return v.to_vec();
        }
        let n = self.size;
        let m = self.power(d);
        let mut acc = vec![CompensatedSum::new(); n];
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            for (y, a) in acc.iter_mut().enumerate() {
                let p = m[x * n + y];
                if p != 0.0 {
                    a.add(vx * p);
                }
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }
}

/// Exact law of `(X_i)_{i in indices}` with every coordinate truncated at
/// `cap`, subject to [`DEFAULT_EXPLOSION_LIMIT`].
pub fn window_joint_pmf(spec: &MarkovChainSpec, indices: &[usize], cap: usize) -> Result<WindowLaw> {
    window_joint_pmf_with_limit(spec, indices, cap, DEFAULT_EXPLOSION_LIMIT)
}

pub fn window_joint_pmf_with_limit(
    spec: &MarkovChainSpec,
    indices: &[usize],
    cap: usize,
    limit: u128,
) -> Result<WindowLaw> {
    if indices.is_empty() {
        return Err(invalid("window needs at least one index"));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!(
            "window indices {indices:?} must be strictly increasing"
        )));
    }
    let size = cap + 1;
    let mut kernel = TruncatedKernel::new(spec, cap);

    let mut v: Vec<f64> = (0..size).map(|x| spec.initial.prob(x)).collect();
    v = kernel.advance(&v, indices[0]);

    // Per-coordinate supports bound the number of tuple atoms.
    let mut atoms: u128 = 1;
    let mut marginal = v.clone();
    for (k, &i) in indices.iter().enumerate() {
        if k > 0 {
            marginal = kernel.advance(&marginal, i - indices[k - 1]);
        }
        let support = marginal.iter().filter(|&&p| p > 0.0).count().max(1) as u128;
        atoms = atoms.saturating_mul(support);
    }
    if atoms > limit {
        return Err(Error::TooLargeWindow { atoms, limit });
    }

    let mut states: Vec<u32> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for (x, &p) in v.iter().enumerate() {
        if p > 0.0 {
            states.push(x as u32);
            probs.push(p);
        }
    }
    for k in 1..indices.len() {
        let d = indices[k] - indices[k - 1];
        let m = kernel.power(d);
        let mut next_states = Vec::with_capacity(states.len());
        let mut next_probs = Vec::with_capacity(probs.len());
        for (t, &p) in probs.iter().enumerate() {
            let tuple = &states[t * k..(t + 1) * k];
            let last = tuple[k - 1] as usize;
            for y in 0..size {
                let q = m[last * size + y];
                if q > 0.0 {
                    next_states.extend_from_slice(tuple);
                    next_states.push(y as u32);
                    next_probs.push(p * q);
                }
            }
        }
        states = next_states;
        probs = next_probs;
    }
    let total = crate::numeric::sum(&probs);
    Ok(WindowLaw {
        indices: indices.to_vec(),
        states,
        probs,
        truncation_error: (1.0 - total).max(0.0),
    })
}

fn tuple_label(t: &[u32]) -> String {
    if t.len() == 1 {
        t[0].to_string()
    } else {
        let inner: Vec<String> = t.iter().map(u32::to_string).collect();
        format!("({})", inner.join(","))
    }
}

impl WindowLaw {
    /// Builds a law from explicit `(tuple, probability)` atoms. The
    /// truncation error is the mass missing from 1.
    pub fn from_atoms(indices: Vec<usize>, atoms: &[(Vec<u32>, f64)]) -> Result<Self> {
        let width = indices.len();
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (t, p) in atoms {
            if t.len() != width {
                return Err(invalid(format!("atom {t:?} does not match window width {width}")));
            }
            if p.is_nan() || *p < 0.0 {
                return Err(invalid(format!("atom {t:?} has negative mass {p}")));
            }
            *merged.entry(t.clone()).or_insert(0.0) += p;
        }
        let mut states = Vec::with_capacity(merged.len() * width);
        let mut probs = Vec::with_capacity(merged.len());
        for (t, p) in merged {
            if p > 0.0 {
                states.extend_from_slice(&t);
                probs.push(p);
            }
        }
        let total = crate::numeric::sum(&probs);
        if total > 1.0 + 1e-12 {
            return Err(invalid(format!("atoms carry total mass {total} > 1")));
        }
        Ok(Self {
            indices,
            states,
            probs,
            truncation_error: (1.0 - total).max(0.0),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn width(&self) -> usize {
        self.indices.len()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mass lost to truncation, `1 - total mass`.
    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn total_mass(&self) -> f64 {
        crate::numeric::sum(&self.probs)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        let w = self.width();
        self.probs
            .iter()
            .enumerate()
            .map(move |(t, &p)| (&self.states[t * w..(t + 1) * w], p))
    }

    /// Probability of one tuple (zero if absent).
    pub fn prob(&self, tuple: &[u32]) -> f64 {
        let w = self.width();
        let n = self.len();
        // atoms are sorted lexicographically
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.states[mid * w..(mid + 1) * w].cmp(tuple) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.probs[mid],
            }
        }
        0.0
    }

    fn positions(&self, window_indices: &[usize]) -> Result<Vec<usize>> {
        window_indices
            .iter()
            .map(|i| {
                self.indices
                    .iter()
                    .position(|j| j == i)
                    .ok_or_else(|| invalid(format!("index {i} not in window {:?}", self.indices)))
            })
            .collect()
    }

    /// Unnormalized marginal law of the coordinate at window index `index`.
    pub fn marginal(&self, index: usize) -> Result<Vec<f64>> {
        let pos = self.positions(&[index])?[0];
        let mut out: Vec<CompensatedSum> = Vec::new();
        for (t, p) in self.atoms() {
            let x = t[pos] as usize;
            if out.len() <= x {
                out.resize(x + 1, CompensatedSum::new());
            }
            out[x].add(p);
        }
        Ok(out.iter().map(CompensatedSum::value).collect())
    }

    /// Marginal law of a sub-window.
    pub fn project(&self, window_indices: &[usize]) -> Result<WindowLaw> {
        let pos = self.positions(window_indices)?;
        let mut merged: BTreeMap<Vec<u32>, CompensatedSum> = BTreeMap::new();
        for (t, p) in self.atoms() {
            let key: Vec<u32> = pos.iter().map(|&q| t[q]).collect();
            merged.entry(key).or_default().add(p);
        }
        let width = pos.len();
        let mut states = Vec::with_capacity(merged.len() * width);
        let mut probs = Vec::with_capacity(merged.len());
        for (t, p) in merged {
            states.extend_from_slice(&t);
            probs.push(p.value());
        }
        Ok(WindowLaw {
            indices: window_indices.to_vec(),
            states,
            probs,
            truncation_error: self.truncation_error,
        })
    }

    /// Same atoms with `extra` added to the truncation error, for mass
    /// removed before the atoms were formed.
    pub fn with_extra_error(mut self, extra: f64) -> Self {
        self.truncation_error += extra;
        self
    }

    /// Upper bound on the total variation between the untruncated laws:
    /// half the L1 distance between atoms plus half of both truncation
    /// errors, capped at 1.
    pub fn total_variation(&self, other: &WindowLaw) -> f64 {
        let mut diff = CompensatedSum::new();
        let (mut i, mut j) = (0, 0);
        let (a, b): (Vec<_>, Vec<_>) = (self.atoms().collect(), other.atoms().collect());
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    diff.add(a[i].1);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    diff.add(b[j].1);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    diff.add((a[i].1 - b[j].1).abs());
                    i += 1;
                    j += 1;
                }
            }
        }
        (0.5 * (diff.value() + self.truncation_error + other.truncation_error)).min(1.0)
    }

    /// Normalized triplet law of the tuples at three groups of window
    /// indices.
    pub fn triplet(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<TripletPmf> {
        let pos = [self.positions(a)?, self.positions(b)?, self.positions(c)?];
        let mut ids: [BTreeMap<Vec<u32>, usize>; 3] = Default::default();
        let mut keyed = Vec::with_capacity(self.len());
        for (t, p) in self.atoms() {
            let keys: Vec<Vec<u32>> = pos.iter().map(|ps| ps.iter().map(|&q| t[q]).collect()).collect();
            for (m, k) in ids.iter_mut().zip(&keys) {
                m.entry(k.clone()).or_insert(0);
            }
            keyed.push((keys, p));
        }
        for m in &mut ids {
            for (i, v) in m.values_mut().enumerate() {
                *v = i;
            }
        }
        let entries = keyed
            .into_iter()
            .map(|(k, p)| (ids[0][&k[0]], ids[1][&k[1]], ids[2][&k[2]], p))
            .collect();
        let labels = ids.map(|m| m.keys().map(|t| tuple_label(t)).collect());
        TripletPmf::normalized(labels, entries)
    }

    /// Normalized joint law of the tuple over `s` (rows) against the tuple
    /// over `t` (columns), both given as window indices.
    pub fn joint_between(&self, s: &[usize], t: &[usize]) -> Result<JointPmf> {
        let ps = self.positions(s)?;
        let pt = self.positions(t)?;
        let mut cells: BTreeMap<(Vec<u32>, Vec<u32>), CompensatedSum> = BTreeMap::new();
        for (tuple, p) in self.atoms() {
            let r: Vec<u32> = ps.iter().map(|&q| tuple[q]).collect();
            let c: Vec<u32> = pt.iter().map(|&q| tuple[q]).collect();
            cells.entry((r, c)).or_default().add(p);
        }
        let mut rows: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut cols: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for (r, c) in cells.keys() {
            rows.entry(r.clone()).or_insert(0);
            cols.entry(c.clone()).or_insert(0);
        }
        let dense = rows.len() as u128 * cols.len() as u128;
        if dense > DEFAULT_EXPLOSION_LIMIT {
            return Err(Error::TooLargeWindow {
                atoms: dense,
                limit: DEFAULT_EXPLOSION_LIMIT,
            });
        }
        for (i, v) in rows.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in cols.values_mut().enumerate() {
            *v = i;
        }
        let total = self.total_mass();
        let mut mass = vec![vec![0.0; cols.len()]; rows.len()];
        for ((r, c), p) in &cells {
            mass[rows[r]][cols[c]] = p.value() / total;
        }
        Ok(JointPmf::from_parts(
            rows.keys().map(|t| tuple_label(t)).collect(),
            cols.keys().map(|t| tuple_label(t)).collect(),
            mass,
        ))
    }
}
