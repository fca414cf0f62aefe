//! Dependence coefficients between finite discrete observables.
//!
//! For finite alphabets the maximal correlation
//! `sup |Corr(f(X), g(Y))|` equals the second singular value of
//! `Q[r][c] = P(r, c) / sqrt(P(r) P(c))`; the largest singular value is
//! always 1, carried by the constant functions.

mod joint;
mod svd;

pub use joint::{JointPmf, TripletPmf, JOINT_MASS_TOLERANCE};
pub use svd::singular_values;

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Atoms with marginal mass at or below this are treated as null. Subnormal
/// masses carry no reliable relative precision.
pub const NULL_ATOM_MASS: f64 = 1e-300;

/// Conditional quantities are only formed on atoms heavier than this.
/// Exact laws built from long products of probabilities carry atoms whose
/// mass sits at the level of accumulated rounding or pruning, and their
/// conditionals have no reliable digits.
pub const CONDITIONING_FLOOR: f64 = 1e-30;

/// Default cap on alphabet sizes for event enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 12;

/// Default bound on the number of cells a tensor product may hold.
pub const DEFAULT_TENSOR_LIMIT: u128 = 2_000_000;

/// Singular values of the normalized joint matrix, null atoms removed.
pub fn normalized_singular_values(j: &JointPmf) -> Vec<f64> {
    let rm = j.row_masses();
    let cm = j.col_masses();
    let rows: Vec<usize> = (0..rm.len()).filter(|&r| rm[r] > NULL_ATOM_MASS).collect();
    let cols: Vec<usize> = (0..cm.len()).filter(|&c| cm[c] > NULL_ATOM_MASS).collect();
    let q: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let sr = rm[r].sqrt();
            cols.iter().map(|&c| j.mass()[r][c] / (sr * cm[c].sqrt())).collect()
        })
        .collect();
    singular_values(&q)
}

/// Maximal correlation of the row and column observables; 0 when either
/// side has a single atom of positive mass.
pub fn maximal_correlation(j: &JointPmf) -> f64 {
    let sv = normalized_singular_values(j);
    if sv.len() < 2 {
        return 0.0;
    }
    debug_assert!((sv[0] - 1.0).abs() < 1e-8, "top singular value {}", sv[0]);
    sv[1].clamp(0.0, 1.0)
}

/// Exact `sup |P(A∩B) - P(A)P(B)| / sqrt(P(A) P(B))` over all events built
/// from atoms of positive mass, by full subset enumeration.
pub fn lambda_coefficient(j: &JointPmf) -> Result<f64> {
    lambda_coefficient_with_cap(j, DEFAULT_ENUMERATION_CAP)
}

pub fn lambda_coefficient_with_cap(j: &JointPmf, cap: usize) -> Result<f64> {
    let rm = j.row_masses();
    let cm = j.col_masses();
    let rows: Vec<usize> = (0..rm.len()).filter(|&r| rm[r] > 0.0).collect();
    let cols: Vec<usize> = (0..cm.len()).filter(|&c| cm[c] > 0.0).collect();
    for size in [rows.len(), cols.len()] {
        if size > cap {
            return Err(Error::TooLargeAlphabet { size, cap });
        }
    }
    let (nr, nc) = (rows.len(), cols.len());
    let mass: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| j.mass()[r][c]).collect())
        .collect();

    // P(B) for every column subset, built from the subset without its lowest bit.
    let col_subsets = 1usize << nc;
    let mut p_b = vec![0.0; col_subsets];
    for b in 1..col_subsets {
        let low = b.trailing_zeros() as usize;
        p_b[b] = p_b[b & (b - 1)] + cm[cols[low]];
    }

    let mut best = 0.0f64;
    let mut colsum = vec![vec![0.0; nc]; 1 << nr];
    let mut p_ab = vec![0.0; col_subsets];
    for a in 1usize..(1 << nr) {
        let low = a.trailing_zeros() as usize;
        let prev = a & (a - 1);
        let row: Vec<f64> = (0..nc).map(|c| colsum[prev][c] + mass[low][c]).collect();
        colsum[a] = row;
        let pa: f64 = colsum[a].iter().sum();
        if pa <= 0.0 {
            continue;
        }
        for b in 1..col_subsets {
            let lowc = b.trailing_zeros() as usize;
            p_ab[b] = p_ab[b & (b - 1)] + colsum[a][lowc];
            let cov = (p_ab[b] - pa * p_b[b]).abs();
            best = best.max(cov / (pa.sqrt() * p_b[b].sqrt()));
        }
    }
    Ok(best)
}

/// `max |P(a∩c | b) - P(a|b) P(c|b)|` over atoms with `P(b)` above
/// [`CONDITIONING_FLOOR`].
/// Zero exactly when `(A, B, C)` is a Markov triplet.
pub fn markov_triplet_residual(t: &TripletPmf) -> f64 {
    let mut p_b: HashMap<usize, f64> = HashMap::new();
    let mut p_ab: HashMap<(usize, usize), f64> = HashMap::new();
    let mut p_bc: HashMap<(usize, usize), f64> = HashMap::new();
    let mut p_abc: HashMap<(usize, usize, usize), f64> = HashMap::new();
    for &(a, b, c, p) in t.entries() {
        *p_b.entry(b).or_insert(0.0) += p;
        *p_ab.entry((a, b)).or_insert(0.0) += p;
        *p_bc.entry((b, c)).or_insert(0.0) += p;
        *p_abc.entry((a, b, c)).or_insert(0.0) += p;
    }
    let mut a_given_b: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (&(a, b), &p) in &p_ab {
        a_given_b.entry(b).or_default().push((a, p));
    }
    let mut c_given_b: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (&(b, c), &p) in &p_bc {
        c_given_b.entry(b).or_default().push((c, p));
    }
    let mut worst = 0.0f64;
    for (&b, &pb) in &p_b {
        if pb <= CONDITIONING_FLOOR {
            continue;
        }
        let (Some(avec), Some(cvec)) = (a_given_b.get(&b), c_given_b.get(&b)) else {
            continue;
        };
        for &(a, pab) in avec {
            for &(c, pbc) in cvec {
                let joint = p_abc.get(&(a, b, c)).copied().unwrap_or(0.0) / pb;
                let product = (pab / pb) * (pbc / pb);
                worst = worst.max((joint - product).abs());
            }
        }
    }
    worst
}

fn tuple_label(parts: &[&str]) -> String {
    format!("({})", parts.join(","))
}

/// Joint law of (all row parts, all column parts) when the blocks are
/// independent of one another: the product measure on tuple alphabets.
pub fn tensor_combine(blocks: &[JointPmf]) -> Result<JointPmf> {
    tensor_combine_with_limit(blocks, DEFAULT_TENSOR_LIMIT)
}

pub fn tensor_combine_with_limit(blocks: &[JointPmf], limit: u128) -> Result<JointPmf> {
    let Some(first) = blocks.first() else {
        return Err(crate::error::invalid("tensor_combine needs at least one block"));
    };
    if blocks.len() == 1 {
        return Ok(first.clone());
    }
    let cells = blocks.iter().fold(1u128, |acc, b| {
        acc.saturating_mul(b.rows().len() as u128 * b.cols().len() as u128)
    });
    if cells > limit {
        return Err(Error::TooLargeWindow { atoms: cells, limit });
    }

    // Mixed-radix enumeration of tuple indices, first block most significant.
    let row_dims: Vec<usize> = blocks.iter().map(|b| b.rows().len()).collect();
    let col_dims: Vec<usize> = blocks.iter().map(|b| b.cols().len()).collect();
    let expand = |dims: &[usize]| -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &d in dims {
            out = out
                .into_iter()
                .flat_map(|t| {
                    (0..d).map(move |i| {
                        let mut t = t.clone();
                        t.push(i);
                        t
                    })
                })
                .collect();
        }
        out
    };
    let row_tuples = expand(&row_dims);
    let col_tuples = expand(&col_dims);
    let rows = row_tuples
        .iter()
        .map(|t| {
            let parts: Vec<&str> = t.iter().zip(blocks).map(|(&i, b)| b.rows()[i].as_str()).collect();
            tuple_label(&parts)
        })
        .collect();
    let cols = col_tuples
        .iter()
        .map(|t| {
            let parts: Vec<&str> = t.iter().zip(blocks).map(|(&i, b)| b.cols()[i].as_str()).collect();
            tuple_label(&parts)
        })
        .collect();
    let mass = row_tuples
        .iter()
        .map(|rt| {
            col_tuples
                .iter()
                .map(|ct| {
                    rt.iter()
                        .zip(ct)
                        .zip(blocks)
                        .map(|((&r, &c), b)| b.mass()[r][c])
                        .product()
                })
                .collect()
        })
        .collect();
    Ok(JointPmf::from_parts(rows, cols, mass))
}
