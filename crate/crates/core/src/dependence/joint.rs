use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;

/// Tolerance on the total mass of a joint law.
pub const JOINT_MASS_TOLERANCE: f64 = 1e-12;

/// Joint law of two finite discrete observables.
///
/// JSON form: `{"rows": [...], "cols": [...], "mass": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint")]
pub struct JointPmf {
    rows: Vec<String>,
    cols: Vec<String>,
    mass: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawJoint {
    rows: Vec<String>,
    cols: Vec<String>,
    mass: Vec<Vec<f64>>,
}

impl TryFrom<RawJoint> for JointPmf {
    type Error = Error;

    fn try_from(raw: RawJoint) -> Result<Self> {
        JointPmf::new(raw.rows, raw.cols, raw.mass)
    }
}

impl JointPmf {
    pub fn new(rows: Vec<String>, cols: Vec<String>, mass: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(invalid("joint law needs nonempty alphabets"));
        }
        if mass.len() != rows.len() || mass.iter().any(|r| r.len() != cols.len()) {
            return Err(invalid(format!(
                "mass matrix shape does not match {} x {} alphabets",
                rows.len(),
                cols.len()
            )));
        }
        if mass.iter().flatten().any(|&p| p.is_nan() || p < 0.0) {
            return Err(invalid("joint mass entries must be nonnegative"));
        }
        let mut acc = CompensatedSum::new();
        acc.extend(mass.iter().flatten().copied());
        let total = acc.value();
        if (total - 1.0).abs() > JOINT_MASS_TOLERANCE {
            return Err(invalid(format!("joint mass sums to {total}, not 1")));
        }
        Ok(Self { rows, cols, mass })
    }

    pub(crate) fn from_parts(rows: Vec<String>, cols: Vec<String>, mass: Vec<Vec<f64>>) -> Self {
        Self { rows, cols, mass }
    }

    /// Joint with numeric labels `0..rows` and `0..cols`.
    pub fn from_matrix(mass: Vec<Vec<f64>>) -> Result<Self> {
        let rows = (0..mass.len()).map(|i| i.to_string()).collect();
        let cols = (0..mass.first().map_or(0, Vec::len)).map(|i| i.to_string()).collect();
        Self::new(rows, cols, mass)
    }

    /// Normalizes a nonnegative weight matrix.
    pub fn from_weights(rows: Vec<String>, cols: Vec<String>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let total: f64 = weights.iter().flatten().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(invalid("weights must have positive total"));
        }
        let mass = weights
            .into_iter()
            .map(|r| r.into_iter().map(|w| w / total).collect())
            .collect();
        Self::new(rows, cols, mass)
    }

    /// Product law of two marginals.
    pub fn product(row_mass: &[f64], col_mass: &[f64]) -> Result<Self> {
        let mass = row_mass
            .iter()
            .map(|&r| col_mass.iter().map(|&c| r * c).collect())
            .collect();
        Self::from_matrix(mass)
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    pub fn row_masses(&self) -> Vec<f64> {
        self.mass.iter().map(|r| crate::numeric::sum(r)).collect()
    }

    pub fn col_masses(&self) -> Vec<f64> {
        (0..self.cols.len())
            .map(|c| {
                let mut acc = CompensatedSum::new();
                acc.extend(self.mass.iter().map(|r| r[c]));
                acc.value()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mass = (0..self.cols.len())
            .map(|c| self.mass.iter().map(|r| r[c]).collect())
            .collect();
        Self::from_parts(self.cols.clone(), self.rows.clone(), mass)
    }

    /// Reorders rows and columns: new row `i` is old row `row_perm[i]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let rows = row_perm.iter().map(|&i| self.rows[i].clone()).collect();
        let cols = col_perm.iter().map(|&j| self.cols[j].clone()).collect();
        let mass = row_perm
            .iter()
            .map(|&i| col_perm.iter().map(|&j| self.mass[i][j]).collect())
            .collect();
        Self::from_parts(rows, cols, mass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Joint law of three finite observables `(A, B, C)`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletPmf {
    labels: [Vec<String>; 3],
    entries: Vec<(usize, usize, usize, f64)>,
}

impl TripletPmf {
    pub fn new(labels: [Vec<String>; 3], entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        let t = Self::from_unnormalized(labels, entries)?;
        let total = t.total_mass();
        if (total - 1.0).abs() > JOINT_MASS_TOLERANCE {
            return Err(invalid(format!("triplet mass sums to {total}, not 1")));
        }
        Ok(t)
    }

    /// Accepts any nonnegative weights and rescales them to total mass 1.
    pub fn normalized(labels: [Vec<String>; 3], entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        let mut t = Self::from_unnormalized(labels, entries)?;
        let total = t.total_mass();
        if total.is_nan() || total <= 0.0 {
            return Err(invalid("triplet weights must have positive total"));
        }
        for e in &mut t.entries {
            e.3 /= total;
        }
        Ok(t)
    }

    fn from_unnormalized(labels: [Vec<String>; 3], entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        for &(a, b, c, p) in &entries {
            if a >= labels[0].len() || b >= labels[1].len() || c >= labels[2].len() {
                return Err(invalid(format!("triplet entry ({a}, {b}, {c}) out of range")));
            }
            if p.is_nan() || p < 0.0 {
                return Err(invalid("triplet mass entries must be nonnegative"));
            }
        }
        // merge duplicates
        let mut merged: HashMap<(usize, usize, usize), f64> = HashMap::new();
        for &(a, b, c, p) in &entries {
            *merged.entry((a, b, c)).or_insert(0.0) += p;
        }
        let mut entries: Vec<_> = merged
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|((a, b, c), p)| (a, b, c, p))
            .collect();
        entries.sort_by_key(|e| (e.0, e.1, e.2));
        Ok(Self { labels, entries })
    }

    /// From a dense `mass[a][b][c]` array.
    pub fn from_dense(labels: [Vec<String>; 3], mass: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut entries = Vec::new();
        for (a, plane) in mass.iter().enumerate() {
            for (b, row) in plane.iter().enumerate() {
                for (c, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        entries.push((a, b, c, p));
                    }
                }
            }
        }
        Self::new(labels, entries)
    }

    pub fn labels(&self) -> &[Vec<String>; 3] {
        &self.labels
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.entries.iter().map(|e| e.3));
        acc.value()
    }
}
