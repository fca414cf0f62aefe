//! Singular values of small dense matrices.

use nalgebra::DMatrix;

/// Singular values of a row-major `rows x cols` matrix, in descending order.
pub fn singular_values(matrix: &[Vec<f64>]) -> Vec<f64> {
    let m = matrix.len();
    if m == 0 || matrix[0].is_empty() {
        return Vec::new();
    }
    let a = DMatrix::from_fn(m, matrix[0].len(), |r, c| matrix[r][c]);
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
