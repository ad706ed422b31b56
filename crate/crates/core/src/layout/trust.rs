use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::layout::knn::{by_distance_then_index, euclidean};
use crate::layout::Layout2D;

/// Trustworthiness of `low` as an embedding of `high`:
///
/// `T(k) = 1 - 2 / (N·k·(2N - 3k - 1)) · Σ_i Σ_{j ∈ U_i} (r(i, j) - k)`
///
/// where `U_i` are the 2D k-neighbours of `i` that are not among its
/// high-dimensional k-neighbours and `r(i, j)` is the 1-based rank of `j` by
/// high-dimensional distance from `i`. Ties rank the lower index first.
pub fn compute_trustworthiness(high: &EmbeddingMatrix, low: &Layout2D, k: usize) -> Result<f64> {
    if high.ids() != low.ids.as_slice() {
        return Err(Error::invalid("embedding and layout ids differ"));
    }
    let n = high.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    let norm = (n * k) as f64 * (2 * n) as f64 - (n * k) as f64 * (3 * k + 1) as f64;
    if norm <= 0.0 {
        return Err(Error::invalid(format!("k = {k} too large for N = {n}")));
    }
    let penalty: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut by_high: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(high.row(i), high.row(j)), j as u32))
                .collect();
            by_high.sort_unstable_by(by_distance_then_index);
            let mut rank = vec![0usize; n];
            for (r, &(_, j)) in by_high.iter().enumerate() {
                rank[j as usize] = r + 1;
            }
            let p = low.coords[i];
            let mut by_low: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let q = low.coords[j];
                    (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), j as u32)
                })
                .collect();
            by_low.select_nth_unstable_by(k - 1, by_distance_then_index);
            by_low[..k]
                .iter()
                .map(|&(_, j)| rank[j as usize])
                .filter(|&r| r > k)
                .map(|r| (r - k) as f64)
                .sum::<f64>()
        })
        .sum();
    Ok(1.0 - 2.0 * penalty / norm)
}
