use std::cmp::Ordering;

use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::layout::nndescent::{nn_descent, NnDescentParams};
use crate::layout::KnnMode;

/// k nearest neighbours of every point, each row sorted by ascending
/// distance (ties by lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    pub indices: Vec<u32>,
    pub distances: Vec<f64>,
    pub metric_tag: &'static str,
}

impl KnnGraph {
    pub fn row_indices(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_indices(i)
            .iter()
            .zip(self.row_distances(i))
            .map(|(&j, &d)| (j as usize, d))
    }

    /// Check the structural invariants: no self-neighbours, indices in range,
    /// non-negative ascending distances.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            let mut prev = 0.0;
            for (j, d) in self.neighbors(i) {
                if j == i || j >= self.n || !(d >= prev) {
                    return Err(Error::invalid(format!("malformed kNN row {i}")));
                }
                prev = d;
            }
        }
        Ok(())
    }
}

/// Euclidean distance, accumulated in `f64`.
#[inline]
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn by_distance_then_index(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    Ok(())
}

/// Brute-force kNN, parallel over query points.
pub fn exact_knn(matrix: &EmbeddingMatrix, k: usize) -> Result<KnnGraph> {
    let n = matrix.len();
    check_k(n, k)?;
    let rows: Vec<Vec<(f64, u32)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = matrix.row(i);
            let mut cand: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(q, matrix.row(j)), j as u32))
                .collect();
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
            cand.truncate(k);
            // Drop the n-sized buffer; keeping it costs O(n^2) memory overall.
            cand.shrink_to_fit();
            cand.sort_unstable_by(by_distance_then_index);
            cand
        })
        .collect();
    Ok(assemble(n, k, rows))
}

pub(crate) fn assemble(n: usize, k: usize, rows: Vec<Vec<(f64, u32)>>) -> KnnGraph {
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    KnnGraph {
        n,
        k,
        indices,
        distances,
        metric_tag: "euclidean",
    }
}

/// kNN graph over the rows of `matrix` (euclidean on normalized rows).
pub fn build_knn(matrix: &EmbeddingMatrix, k: usize, mode: KnnMode, seed: u64) -> Result<KnnGraph> {
    match mode {
        KnnMode::Exact => exact_knn(matrix, k),
        KnnMode::NnDescent => nn_descent(matrix, k, seed, &NnDescentParams::default()),
    }
}

/// Fraction of `truth`'s neighbour entries that `approx` also found.
pub fn knn_recall(approx: &KnnGraph, truth: &KnnGraph) -> f64 {
    assert_eq!((approx.n, approx.k), (truth.n, truth.k));
    let mut hits = 0usize;
    for i in 0..truth.n {
        let found = approx.row_indices(i);
        hits += truth.row_indices(i).iter().filter(|j| found.contains(j)).count();
    }
    hits as f64 / (truth.n * truth.k) as f64
}
