use crate::layout::knn::KnnGraph;

pub const SIGMA_ITERATIONS: usize = 64;
pub const SIGMA_TOLERANCE: f64 = 1e-5;

/// Symmetric weighted graph: `(i, j, w)` with `i < j` and `w ∈ (0, 1]`,
/// sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

impl FuzzyGraph {
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            deg[i as usize] += w;
            deg[j as usize] += w;
        }
        deg
    }
}

/// Per-point `rho` (nearest-neighbour distance) and `sigma` such that
/// `Σ_j exp(-max(0, d_ij - rho) / sigma) = log2(k)`, found by bisection.
pub fn smooth_knn_dist(knn: &KnnGraph) -> (Vec<f64>, Vec<f64>) {
    let target = (knn.k as f64).log2();
    let mut rhos = Vec::with_capacity(knn.n);
    let mut sigmas = Vec::with_capacity(knn.n);
    for i in 0..knn.n {
        let dists = knn.row_distances(i);
        let rho = dists.first().copied().unwrap_or(0.0);
        let membership = |sigma: f64| -> f64 {
            dists
                .iter()
                .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
                .sum()
        };
        let (mut lo, mut hi, mut mid) = (0.0_f64, f64::INFINITY, 1.0_f64);
        for _ in 0..SIGMA_ITERATIONS {
            let sum = membership(mid);
            if (sum - target).abs() < SIGMA_TOLERANCE {
                break;
            }
            if sum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        rhos.push(rho);
        sigmas.push(mid);
    }
    (rhos, sigmas)
}

/// Directed memberships `exp(-max(0, d - rho) / sigma)`, symmetrized with
/// the probabilistic t-conorm `a + b - a·b`.
pub fn fuzzy_simplicial_set(knn: &KnnGraph) -> FuzzyGraph {
    let (rhos, sigmas) = smooth_knn_dist(knn);
    let mut directed = Vec::with_capacity(knn.n * knn.k);
    for i in 0..knn.n {
        for (j, d) in knn.neighbors(i) {
            let w = (-(d - rhos[i]).max(0.0) / sigmas[i]).exp();
            directed.push((i as u32, j as u32, w));
        }
    }
    symmetrize(knn.n, directed)
}

/// Merge directed memberships `(from, to, w)` into undirected edges with
/// `a + b - a·b`. Zero-weight results are dropped.
pub(crate) fn symmetrize(n: usize, directed: Vec<(u32, u32, f64)>) -> FuzzyGraph {
    // (low, high, weight of low→high, weight of high→low)
    let mut pairs: Vec<(u32, u32, f64, f64)> = directed
        .into_iter()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, w)| if i < j { (i, j, w, 0.0) } else { (j, i, 0.0, w) })
        .collect();
    pairs.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(pairs.len());
    let mut iter = pairs.into_iter().peekable();
    while let Some((i, j, mut fwd, mut back)) = iter.next() {
        while let Some(&(i2, j2, f2, b2)) = iter.peek() {
            if (i2, j2) != (i, j) {
                break;
            }
            fwd = fwd.max(f2);
            back = back.max(b2);
            iter.next();
        }
        let w = fwd + back - fwd * back;
        if w > 0.0 {
            edges.push((i, j, w.min(1.0)));
        }
    }
    FuzzyGraph { n, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(rows: &[&[(u32, f64)]]) -> KnnGraph {
        let k = rows[0].len();
        KnnGraph {
            n: rows.len(),
            k,
            indices: rows.iter().flat_map(|r| r.iter().map(|e| e.0)).collect(),
            distances: rows.iter().flat_map(|r| r.iter().map(|e| e.1)).collect(),
            metric_tag: "euclidean",
        }
    }

    #[test]
    fn equal_distances_give_unit_weights() {
        let knn = graph(&[
            &[(1, 2.0), (2, 2.0), (3, 2.0)],
            &[(0, 2.0), (2, 2.0), (3, 2.0)],
            &[(0, 2.0), (1, 2.0), (3, 2.0)],
            &[(0, 2.0), (1, 2.0), (2, 2.0)],
        ]);
        let g = fuzzy_simplicial_set(&knn);
        assert_eq!(g.edges.len(), 6);
        assert!(g.edges.iter().all(|e| e.2 == 1.0));
        let (_, sigmas) = smooth_knn_dist(&knn);
        assert!(sigmas.iter().all(|s| *s > 0.0 && s.is_finite()));
    }

    #[test]
    fn t_conorm_of_halves() {
        let g = symmetrize(2, vec![(0, 1, 0.5), (1, 0, 0.5)]);
        assert_eq!(g.edges, vec![(0, 1, 0.75)]);
        let g = symmetrize(3, vec![(2, 0, 0.4), (1, 1, 1.0)]);
        assert_eq!(g.edges, vec![(0, 2, 0.4)]);
    }

    #[test]
    fn symmetrized_weights_are_bounded() {
        let knn = graph(&[
            &[(1, 0.1), (2, 0.5)],
            &[(0, 0.1), (3, 0.9)],
            &[(3, 0.2), (0, 0.5)],
            &[(2, 0.2), (1, 0.9)],
        ]);
        let g = fuzzy_simplicial_set(&knn);
        let mut seen = std::collections::HashSet::new();
        for &(i, j, w) in &g.edges {
            assert!(i < j && w > 0.0 && w <= 1.0);
            assert!(seen.insert((i, j)));
        }
    }
}
