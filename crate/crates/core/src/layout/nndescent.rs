//! NN-descent approximate kNN graph construction.
//!
//! Each iteration samples "new" neighbour entries (forward and reverse),
//! joins every new candidate against every other candidate of the same point,
//! and keeps improvements. Candidate joins run in parallel against a snapshot
//! of the heaps; the resulting updates are applied in a fixed order so the
//! output depends only on the seed.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::layout::knn::{assemble, euclidean, KnnGraph};

#[derive(Debug, Clone)]
pub struct NnDescentParams {
    pub max_iterations: usize,
    pub sample_rate: f64,
    /// Stop once fewer than `delta · N · k` heap entries change.
    pub delta: f64,
    /// Heap size used while building; rows are truncated to `k` at the end.
    /// `None` uses `2k`.
    pub build_k: Option<usize>,
    /// Random-projection trees seeding the heaps. `None` uses
    /// `5 + round(N^0.25)`, capped at 32; 0 seeds with random neighbours only.
    pub n_trees: Option<usize>,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        NnDescentParams {
            max_iterations: 10,
            sample_rate: 0.5,
            delta: 0.001,
            build_k: None,
            n_trees: None,
        }
    }
}

/// Bounded neighbour list kept sorted by (distance, index).
#[derive(Debug, Clone)]
struct NeighborHeap {
    entries: Vec<(f64, u32, bool)>,
}

impl NeighborHeap {
    fn worst(&self, cap: usize) -> f64 {
        if self.entries.len() < cap {
            f64::INFINITY
        } else {
            self.entries.last().map_or(f64::INFINITY, |e| e.0)
        }
    }

    fn push(&mut self, d: f64, j: u32, cap: usize) -> bool {
        if self.entries.iter().any(|e| e.1 == j) {
            return false;
        }
        let key = (d, j);
        if self.entries.len() >= cap {
            let last = self.entries.last().expect("cap > 0");
            if (key.0, key.1) >= (last.0, last.1) {
                return false;
            }
        }
        let pos = self
            .entries
            .partition_point(|e| e.0 < d || (e.0 == d && e.1 < j));
        self.entries.insert(pos, (d, j, true));
        self.entries.truncate(cap);
        true
    }
}

/// Leaves of one random-projection tree: each split uses the hyperplane
/// bisecting two randomly chosen points.
fn rp_tree_leaves(matrix: &EmbeddingMatrix, leaf_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let dim = matrix.dim();
    let mut leaves = Vec::new();
    let mut stack = vec![(0..matrix.len() as u32).collect::<Vec<u32>>()];
    while let Some(points) = stack.pop() {
        if points.len() <= leaf_size {
            leaves.push(points);
            continue;
        }
        let picks = index::sample(rng, points.len(), 2);
        let (a, b) = (matrix.row(points[picks.index(0)] as usize), matrix.row(points[picks.index(1)] as usize));
        let normal: Vec<f64> = (0..dim).map(|d| a[d] as f64 - b[d] as f64).collect();
        let offset: f64 = (0..dim).map(|d| normal[d] * (a[d] as f64 + b[d] as f64) / 2.0).sum();
        let (mut left, mut right): (Vec<u32>, Vec<u32>) = points.iter().partition(|&&p| {
            let row = matrix.row(p as usize);
            (0..dim).map(|d| normal[d] * row[d] as f64).sum::<f64>() < offset
        });
        if left.is_empty() || right.is_empty() {
            // Coincident picks: split at random instead.
            let mut all = if left.is_empty() { right } else { left };
            all.shuffle(rng);
            right = all.split_off(all.len() / 2);
            left = all;
        }
        stack.push(right);
        stack.push(left);
    }
    leaves
}

fn subsample(items: &mut Vec<u32>, size: usize, rng: &mut ChaCha8Rng) {
    if items.len() > size {
        items.shuffle(rng);
        items.truncate(size);
    }
}

pub fn nn_descent(matrix: &EmbeddingMatrix, k: usize, seed: u64, params: &NnDescentParams) -> Result<KnnGraph> {
    let n = matrix.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    let cap = params.build_k.unwrap_or(2 * k).clamp(k, n - 1);
    let sample_size = ((params.sample_rate * cap as f64).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = |a: u32, b: u32| euclidean(matrix.row(a as usize), matrix.row(b as usize));

    // Seed the heaps with leaf-mates from a random-projection forest, then top
    // up with random neighbours.
    let n_trees = params
        .n_trees
        .unwrap_or_else(|| (5 + (n as f64).powf(0.25).round() as usize).min(32));
    let leaf_size = cap.max(10);
    let mut seeds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for _ in 0..n_trees {
        for leaf in rp_tree_leaves(matrix, leaf_size, &mut rng) {
            for &p in &leaf {
                seeds[p as usize].extend(leaf.iter().filter(|&&q| q != p));
            }
        }
    }
    for (i, s) in seeds.iter_mut().enumerate() {
        s.sort_unstable();
        s.dedup();
        if s.len() < cap {
            let extra = index::sample(&mut rng, n - 1, cap);
            s.extend(extra.into_iter().map(|j| if j >= i { j as u32 + 1 } else { j as u32 }));
        }
    }
    let mut heaps: Vec<NeighborHeap> = seeds
        .into_par_iter()
        .enumerate()
        .map(|(i, js)| {
            let mut h = NeighborHeap {
                entries: Vec::with_capacity(cap + 1),
            };
            for j in js {
                h.push(dist(i as u32, j), j, cap);
            }
            h
        })
        .collect();

    for iteration in 0..params.max_iterations {
        let mut new_c: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_c: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, heap) in heaps.iter_mut().enumerate() {
            let mut fresh: Vec<usize> = (0..heap.entries.len()).filter(|&e| heap.entries[e].2).collect();
            fresh.shuffle(&mut rng);
            fresh.truncate(sample_size);
            for &e in &fresh {
                heap.entries[e].2 = false;
                new_c[i].push(heap.entries[e].1);
            }
            for e in &heap.entries {
                if !e.2 && !new_c[i].contains(&e.1) {
                    old_c[i].push(e.1);
                }
            }
        }
        let mut new_rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            for &j in &new_c[i] {
                new_rev[j as usize].push(i as u32);
            }
            for &j in &old_c[i] {
                old_rev[j as usize].push(i as u32);
            }
        }
        for i in 0..n {
            subsample(&mut new_rev[i], sample_size, &mut rng);
            subsample(&mut old_rev[i], sample_size, &mut rng);
            new_c[i].append(&mut new_rev[i]);
            old_c[i].append(&mut old_rev[i]);
            new_c[i].sort_unstable();
            new_c[i].dedup();
            old_c[i].sort_unstable();
            old_c[i].dedup();
        }

        let thresholds: Vec<f64> = heaps.iter().map(|h| h.worst(cap)).collect();
        let mut updates: Vec<(u32, u32, f64)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let new = &new_c[i];
                let old = &old_c[i];
                let mut out = Vec::new();
                let mut consider = |u: u32, v: u32| {
                    if u == v {
                        return;
                    }
                    let d = dist(u, v);
                    if d < thresholds[u as usize] || d < thresholds[v as usize] {
                        out.push((u.min(v), u.max(v), d));
                    }
                };
                for (a, &u) in new.iter().enumerate() {
                    for &v in &new[a + 1..] {
                        consider(u, v);
                    }
                    for &v in old {
                        consider(u, v);
                    }
                }
                out
            })
            .collect();
        updates.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        updates.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);

        let mut changed = 0usize;
        for (u, v, d) in updates {
            changed += heaps[u as usize].push(d, v, cap) as usize;
            changed += heaps[v as usize].push(d, u, cap) as usize;
        }
        tracing::debug!(iteration, changed, "nn-descent iteration");
        if (changed as f64) < params.delta * (n * cap) as f64 {
            break;
        }
    }

    let rows = heaps
        .into_iter()
        .map(|h| h.entries.into_iter().take(k).map(|(d, j, _)| (d, j)).collect())
        .collect();
    Ok(assemble(n, k, rows))
}
