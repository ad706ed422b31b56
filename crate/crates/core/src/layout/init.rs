use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::fuzzy::FuzzyGraph;
use crate::layout::{InitMode, Layout2D, LayoutConfig};

/// Initial coordinates lie in `[-INIT_EXTENT, INIT_EXTENT]²`.
pub const INIT_EXTENT: f64 = 10.0;

pub const POWER_ITERATIONS: usize = 500;
pub const POWER_TOLERANCE: f64 = 1e-6;

fn random_coords(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.random_range(-INIT_EXTENT..=INIT_EXTENT),
                rng.random_range(-INIT_EXTENT..=INIT_EXTENT),
            ]
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// `(I + D^{-1/2} W D^{-1/2}) x`. The identity shift makes the operator
/// positive semi-definite so power iteration finds the eigenvectors of the
/// normalized Laplacian with the smallest eigenvalues.
fn apply(graph: &FuzzyGraph, inv_sqrt_deg: &[f64], x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    for &(i, j, w) in &graph.edges {
        let (i, j) = (i as usize, j as usize);
        let s = w * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        out[i] += s * x[j];
        out[j] += s * x[i];
    }
}

/// The two leading non-trivial eigenvectors of the normalized graph
/// Laplacian, by power iteration with deflation against the trivial
/// eigenvector `D^{1/2}·1` and previously found vectors.
pub fn spectral_embedding(graph: &FuzzyGraph, seed: u64) -> Result<[Vec<f64>; 2]> {
    let n = graph.n;
    let deg = graph.degrees();
    let inv_sqrt_deg: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    if normalize(&mut trivial) == 0.0 {
        return Err(Error::Numerical("graph has no edges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<Vec<f64>> = vec![trivial];
    let mut next = vec![0.0; n];
    for axis in 0..2 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let deflate = |v: &mut Vec<f64>, found: &[Vec<f64>]| {
            for u in found {
                let p = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
        };
        deflate(&mut v, &found);
        normalize(&mut v);
        let mut converged = false;
        for _ in 0..POWER_ITERATIONS {
            apply(graph, &inv_sqrt_deg, &v, &mut next);
            deflate(&mut next, &found);
            if normalize(&mut next) == 0.0 {
                return Err(Error::Numerical(format!("power iteration collapsed on axis {axis}")));
            }
            let delta = v.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            std::mem::swap(&mut v, &mut next);
            if delta < POWER_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "power iteration did not converge on axis {axis} within {POWER_ITERATIONS} iterations"
            )));
        }
        found.push(v);
    }
    let second = found.pop().expect("two axes");
    let first = found.pop().expect("two axes");
    Ok([first, second])
}

fn rescale_axis(v: &[f64]) -> Vec<f64> {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x / max * INIT_EXTENT).clamp(-INIT_EXTENT, INIT_EXTENT)).collect()
}

/// Starting coordinates for the optimizer. Spectral initialization that
/// fails to converge falls back to random with a warning.
pub fn init_layout(graph: &FuzzyGraph, ids: &[String], config: &LayoutConfig) -> Result<Layout2D> {
    if ids.len() != graph.n {
        return Err(Error::invalid(format!("{} ids for a graph of {} points", ids.len(), graph.n)));
    }
    let coords = match config.init {
        InitMode::Random => random_coords(graph.n, config.seed),
        InitMode::Spectral => match spectral_embedding(graph, config.seed) {
            Ok([x, y]) => rescale_axis(&x).into_iter().zip(rescale_axis(&y)).map(|(x, y)| [x, y]).collect(),
            Err(e) => {
                tracing::warn!(error = %e, "spectral initialization failed, using random");
                random_coords(graph.n, config.seed)
            }
        },
    };
    Layout2D::new(ids.to_vec(), coords, config.clone())
}
