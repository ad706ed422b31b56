//! Stochastic gradient descent on the UMAP cross-entropy.
//!
//! Every symmetric edge is visited in both directions. An edge of weight `w`
//! fires once every `w_max / w` epochs; each firing pulls the pair together
//! and pushes the head away from `negative_samples` uniformly drawn points.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layout::curve::fit_curve_params;
use crate::layout::fuzzy::FuzzyGraph;
use crate::layout::{Layout2D, LayoutConfig};

/// Per-coordinate bound on every applied gradient step.
pub const GRADIENT_CLIP: f64 = 4.0;

fn dist_sq(p: [f64; 2], q: [f64; 2]) -> f64 {
    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
    dx * dx + dy * dy
}

/// `log φ(d)` with `φ(d) = 1 / (1 + a·d^(2b))`.
pub fn attractive_log_likelihood(yi: [f64; 2], yj: [f64; 2], a: f64, b: f64) -> f64 {
    -(a * dist_sq(yi, yj).powf(b)).ln_1p()
}

/// `log(1 - φ(d))`.
pub fn repulsive_log_likelihood(yi: [f64; 2], yj: [f64; 2], a: f64, b: f64) -> f64 {
    let p = a * dist_sq(yi, yj).powf(b);
    p.ln() - p.ln_1p()
}

/// Gradient of [`attractive_log_likelihood`] with respect to `yi`.
pub fn attractive_gradient(yi: [f64; 2], yj: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = dist_sq(yi, yj);
    if d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let c = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
    [c * (yi[0] - yj[0]), c * (yi[1] - yj[1])]
}

/// Gradient of [`repulsive_log_likelihood`] with respect to `yi`. Undefined
/// at coincident points; returns zero there.
pub fn repulsive_gradient(yi: [f64; 2], yj: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = dist_sq(yi, yj);
    if d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let c = 2.0 * b / (d2 * (1.0 + a * d2.powf(b)));
    [c * (yi[0] - yj[0]), c * (yi[1] - yj[1])]
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Directed edge list with its sampling schedule.
struct Schedule {
    heads: Vec<u32>,
    tails: Vec<u32>,
    epochs_per_sample: Vec<f64>,
}

impl Schedule {
    fn new(graph: &FuzzyGraph) -> Self {
        let w_max = graph.edges.iter().fold(0.0_f64, |m, e| m.max(e.2));
        let mut s = Schedule {
            heads: Vec::with_capacity(graph.edges.len() * 2),
            tails: Vec::with_capacity(graph.edges.len() * 2),
            epochs_per_sample: Vec::with_capacity(graph.edges.len() * 2),
        };
        for &(i, j, w) in &graph.edges {
            for (h, t) in [(i, j), (j, i)] {
                s.heads.push(h);
                s.tails.push(t);
                s.epochs_per_sample.push(w_max / w);
            }
        }
        s
    }

    fn len(&self) -> usize {
        self.heads.len()
    }
}

fn nan_error(epoch: usize, head: u32, tail: u32) -> Error {
    Error::Numerical(format!("non-finite coordinate at epoch {epoch} on edge ({head}, {tail})"))
}

/// Optimize `init` for `config.n_epochs` epochs.
///
/// Epochs are numbered from 1; the learning rate in epoch `e` is
/// `learning_rate · (1 - (e - 1) / n_epochs)`. Single-threaded runs are
/// deterministic for a fixed seed.
pub fn optimize_layout(graph: &FuzzyGraph, init: &Layout2D, config: &LayoutConfig) -> Result<Layout2D> {
    config.validate()?;
    if init.len() != graph.n {
        return Err(Error::invalid(format!("layout has {} points, graph has {}", init.len(), graph.n)));
    }
    let (a, b) = fit_curve_params(config.min_dist);
    let schedule = Schedule::new(graph);
    let coords = if config.parallel {
        optimize_parallel(&schedule, init.coords.clone(), a, b, config)?
    } else {
        optimize_serial(&schedule, init.coords.clone(), a, b, config)?
    };
    Layout2D::new(init.ids.clone(), coords, config.clone())
}

fn optimize_serial(s: &Schedule, mut y: Vec<[f64; 2]>, a: f64, b: f64, config: &LayoutConfig) -> Result<Vec<[f64; 2]>> {
    let n = y.len();
    let neg_rate = config.negative_samples as f64;
    let mut next_sample = s.epochs_per_sample.clone();
    let eps_neg: Vec<f64> = s.epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_negative = eps_neg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_epochs = config.n_epochs;

    for epoch in 1..=n_epochs {
        let alpha = config.learning_rate * (1.0 - (epoch - 1) as f64 / n_epochs as f64);
        let e_f = epoch as f64;
        for e in 0..s.len() {
            if next_sample[e] > e_f {
                continue;
            }
            let (h, t) = (s.heads[e] as usize, s.tails[e] as usize);
            let g = attractive_gradient(y[h], y[t], a, b);
            for d in 0..2 {
                let step = clip(g[d]) * alpha;
                y[h][d] += step;
                y[t][d] -= step;
            }
            next_sample[e] += s.epochs_per_sample[e];

            if neg_rate > 0.0 {
                let n_neg = ((e_f - next_negative[e]) / eps_neg[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.random_range(0..n);
                    if k == h {
                        continue;
                    }
                    let g = repulsive_gradient(y[h], y[k], a, b);
                    let coincident = dist_sq(y[h], y[k]) <= 0.0;
                    for d in 0..2 {
                        let gd = if coincident { GRADIENT_CLIP } else { clip(g[d]) };
                        y[h][d] += gd * alpha;
                    }
                }
                next_negative[e] += n_neg as f64 * eps_neg[e];
            }
            if !(y[h][0].is_finite() && y[h][1].is_finite() && y[t][0].is_finite() && y[t][1].is_finite()) {
                return Err(nan_error(epoch, s.heads[e], s.tails[e]));
            }
        }
    }
    Ok(y)
}

/// Lock-free variant: edges are split into chunks processed concurrently,
/// with coordinates stored as atomics and updated without synchronization.
fn optimize_parallel(s: &Schedule, y: Vec<[f64; 2]>, a: f64, b: f64, config: &LayoutConfig) -> Result<Vec<[f64; 2]>> {
    const CHUNK: usize = 4096;
    let n = y.len();
    let neg_rate = config.negative_samples as f64;
    let coords: Vec<[AtomicU64; 2]> = y
        .iter()
        .map(|c| [AtomicU64::new(c[0].to_bits()), AtomicU64::new(c[1].to_bits())])
        .collect();
    let load = |i: usize| -> [f64; 2] {
        [
            f64::from_bits(coords[i][0].load(Ordering::Relaxed)),
            f64::from_bits(coords[i][1].load(Ordering::Relaxed)),
        ]
    };
    let store = |i: usize, p: [f64; 2]| {
        coords[i][0].store(p[0].to_bits(), Ordering::Relaxed);
        coords[i][1].store(p[1].to_bits(), Ordering::Relaxed);
    };
    let eps_neg: Vec<f64> = s.epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = s.epochs_per_sample.clone();
    let mut next_negative = eps_neg.clone();
    let n_epochs = config.n_epochs;

    for epoch in 1..=n_epochs {
        let alpha = config.learning_rate * (1.0 - (epoch - 1) as f64 / n_epochs as f64);
        let e_f = epoch as f64;
        let failure = next_sample
            .par_chunks_mut(CHUNK)
            .zip(next_negative.par_chunks_mut(CHUNK))
            .enumerate()
            .map(|(c, (ns, nn))| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ((epoch as u64) << 32) ^ c as u64);
                for off in 0..ns.len() {
                    let e = c * CHUNK + off;
                    if ns[off] > e_f {
                        continue;
                    }
                    let (h, t) = (s.heads[e] as usize, s.tails[e] as usize);
                    let (mut yh, mut yt) = (load(h), load(t));
                    let g = attractive_gradient(yh, yt, a, b);
                    for d in 0..2 {
                        let step = clip(g[d]) * alpha;
                        yh[d] += step;
                        yt[d] -= step;
                    }
                    store(t, yt);
                    ns[off] += s.epochs_per_sample[e];
                    if neg_rate > 0.0 {
                        let n_neg = ((e_f - nn[off]) / eps_neg[e]).floor().max(0.0) as usize;
                        for _ in 0..n_neg {
                            let k = rng.random_range(0..n);
                            if k == h {
                                continue;
                            }
                            let yk = load(k);
                            let g = repulsive_gradient(yh, yk, a, b);
                            let coincident = dist_sq(yh, yk) <= 0.0;
                            for d in 0..2 {
                                let gd = if coincident { GRADIENT_CLIP } else { clip(g[d]) };
                                yh[d] += gd * alpha;
                            }
                        }
                        nn[off] += n_neg as f64 * eps_neg[e];
                    }
                    store(h, yh);
                    if !(yh[0].is_finite() && yh[1].is_finite() && yt[0].is_finite() && yt[1].is_finite()) {
                        return Some((s.heads[e], s.tails[e]));
                    }
                }
                None
            })
            .find_first(|r| r.is_some())
            .flatten();
        if let Some((h, t)) = failure {
            return Err(nan_error(epoch, h, t));
        }
    }
    Ok((0..n).map(load).collect())
}
