use rayon::prelude::*;
use serde::Serialize;

use crate::layout::Layout2D;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub sample_ids: Vec<String>,
    pub radius: f64,
}

/// Greedy farthest-point ordering of a point set.
///
/// `order[0]` is the point nearest the centroid; each later entry maximizes
/// its minimum distance to the entries before it (ties to the lower index).
/// `radii[i]` is that minimum distance when `order[i]` was chosen; for the
/// first point it is the distance to the farthest point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOrder {
    pub order: Vec<u32>,
    pub radii: Vec<f64>,
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Argmax with ties to the lower index; skips already-chosen points (NaN).
fn farthest(min_d: &[f64]) -> Option<(usize, f64)> {
    min_d
        .par_iter()
        .enumerate()
        .filter(|(_, d)| !d.is_nan())
        .map(|(i, &d)| (i, d))
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
}

pub fn farthest_point_order(coords: &[[f64; 2]], count: usize) -> SampleOrder {
    let n = coords.len();
    let count = count.min(n);
    let mut order = Vec::with_capacity(count);
    let mut radii = Vec::with_capacity(count);
    if count == 0 {
        return SampleOrder { order, radii };
    }
    let (sx, sy) = coords.iter().fold((0.0, 0.0), |(x, y), c| (x + c[0], y + c[1]));
    let centroid = [sx / n as f64, sy / n as f64];
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, &c) in coords.iter().enumerate() {
        let d = dist(c, centroid);
        if d < best {
            best = d;
            start = i;
        }
    }
    // NaN marks chosen points.
    let mut min_d: Vec<f64> = coords.par_iter().map(|&c| dist(c, coords[start])).collect();
    min_d[start] = f64::NAN;
    order.push(start as u32);
    radii.push(farthest(&min_d).map_or(0.0, |f| f.1));
    while order.len() < count {
        let (next, d) = farthest(&min_d).expect("points remain");
        order.push(next as u32);
        radii.push(d);
        let p = coords[next];
        min_d.par_iter_mut().zip(coords).for_each(|(m, &c)| {
            if !m.is_nan() {
                *m = m.min(dist(c, p));
            }
        });
        min_d[next] = f64::NAN;
    }
    SampleOrder { order, radii }
}

impl SampleOrder {
    /// The first `budget` entries as a sample set. A budget beyond the point
    /// count returns every point with radius 0.
    pub fn prefix(&self, ids: &[String], budget: usize) -> SampleSet {
        let take = budget.min(self.order.len());
        SampleSet {
            sample_ids: self.order[..take].iter().map(|&i| ids[i as usize].clone()).collect(),
            radius: if budget > ids.len() || take == 0 { 0.0 } else { self.radii[take - 1] },
        }
    }
}

/// Greedy farthest-point sample of `budget` points.
pub fn select_samples(layout: &Layout2D, budget: usize) -> SampleSet {
    farthest_point_order(&layout.coords, budget).prefix(&layout.ids, budget)
}
