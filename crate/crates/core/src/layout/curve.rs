//! Fit of the low-dimensional similarity curve `1 / (1 + a·d^(2b))`.

/// Number of sample points on `[0, CURVE_RANGE]`.
pub const CURVE_SAMPLES: usize = 300;
pub const CURVE_RANGE: f64 = 3.0;

const MAX_ITERATIONS: usize = 500;

/// Target membership: 1 up to `min_dist`, exponential decay beyond.
pub fn target_curve(d: f64, min_dist: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist)).exp()
    }
}

fn curve(d: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * d.powf(2.0 * b))
}

fn sample_points() -> impl Iterator<Item = f64> {
    let step = CURVE_RANGE / (CURVE_SAMPLES - 1) as f64;
    (0..CURVE_SAMPLES).map(move |i| i as f64 * step)
}

fn sse(a: f64, b: f64, min_dist: f64) -> f64 {
    sample_points()
        .map(|d| {
            let r = curve(d, a, b) - target_curve(d, min_dist);
            r * r
        })
        .sum()
}

/// Root-mean-square gap between the fitted curve and the target over the
/// sample points.
pub fn curve_rmse(a: f64, b: f64, min_dist: f64) -> f64 {
    (sse(a, b, min_dist) / CURVE_SAMPLES as f64).sqrt()
}

/// Least-squares `(a, b)` by Levenberg–Marquardt from `(1, 1)`.
pub fn fit_curve_params(min_dist: f64) -> (f64, f64) {
    assert!(min_dist > 0.0, "min_dist must be positive");
    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut cost = sse(a, b, min_dist);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        // Normal equations J^T J δ = -J^T r for the residual r = f - t.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for d in sample_points() {
            let r = curve(d, a, b) - target_curve(d, min_dist);
            let (da, db) = if d > 0.0 {
                let p = d.powf(2.0 * b);
                let f2 = curve(d, a, b).powi(2);
                (-p * f2, -a * p * 2.0 * d.ln() * f2)
            } else {
                (0.0, 0.0)
            };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(mbb * ga - jab * gb) / det;
            let step_b = -(maa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { sse(na, nb, min_dist) } else { f64::INFINITY };
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_shape() {
        assert_eq!(target_curve(0.05, 0.1), 1.0);
        assert_eq!(target_curve(0.1, 0.1), 1.0);
        assert!((target_curve(1.1, 0.1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sample_grid_spans_range() {
        let pts: Vec<f64> = sample_points().collect();
        assert_eq!(pts.len(), 300);
        assert_eq!(pts[0], 0.0);
        assert!((pts[299] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_a_local_minimum() {
        let (a, b) = fit_curve_params(0.1);
        let base = sse(a, b, 0.1);
        for (da, db) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            assert!(sse(a + da, b + db, 0.1) >= base);
        }
    }
}
