//! Deterministic 92-dimensional handcrafted image descriptor.
//!
//! | block | dims | content                                                 |
//! |-------|------|---------------------------------------------------------|
//! | hue–saturation | 64 | 8×8 joint histogram, value-weighted, / pixel count |
//! | luminance grid | 16 | mean luma of a 4×4 grid (area-averaged)          |
//! | gradients      | 8  | Sobel orientation histogram, magnitude-weighted, L1 |
//! | complexity     | 4  | deflate size / raw size of luma at 64², 32², 16², 8² |
//!
//! The concatenation is L2-normalized.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use image::RgbImage;

use crate::error::{Error, Result};
use crate::imageops::{area_resize, Plane};

pub const HS_BINS: usize = 8;
pub const HS_DIMS: usize = HS_BINS * HS_BINS;
pub const GRID: usize = 4;
pub const GRID_DIMS: usize = GRID * GRID;
pub const ORIENTATION_BINS: usize = 8;
pub const COMPRESSION_SCALES: [usize; 4] = [64, 32, 16, 8];
pub const DESCRIPTOR_DIM: usize = HS_DIMS + GRID_DIMS + ORIENTATION_BINS + COMPRESSION_SCALES.len();
pub const DESCRIPTOR_TAG: &str = "baseline-v1";
pub const MIN_SIDE: u32 = 8;

/// Offsets of each block inside the descriptor.
pub mod block {
    use super::*;
    pub const HUE_SAT: std::ops::Range<usize> = 0..HS_DIMS;
    pub const LUMINANCE: std::ops::Range<usize> = HS_DIMS..HS_DIMS + GRID_DIMS;
    pub const GRADIENT: std::ops::Range<usize> =
        HS_DIMS + GRID_DIMS..HS_DIMS + GRID_DIMS + ORIENTATION_BINS;
    pub const COMPRESSION: std::ops::Range<usize> =
        HS_DIMS + GRID_DIMS + ORIENTATION_BINS..DESCRIPTOR_DIM;
}

/// HSV with hue in degrees [0, 360), saturation and value in [0, 1].
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h.rem_euclid(360.0), s, max)
}

fn hue_saturation(img: &RgbImage) -> [f64; HS_DIMS] {
    let mut hist = [0.0; HS_DIMS];
    for p in img.pixels() {
        let (h, s, v) = rgb_to_hsv(p[0], p[1], p[2]);
        let hb = ((h / (360.0 / HS_BINS as f64)) as usize).min(HS_BINS - 1);
        let sb = ((s * HS_BINS as f64) as usize).min(HS_BINS - 1);
        hist[hb * HS_BINS + sb] += v;
    }
    let n = (img.width() as f64) * (img.height() as f64);
    hist.iter_mut().for_each(|v| *v /= n);
    hist
}

fn gradient_orientations(luma: &Plane) -> [f64; ORIENTATION_BINS] {
    let mut hist = [0.0; ORIENTATION_BINS];
    let bin_width = std::f64::consts::TAU / ORIENTATION_BINS as f64;
    for y in 1..luma.height - 1 {
        for x in 1..luma.width - 1 {
            let p = |dx: isize, dy: isize| luma.get((x as isize + dx) as usize, (y as isize + dy) as usize);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((angle / bin_width) as usize).min(ORIENTATION_BINS - 1);
            hist[bin] += mag;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
    hist
}

/// Deflate-compressed size over raw size of the luma plane at `side`².
pub fn compression_ratio(luma: &Plane, side: usize) -> f64 {
    let small = area_resize(luma, side, side);
    let bytes: Vec<u8> = small
        .data
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let mut enc = DeflateEncoder::new(Vec::with_capacity(bytes.len()), Compression::best());
    enc.write_all(&bytes).expect("in-memory write");
    let compressed = enc.finish().expect("in-memory write");
    compressed.len() as f64 / bytes.len() as f64
}

/// Compute the descriptor of a decoded image.
pub fn compute_baseline_descriptor(img: &RgbImage) -> Result<Vec<f32>> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::Decode {
            what: format!("{}x{} image", img.width(), img.height()),
            reason: format!("both sides must be at least {MIN_SIDE} pixels"),
        });
    }
    let luma = Plane::luminance(img);
    let mut v = Vec::with_capacity(DESCRIPTOR_DIM);
    v.extend_from_slice(&hue_saturation(img));
    v.extend_from_slice(&area_resize(&luma, GRID, GRID).data);
    v.extend_from_slice(&gradient_orientations(&luma));
    v.extend(COMPRESSION_SCALES.iter().map(|&s| compression_ratio(&luma, s)));
    debug_assert_eq!(v.len(), DESCRIPTOR_DIM);

    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    // The compression block is strictly positive, so norm > 0.
    Ok(v.iter().map(|x| (x / norm) as f32).collect())
}
