//! Small deterministic raster helpers shared by the descriptor and the atlas.

use image::{Rgb, RgbImage};

/// Rec. 601 luma of an RGB pixel, in [0, 1].
pub fn luma(p: &Rgb<u8>) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Single-channel plane of `f64` samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn luminance(img: &RgbImage) -> Self {
        Plane {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.pixels().map(luma).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-output-pixel source spans with fractional coverage weights.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let mut spans = Vec::with_capacity(last - first);
            for s in first..last {
                let cover = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if cover > 0.0 {
                    spans.push((s, cover / scale));
                }
            }
            spans
        })
        .collect()
}

/// Area-averaging resample: each output sample is the coverage-weighted mean
/// of the source samples under it. Works for both shrinking and growing.
pub fn area_resize(plane: &Plane, width: usize, height: usize) -> Plane {
    let wx = area_weights(plane.width, width);
    let wy = area_weights(plane.height, height);
    // Separable: columns first, then rows.
    let mut tmp = vec![0.0; plane.height * width];
    for y in 0..plane.height {
        let row = &plane.data[y * plane.width..(y + 1) * plane.width];
        for (ox, spans) in wx.iter().enumerate() {
            tmp[y * width + ox] = spans.iter().map(|&(s, w)| row[s] * w).sum();
        }
    }
    let mut data = vec![0.0; width * height];
    for (oy, spans) in wy.iter().enumerate() {
        for ox in 0..width {
            data[oy * width + ox] = spans.iter().map(|&(s, w)| tmp[s * width + ox] * w).sum();
        }
    }
    Plane {
        width,
        height,
        data,
    }
}

/// Crop the longer dimension symmetrically to a square, keeping the centre.
pub fn center_square(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    let side = w.min(h);
    let x0 = (w - side) / 2;
    let y0 = (h - side) / 2;
    image::imageops::crop_imm(img, x0, y0, side, side).to_image()
}

/// Square thumbnail: centre crop, then area-average per channel.
pub fn thumbnail(img: &RgbImage, size: u32) -> RgbImage {
    let square = center_square(img);
    let side = square.width() as usize;
    let size = size.max(1) as usize;
    let channels: Vec<Plane> = (0..3)
        .map(|c| {
            let plane = Plane {
                width: side,
                height: side,
                data: square.pixels().map(|p| p[c] as f64).collect(),
            };
            area_resize(&plane, size, size)
        })
        .collect();
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let i = y as usize * size + x as usize;
        Rgb([0, 1, 2].map(|c| channels[c].data[i].round().clamp(0.0, 255.0) as u8))
    })
}
