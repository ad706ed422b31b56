//! Procedural demo collection with ground-truth visual families.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{CollectionObject, Dataset, DatasetWriter, ManifestRecord};

pub const DEMO_IMAGE_SIDE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Solid,
    Stripes,
    Noise,
    Discs,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Solid, Family::Stripes, Family::Noise, Family::Discs];

    pub fn name(self) -> &'static str {
        match self {
            Family::Solid => "solid",
            Family::Stripes => "stripes",
            Family::Noise => "noise",
            Family::Discs => "discs",
        }
    }

    /// Families cycle with the object index, so counts differ by at most one.
    pub fn of_index(i: usize) -> Family {
        Family::ALL[i % Family::ALL.len()]
    }
}

pub fn demo_id(i: usize) -> String {
    format!("demo-{i:05}")
}

fn random_color(rng: &mut ChaCha8Rng) -> Rgb<u8> {
    Rgb([rng.random(), rng.random(), rng.random()])
}

fn render(family: Family, rng: &mut ChaCha8Rng) -> RgbImage {
    let side = DEMO_IMAGE_SIDE;
    match family {
        Family::Solid => RgbImage::from_pixel(side, side, random_color(rng)),
        Family::Stripes => {
            let (a, b) = (random_color(rng), random_color(rng));
            let cycles = rng.random_range(2..=12) as f64;
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let (c, s) = (angle.cos(), angle.sin());
            RgbImage::from_fn(side, side, |x, y| {
                let u = (x as f64 * c + y as f64 * s) / side as f64;
                if (u * cycles).rem_euclid(1.0) < 0.5 {
                    a
                } else {
                    b
                }
            })
        }
        Family::Noise => {
            let base = random_color(rng);
            let spread = rng.random_range(60..=127) as i16;
            RgbImage::from_fn(side, side, |_, _| {
                let mut px = base;
                for ch in px.0.iter_mut() {
                    *ch = (*ch as i16 + rng.random_range(-spread..=spread)).clamp(0, 255) as u8;
                }
                px
            })
        }
        Family::Discs => {
            let mut img = RgbImage::from_pixel(side, side, random_color(rng));
            for _ in 0..rng.random_range(1..=5) {
                let color = random_color(rng);
                let r = rng.random_range(4.0..side as f64 / 3.0);
                let cx = rng.random_range(0.0..side as f64);
                let cy = rng.random_range(0.0..side as f64);
                for (x, y, px) in img.enumerate_pixels_mut() {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        *px = color;
                    }
                }
            }
            img
        }
    }
}

/// Render `n` images into a dataset at `out`. Each object's
/// `classification` names its family. The output depends only on
/// `(seed, n)`.
pub fn generate_demo_corpus(seed: u64, n: usize, out: &Path) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("demo corpus needs at least one image"));
    }
    let writer = DatasetWriter::create(out)?;
    for i in 0..n {
        let family = Family::of_index(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let img = render(family, &mut rng);
        let mut png = Vec::new();
        img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;

        let id = demo_id(i);
        let title = format!("{} #{i}", family.name());
        let manifest = serde_json::json!({
            "id": id,
            "title": title,
            "classification": family.name(),
            "image": format!("images/{id}.png"),
        });
        let record = ManifestRecord {
            raw_payload: serde_json::to_vec_pretty(&manifest).expect("json value"),
            source_url: format!("demo:{seed}/{i}"),
            fetched_at: 0,
        };
        let obj = CollectionObject {
            object_id: id,
            title,
            classification: family.name().to_string(),
            subjects: vec![family.name().to_string()],
            ..Default::default()
        };
        writer.write_object(&obj, &record, Some((&png, "png")))?;
    }
    writer.rebuild_index()?;
    Dataset::open(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_are_balanced() {
        for n in [1, 7, 200, 203] {
            let mut counts = [0usize; 4];
            (0..n).for_each(|i| counts[Family::of_index(i) as usize] += 1);
            for c in counts {
                assert!((c as f64 - n as f64 / 4.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn rendering_is_seeded() {
        for family in Family::ALL {
            let mut a = ChaCha8Rng::seed_from_u64(3);
            let mut b = ChaCha8Rng::seed_from_u64(3);
            assert_eq!(render(family, &mut a), render(family, &mut b));
        }
    }
}
