//! On-disk tile pyramid.
//!
//! ```text
//! <out>/manifest.tsv              header lines starting with '#', then
//!                                 z, tx, ty, members, samples, sprite
//! <out>/samples.tsv               rank, object_id, radius, thumbnail flag
//! <out>/tiles/<z>/<tx>_<ty>.pts   object_id, x, y, sample flag
//! <out>/tiles/<z>/<tx>_<ty>.png   sprite sheet (tiles with samples only)
//! <out>/tiles/<z>/<tx>_<ty>.map   object_id, px, py, w, h
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{Atlas, AtlasParams, SampleOrder};
use crate::error::{Error, IoContext, Result};
use crate::imageops::thumbnail;
use crate::ingest::{write_atomic, Dataset};
use crate::layout::{Bounds, Layout2D};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SAMPLES_FILE: &str = "samples.tsv";
const COLUMNS: &str = "z\ttx\tty\tmembers\tsamples\tsprite";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileEntry {
    pub z: usize,
    pub tx: u32,
    pub ty: u32,
    /// Members in layout order.
    pub members: Vec<String>,
    /// Members drawn as thumbnails at this zoom.
    pub samples: Vec<String>,
    /// Sprite sheet path relative to the atlas root.
    pub sprite: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileManifest {
    pub zoom_levels: usize,
    pub base_budget: usize,
    pub points: usize,
    pub bounds: Bounds,
    pub thumbnail_sizes: Vec<u32>,
    /// Non-empty tiles ordered by `(z, tx, ty)`.
    pub tiles: Vec<TileEntry>,
}

impl TileManifest {
    pub fn tile(&self, z: usize, tx: u32, ty: u32) -> Option<&TileEntry> {
        self.tiles
            .binary_search_by(|t| (t.z, t.tx, t.ty).cmp(&(z, tx, ty)))
            .ok()
            .map(|i| &self.tiles[i])
    }

    pub fn tiles_at(&self, z: usize) -> impl Iterator<Item = &TileEntry> {
        self.tiles.iter().filter(move |t| t.z == z)
    }
}

fn tile_stem(z: usize, tx: u32, ty: u32) -> String {
    format!("tiles/{z}/{tx}_{ty}")
}

fn load_thumbnail_source(dataset: &Dataset, id: &str) -> std::result::Result<RgbImage, String> {
    let entry = dataset.entry(id).ok_or("not in dataset")?;
    let path = dataset.image_file(entry).ok_or("no image")?;
    image::open(&path).map(|i| i.to_rgb8()).map_err(|e| e.to_string())
}

/// Mark sampled points whose image cannot be loaded; they are drawn as
/// circles at every zoom.
fn demote_missing(atlas: &mut Atlas, dataset: &Dataset) {
    let failures: Vec<(usize, String)> = atlas
        .order
        .order
        .par_iter()
        .filter_map(|&p| {
            let id = &atlas.ids[p as usize];
            load_thumbnail_source(dataset, id).err().map(|e| (p as usize, e))
        })
        .collect();
    for (p, reason) in failures {
        tracing::warn!(id = %atlas.ids[p], reason, "sampled object has no usable image, drawn as a circle");
        atlas.demoted[p] = true;
    }
}

fn render_sprite(dataset: &Dataset, ids: &[&str], size: u32) -> Result<(RgbImage, String)> {
    let cols = (ids.len() as f64).sqrt().ceil() as u32;
    let rows = (ids.len() as u32).div_ceil(cols);
    let mut sheet = RgbImage::new(cols * size, rows * size);
    let mut map = String::new();
    for (k, id) in ids.iter().enumerate() {
        let img = load_thumbnail_source(dataset, id).map_err(|reason| Error::Decode {
            what: id.to_string(),
            reason,
        })?;
        let thumb = thumbnail(&img, size);
        let (x, y) = ((k as u32 % cols) * size, (k as u32 / cols) * size);
        image::imageops::replace(&mut sheet, &thumb, x as i64, y as i64);
        let _ = writeln!(map, "{id}\t{x}\t{y}\t{size}\t{size}");
    }
    Ok((sheet, map))
}

/// Write the tile pyramid of `atlas` under `out`, rendering sprite sheets
/// from `dataset`. Any previous `tiles/` directory is replaced.
pub fn build_tiles(atlas: &Atlas, dataset: &Dataset, out: &Path) -> Result<TileManifest> {
    let tiles_dir = out.join("tiles");
    if tiles_dir.exists() {
        fs::remove_dir_all(&tiles_dir).at(&tiles_dir)?;
    }
    let params = atlas.params;
    let mut jobs: Vec<(usize, (u32, u32), Vec<u32>)> = Vec::new();
    for z in 0..params.zoom_levels {
        let dir = tiles_dir.join(z.to_string());
        fs::create_dir_all(&dir).at(&dir)?;
        jobs.extend(atlas.tiles_at(z).into_iter().map(|(key, members)| (z, key, members)));
    }
    let tiles: Vec<TileEntry> = jobs
        .into_par_iter()
        .map(|(z, (tx, ty), members)| -> Result<TileEntry> {
            let stem = tile_stem(z, tx, ty);
            let mut pts = String::new();
            let mut samples: Vec<&str> = Vec::new();
            for &p in &members {
                let p = p as usize;
                let [x, y] = atlas.coords()[p];
                let flag = atlas.is_sample(p, z);
                let _ = writeln!(pts, "{}\t{x:.6}\t{y:.6}\t{}", atlas.ids[p], flag as u8);
                if flag {
                    samples.push(&atlas.ids[p]);
                }
            }
            write_atomic(&out.join(format!("{stem}.pts")), pts.as_bytes())?;
            let sprite = if samples.is_empty() {
                None
            } else {
                let (sheet, map) = render_sprite(dataset, &samples, params.thumbnail_size(z))?;
                let png = out.join(format!("{stem}.png"));
                sheet
                    .save_with_format(&png, image::ImageFormat::Png)
                    .map_err(|e| Error::invalid(format!("cannot write {}: {e}", png.display())))?;
                write_atomic(&out.join(format!("{stem}.map")), map.as_bytes())?;
                Some(format!("{stem}.png"))
            };
            Ok(TileEntry {
                z,
                tx,
                ty,
                members: members.iter().map(|&p| atlas.ids[p as usize].clone()).collect(),
                samples: samples.into_iter().map(str::to_string).collect(),
                sprite,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = TileManifest {
        zoom_levels: params.zoom_levels,
        base_budget: params.base_budget,
        points: atlas.len(),
        bounds: atlas.bounds(),
        thumbnail_sizes: (0..params.zoom_levels).map(|z| params.thumbnail_size(z)).collect(),
        tiles,
    };
    write_atomic(&out.join(MANIFEST_FILE), encode_manifest(&manifest, params.leaf_capacity).as_bytes())?;
    write_atomic(&out.join(SAMPLES_FILE), encode_samples(atlas).as_bytes())?;
    Ok(manifest)
}

/// Index, sample and tile a layout in one step.
pub fn build_atlas(layout: &Layout2D, dataset: &Dataset, params: AtlasParams, out: &Path) -> Result<(Atlas, TileManifest)> {
    let mut atlas = Atlas::new(layout, params)?;
    demote_missing(&mut atlas, dataset);
    let manifest = build_tiles(&atlas, dataset, out)?;
    Ok((atlas, manifest))
}

fn encode_manifest(m: &TileManifest, leaf_capacity: usize) -> String {
    let b = &m.bounds;
    let sizes: Vec<String> = m.thumbnail_sizes.iter().map(u32::to_string).collect();
    let mut s = format!(
        "#zoom_levels\t{}\n#base_budget\t{}\n#leaf_capacity\t{leaf_capacity}\n#points\t{}\n#bounds\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n#thumbnail_sizes\t{}\n{COLUMNS}\n",
        m.zoom_levels,
        m.base_budget,
        m.points,
        b.min_x,
        b.min_y,
        b.max_x,
        b.max_y,
        sizes.join(",")
    );
    for t in &m.tiles {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            t.z,
            t.tx,
            t.ty,
            t.members.len(),
            t.samples.len(),
            t.sprite.as_deref().unwrap_or("-")
        );
    }
    s
}

fn encode_samples(atlas: &Atlas) -> String {
    let mut s = String::new();
    for (rank, (&p, &r)) in atlas.order.order.iter().zip(&atlas.order.radii).enumerate() {
        let _ = writeln!(s, "{rank}\t{}\t{r}\t{}", atlas.ids[p as usize], !atlas.demoted[p as usize] as u8);
    }
    s
}

/// Rows of a `.pts` file: `(object_id, [x, y], sample flag)`.
pub fn parse_pts(text: &str) -> Result<Vec<(String, [f64; 2], bool)>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format("malformed tile point row", Some(i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let x: f64 = cols[1].parse().map_err(|_| bad())?;
            let y: f64 = cols[2].parse().map_err(|_| bad())?;
            let flag = match cols[3] {
                "1" => true,
                "0" => false,
                _ => return Err(bad()),
            };
            Ok((cols[0].to_string(), [x, y], flag))
        })
        .collect()
}

/// One thumbnail cell of a sprite sheet, in pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpriteCell {
    pub id: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Rows of a `.map` file.
pub fn parse_sprite_map(text: &str) -> Result<Vec<SpriteCell>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format("malformed sprite map row", Some(i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad());
            }
            let n = |s: &str| s.parse::<u32>().map_err(|_| bad());
            Ok(SpriteCell {
                id: cols[0].to_string(),
                x: n(cols[1])?,
                y: n(cols[2])?,
                w: n(cols[3])?,
                h: n(cols[4])?,
            })
        })
        .collect()
}

fn header_value<'a>(headers: &'a [(String, Vec<String>)], key: &str) -> Result<&'a [String]> {
    headers
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Error::format(format!("manifest lacks #{key}"), None))
}

fn parse_usize(v: &str, line: Option<usize>) -> Result<usize> {
    v.parse().map_err(|_| Error::format(format!("bad count {v:?}"), line))
}

/// Load an atlas written by [`build_tiles`].
pub fn load_atlas(dir: &Path) -> Result<(Atlas, TileManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).at(&manifest_path)?;
    let mut headers: Vec<(String, Vec<String>)> = Vec::new();
    let mut rows = Vec::new();
    let mut seen_columns = false;
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            let mut parts = h.split('\t').map(str::to_string);
            let key = parts.next().unwrap_or_default();
            headers.push((key, parts.collect()));
        } else if line == COLUMNS {
            seen_columns = true;
        } else if seen_columns {
            rows.push((i + 1, line));
        } else {
            return Err(Error::format("unexpected line before column header", Some(i + 1)));
        }
    }
    let one = |key: &str| -> Result<usize> {
        let v = header_value(&headers, key)?;
        parse_usize(v.first().map(String::as_str).unwrap_or(""), None)
    };
    let params = AtlasParams {
        zoom_levels: one("zoom_levels")?,
        base_budget: one("base_budget")?,
        leaf_capacity: one("leaf_capacity")?,
    };
    params.validate()?;
    let points = one("points")?;

    let base = parse_pts(&fs::read_to_string(dir.join("tiles/0/0_0.pts")).at(dir.join("tiles/0/0_0.pts"))?)?;
    if base.len() != points {
        return Err(Error::format(format!("manifest declares {points} points, zoom 0 holds {}", base.len()), None));
    }
    let position: std::collections::HashMap<&str, usize> =
        base.iter().enumerate().map(|(i, r)| (r.0.as_str(), i)).collect();
    let samples_path = dir.join(SAMPLES_FILE);
    let samples_text = fs::read_to_string(&samples_path).at(&samples_path)?;
    let mut order = SampleOrder {
        order: Vec::new(),
        radii: Vec::new(),
    };
    let mut demoted = vec![false; base.len()];
    for (i, line) in samples_text.lines().enumerate() {
        let bad = || Error::format("malformed sample row", Some(i + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 || parse_usize(cols[0], Some(i + 1))? != i {
            return Err(bad());
        }
        let p = *position.get(cols[1]).ok_or_else(bad)?;
        order.order.push(p as u32);
        order.radii.push(cols[2].parse().map_err(|_| bad())?);
        demoted[p] = cols[3] == "0";
    }
    let ids: Vec<String> = base.iter().map(|r| r.0.clone()).collect();
    let coords: Vec<[f64; 2]> = base.iter().map(|r| r.1).collect();
    let atlas = Atlas::from_parts(ids, coords, order, demoted, params)?;

    let mut tiles = Vec::with_capacity(rows.len());
    for (lineno, row) in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::format("malformed tile row", Some(lineno)));
        }
        let z = parse_usize(cols[0], Some(lineno))?;
        let tx = parse_usize(cols[1], Some(lineno))? as u32;
        let ty = parse_usize(cols[2], Some(lineno))? as u32;
        let pts_path = dir.join(format!("{}.pts", tile_stem(z, tx, ty)));
        let pts = parse_pts(&fs::read_to_string(&pts_path).at(&pts_path)?)?;
        if pts.len() != parse_usize(cols[3], Some(lineno))? {
            return Err(Error::format("tile member count disagrees with its point file", Some(lineno)));
        }
        tiles.push(TileEntry {
            z,
            tx,
            ty,
            samples: pts.iter().filter(|r| r.2).map(|r| r.0.clone()).collect(),
            members: pts.into_iter().map(|r| r.0).collect(),
            sprite: (cols[5] != "-").then(|| cols[5].to_string()),
        });
    }
    let manifest = TileManifest {
        zoom_levels: params.zoom_levels,
        base_budget: params.base_budget,
        points,
        bounds: atlas.bounds(),
        thumbnail_sizes: (0..params.zoom_levels).map(|z| params.thumbnail_size(z)).collect(),
        tiles,
    };
    Ok((atlas, manifest))
}
