//! Spatial index, nested Trails samples and a multi-zoom tile pyramid over a
//! 2D layout.
//!
//! Every zoom `z` divides the layout bounds into `2^z × 2^z` tiles. The
//! samples at zoom `z` are the first `min(N, base_budget · 4^z)` points of a
//! single farthest-point ordering, so each zoom's samples contain the
//! previous zoom's. Samples are drawn as thumbnails; the remaining points are
//! drawn as circles.

mod quadtree;
mod sampling;
mod tiles;

use serde::Serialize;

pub use quadtree::{build_index, Node, SpatialIndex, DEFAULT_LEAF_CAPACITY};
pub use sampling::{farthest_point_order, select_samples, SampleOrder, SampleSet};
pub use tiles::{
    build_atlas, build_tiles, load_atlas, parse_pts, parse_sprite_map, SpriteCell, TileEntry, TileManifest, MANIFEST_FILE, SAMPLES_FILE,
};

use crate::error::{Error, Result};
use crate::layout::{Bounds, Layout2D};

pub const DEFAULT_ZOOM_LEVELS: usize = 6;
pub const DEFAULT_BASE_BUDGET: usize = 256;
/// Thumbnail side at the finest zoom; each coarser zoom halves it.
pub const MAX_THUMBNAIL: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AtlasParams {
    pub zoom_levels: usize,
    pub base_budget: usize,
    pub leaf_capacity: usize,
}

impl Default for AtlasParams {
    fn default() -> Self {
        AtlasParams {
            zoom_levels: DEFAULT_ZOOM_LEVELS,
            base_budget: DEFAULT_BASE_BUDGET,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
        }
    }
}

impl AtlasParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.zoom_levels) {
            return Err(Error::invalid("zoom levels must be between 1 and 16"));
        }
        if self.base_budget == 0 {
            return Err(Error::invalid("sample budget must be positive"));
        }
        if self.leaf_capacity == 0 {
            return Err(Error::invalid("leaf capacity must be positive"));
        }
        Ok(())
    }

    /// `min(n, base_budget · 4^z)`.
    pub fn budget(&self, z: usize, n: usize) -> usize {
        let scale = 4usize.checked_pow(z as u32).unwrap_or(usize::MAX);
        self.base_budget.saturating_mul(scale).min(n)
    }

    pub fn thumbnail_size(&self, z: usize) -> u32 {
        let shift = (self.zoom_levels - 1 - z).min(31) as u32;
        (MAX_THUMBNAIL >> shift).max(1)
    }
}

/// Points inside a viewport, split into thumbnails and circles. Both lists
/// follow layout order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Viewport {
    pub samples: Vec<(String, [f64; 2])>,
    pub circles: Vec<[f64; 2]>,
}

/// Immutable atlas state shared by queries.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub params: AtlasParams,
    ids: Vec<String>,
    index: SpatialIndex,
    order: SampleOrder,
    /// Position of each point in the sample order, `u32::MAX` when unsampled.
    rank: Vec<u32>,
    /// Sampled points without a usable image, drawn as circles.
    demoted: Vec<bool>,
}

/// Round to the six decimals the layout and tile files carry, so an atlas
/// rebuilt from disk sees exactly the same coordinates.
pub(crate) fn quantize(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

impl Atlas {
    /// Index and sample a layout. Coordinates are quantized to six decimals.
    pub fn new(layout: &Layout2D, params: AtlasParams) -> Result<Self> {
        params.validate()?;
        let coords: Vec<[f64; 2]> = layout.coords.iter().map(|c| [quantize(c[0]), quantize(c[1])]).collect();
        let n = coords.len();
        let order = farthest_point_order(&coords, params.budget(params.zoom_levels - 1, n));
        Self::from_parts(layout.ids.clone(), coords, order, vec![false; n], params)
    }

    pub(crate) fn from_parts(
        ids: Vec<String>,
        coords: Vec<[f64; 2]>,
        order: SampleOrder,
        demoted: Vec<bool>,
        params: AtlasParams,
    ) -> Result<Self> {
        params.validate()?;
        let index = SpatialIndex::build(&coords, params.leaf_capacity)?;
        let mut rank = vec![u32::MAX; ids.len()];
        for (r, &p) in order.order.iter().enumerate() {
            if (p as usize) >= ids.len() || rank[p as usize] != u32::MAX {
                return Err(Error::invalid(format!("sample order entry {p} is out of range or repeated")));
            }
            rank[p as usize] = r as u32;
        }
        Ok(Atlas {
            params,
            ids,
            index,
            order,
            rank,
            demoted,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        self.index.coords()
    }

    pub fn bounds(&self) -> Bounds {
        self.index.bounds()
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn sample_order(&self) -> &SampleOrder {
        &self.order
    }

    pub fn is_demoted(&self, point: usize) -> bool {
        self.demoted[point]
    }

    pub fn budget(&self, z: usize) -> usize {
        self.params.budget(z, self.len())
    }

    /// Whether `point` is drawn as a thumbnail at zoom `z`.
    pub fn is_sample(&self, point: usize, z: usize) -> bool {
        (self.rank[point] as usize) < self.budget(z) && !self.demoted[point]
    }

    /// Sample set of zoom `z`, before demotion of missing images.
    pub fn samples_at(&self, z: usize) -> SampleSet {
        self.order.prefix(&self.ids, self.budget(z))
    }

    fn check_zoom(&self, z: usize) -> Result<()> {
        if z >= self.params.zoom_levels {
            return Err(Error::invalid(format!(
                "zoom {z} outside 0..{}",
                self.params.zoom_levels
            )));
        }
        Ok(())
    }

    /// Tile of `point` at zoom `z`.
    pub fn tile_of(&self, point: usize, z: usize) -> (u32, u32) {
        let b = self.bounds();
        let tiles = 1u64 << z;
        let cell = |v: f64, lo: f64, extent: f64| -> u32 {
            if extent <= 0.0 {
                return 0;
            }
            let t = ((v - lo) / extent * tiles as f64).floor();
            (t.max(0.0) as u64).min(tiles - 1) as u32
        };
        let p = self.coords()[point];
        (cell(p[0], b.min_x, b.width()), cell(p[1], b.min_y, b.height()))
    }

    /// Member point indices of every non-empty tile at zoom `z`, keyed and
    /// ordered by `(tx, ty)`.
    pub fn tiles_at(&self, z: usize) -> Vec<((u32, u32), Vec<u32>)> {
        let mut keyed: Vec<((u32, u32), u32)> = (0..self.len()).map(|i| (self.tile_of(i, z), i as u32)).collect();
        keyed.sort_unstable();
        let mut out: Vec<((u32, u32), Vec<u32>)> = Vec::new();
        for (key, i) in keyed {
            match out.last_mut() {
                Some((k, members)) if *k == key => members.push(i),
                _ => out.push((key, vec![i])),
            }
        }
        out
    }

    /// Members of one tile, in layout order.
    pub fn tile_members(&self, z: usize, tx: u32, ty: u32) -> Result<Vec<u32>> {
        self.check_zoom(z)?;
        let tiles = 1u64 << z;
        if tx as u64 >= tiles || ty as u64 >= tiles {
            return Err(Error::invalid(format!("tile ({tx}, {ty}) outside zoom {z}")));
        }
        Ok((0..self.len()).filter(|&i| self.tile_of(i, z) == (tx, ty)).map(|i| i as u32).collect())
    }

    /// Points inside `rect`, partitioned into samples at zoom `z` and
    /// circles. A rectangle disjoint from the layout yields an empty result.
    pub fn query_viewport(&self, rect: &Bounds, z: usize) -> Result<Viewport> {
        self.check_zoom(z)?;
        if !(rect.min_x <= rect.max_x && rect.min_y <= rect.max_y) {
            return Err(Error::invalid("viewport rectangle has min > max or NaN corners"));
        }
        let mut vp = Viewport {
            samples: Vec::new(),
            circles: Vec::new(),
        };
        for p in self.index.query(rect) {
            let p = p as usize;
            let c = self.coords()[p];
            if self.is_sample(p, z) {
                vp.samples.push((self.ids[p].clone(), c));
            } else {
                vp.circles.push(c);
            }
        }
        Ok(vp)
    }
}

pub fn query_viewport(atlas: &Atlas, rect: &Bounds, z: usize) -> Result<Viewport> {
    atlas.query_viewport(rect, z)
}
