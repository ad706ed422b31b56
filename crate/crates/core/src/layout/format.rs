//! Layout file: `LAY1 <N> <seed> <n_neighbors> <min_dist> <n_epochs>` then
//! one `object_id<TAB>x<TAB>y` line per point with six decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::ingest::write_atomic;
use crate::layout::{Layout2D, LayoutConfig};

pub const LAYOUT_MAGIC: &str = "LAY1";

pub fn encode_layout(layout: &Layout2D) -> String {
    let c = &layout.config;
    let mut out = format!(
        "{LAYOUT_MAGIC} {} {} {} {} {}\n",
        layout.len(),
        c.seed,
        c.n_neighbors,
        c.min_dist,
        c.n_epochs
    );
    for (id, [x, y]) in layout.ids.iter().zip(&layout.coords) {
        let _ = writeln!(out, "{id}\t{x:.6}\t{y:.6}");
    }
    out
}

fn field<T: std::str::FromStr>(value: Option<&str>, name: &str, line: usize) -> Result<T> {
    value
        .ok_or_else(|| Error::format(format!("missing {name}"), Some(line)))?
        .parse()
        .map_err(|_| Error::format(format!("bad {name}"), Some(line)))
}

pub fn decode_layout(text: &str) -> Result<Layout2D> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty layout file", Some(1)))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(LAYOUT_MAGIC) {
        return Err(Error::format(format!("expected {LAYOUT_MAGIC} header"), Some(1)));
    }
    let n: usize = field(parts.next(), "point count", 1)?;
    let config = LayoutConfig {
        seed: field(parts.next(), "seed", 1)?,
        n_neighbors: field(parts.next(), "n_neighbors", 1)?,
        min_dist: field(parts.next(), "min_dist", 1)?,
        n_epochs: field(parts.next(), "n_epochs", 1)?,
        ..LayoutConfig::default()
    };
    let mut ids = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let mut cols = line.split('\t');
        let id = cols.next().filter(|s| !s.is_empty());
        let id = id.ok_or_else(|| Error::format("missing object id", Some(lineno)))?;
        let x: f64 = field(cols.next(), "x", lineno)?;
        let y: f64 = field(cols.next(), "y", lineno)?;
        if cols.next().is_some() {
            return Err(Error::format("trailing columns", Some(lineno)));
        }
        ids.push(id.to_string());
        coords.push([x, y]);
    }
    if ids.len() != n {
        return Err(Error::format(format!("header declares {n} points, found {}", ids.len()), None));
    }
    Layout2D::new(ids, coords, config)
}

pub fn write_layout(layout: &Layout2D, path: &Path) -> Result<()> {
    write_atomic(path, encode_layout(layout).as_bytes())
}

pub fn read_layout(path: &Path) -> Result<Layout2D> {
    let text = std::fs::read_to_string(path).at(path)?;
    decode_layout(&text)
}
