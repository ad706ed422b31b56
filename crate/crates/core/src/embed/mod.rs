//! Feature vectors for every image in a dataset.

pub mod descriptor;
pub mod format;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use descriptor::{compute_baseline_descriptor, DESCRIPTOR_DIM, DESCRIPTOR_TAG};
pub use format::{read_embeddings, write_embeddings};

use crate::error::{Error, Result};
use crate::ingest::{write_atomic, Dataset};

/// N×D row-major feature matrix with one row per object id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    pub descriptor_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>, descriptor_tag: String) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!(
                "{} values cannot form {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate id {dup} in embedding matrix")));
        }
        Ok(EmbeddingMatrix {
            ids,
            dim,
            data,
            descriptor_tag,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim))
    }

    /// Scale every row to unit L2 norm. Zero rows are rejected.
    pub fn normalize_rows(&mut self) -> Result<()> {
        let dim = self.dim;
        for (i, row) in self.data.chunks_exact_mut(dim).enumerate() {
            let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::format(
                    format!("row {i} ({}) cannot be normalized (norm {norm})", self.ids[i]),
                    None,
                ));
            }
            row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        }
        Ok(())
    }

    /// Rows re-ordered to `order`. Ids in `order` absent here are reported all
    /// at once; rows not named in `order` are dropped.
    pub fn reorder(&self, order: &[String]) -> Result<Self> {
        let position: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let missing: Vec<String> = order
            .iter()
            .filter(|id| !position.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        let mut data = Vec::with_capacity(order.len() * self.dim);
        for id in order {
            data.extend_from_slice(self.row(position[id.as_str()]));
        }
        EmbeddingMatrix::new(order.to_vec(), self.dim, data, self.descriptor_tag.clone())
    }
}

/// Load an externally computed embedding file and align it with `ids`.
pub fn import_embeddings(file: &Path, ids: &[String]) -> Result<EmbeddingMatrix> {
    let mut m = read_embeddings(file)?.reorder(ids)?;
    m.normalize_rows()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedMode {
    Baseline,
    Import(PathBuf),
}

/// Path of the skip log written next to an embedding file.
pub fn skip_log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".skipped");
    PathBuf::from(s)
}

/// Embed every object of a dataset and persist the matrix at `out`.
///
/// In baseline mode, objects without a decodable image are left out and
/// listed (`object_id<TAB>reason`) in the skip log. Row order follows the
/// dataset index regardless of worker scheduling.
pub fn embed_dataset(dataset: &Path, mode: &EmbedMode, out: &Path, binary: bool) -> Result<EmbeddingMatrix> {
    let ds = Dataset::open(dataset)?;
    let (matrix, skipped) = match mode {
        EmbedMode::Import(file) => {
            let ids: Vec<String> = ds.ids().map(str::to_string).collect();
            (import_embeddings(file, &ids)?, Vec::new())
        }
        EmbedMode::Baseline => {
            let rows: Vec<std::result::Result<Vec<f32>, String>> = ds
                .entries()
                .par_iter()
                .map(|entry| {
                    let path = ds.image_file(entry).ok_or_else(|| "no image".to_string())?;
                    let img = image::open(&path).map_err(|e| format!("undecodable image: {e}"))?;
                    compute_baseline_descriptor(&img.to_rgb8()).map_err(|e| e.to_string())
                })
                .collect();
            let mut ids = Vec::new();
            let mut data = Vec::new();
            let mut skipped = Vec::new();
            for (entry, row) in ds.entries().iter().zip(rows) {
                match row {
                    Ok(v) => {
                        ids.push(entry.object_id.clone());
                        data.extend_from_slice(&v);
                    }
                    Err(reason) => skipped.push((entry.object_id.clone(), reason)),
                }
            }
            (
                EmbeddingMatrix::new(ids, DESCRIPTOR_DIM, data, DESCRIPTOR_TAG.to_string())?,
                skipped,
            )
        }
    };
    if matrix.is_empty() {
        return Err(Error::invalid(format!(
            "no decodable images in {} ({} skipped)",
            dataset.display(),
            skipped.len()
        )));
    }
    for (id, reason) in &skipped {
        tracing::warn!(id, reason, "excluded from embedding");
    }
    let log: String = skipped
        .iter()
        .map(|(id, reason)| format!("{id}\t{}\n", reason.replace(['\n', '\t'], " ")))
        .collect();
    write_embeddings(&matrix, out, binary)?;
    write_atomic(&skip_log_path(out), log.as_bytes())?;
    Ok(matrix)
}
