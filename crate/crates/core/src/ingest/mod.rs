//! Harvest a collection into a local dataset directory.

mod dataset;
mod object;
mod source;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

pub use dataset::{
    encode_object, meta_path, read_object, write_atomic, Dataset, DatasetWriter, IndexEntry,
    FAILURES_FILE, INDEX_FILE,
};
pub use object::{image_reference, parse_object, validate_object_id, CollectionObject, ManifestRecord};
pub use source::{
    fetch_manifest, open_source, CollectionSource, DirectorySource, HttpOptions, HttpSource,
    RateLimiter,
};

use crate::error::{Error, Result};

/// Counts for one ingest run.
///
/// `requested = succeeded + failed + skipped_no_image + already_present`.
/// Objects already complete in the destination are not fetched again and are
/// counted as `already_present`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub requested: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub skipped_no_image: usize,
    pub already_present: usize,
    pub bytes_downloaded: u64,
    pub elapsed: f64,
}

impl IngestReport {
    pub fn is_consistent(&self) -> bool {
        self.requested == self.succeeded + self.failed + self.skipped_no_image + self.already_present
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub limit: Option<usize>,
    pub workers: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            limit: None,
            workers: 4,
        }
    }
}

enum Outcome {
    Stored { bytes: u64 },
    NoImage { bytes: u64 },
    AlreadyPresent,
    Failed(String),
}

/// Fetch every enumerated object into `dest`.
///
/// Per-object failures are recorded in the report and in
/// `<dest>/failures.log`; they never abort the batch. Objects that are already
/// complete in `dest` are skipped, which makes re-running idempotent.
pub fn ingest_collection(
    source: &dyn CollectionSource,
    dest: impl AsRef<Path>,
    options: &IngestOptions,
) -> Result<IngestReport> {
    let started = Instant::now();
    let writer = DatasetWriter::create(dest.as_ref())?;

    let mut ids = source.enumerate_ids()?;
    if let Some(limit) = options.limit {
        ids.truncate(limit);
    }

    let outcomes: Vec<Mutex<Option<Outcome>>> = ids.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let workers = options.workers.clamp(1, 64).min(ids.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(id) = ids.get(i) else { break };
                let outcome = ingest_one(source, &writer, id);
                *outcomes[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(outcome);
            });
        }
    });

    let mut report = IngestReport {
        requested: ids.len(),
        ..Default::default()
    };
    let mut failures = String::new();
    for (id, slot) in ids.iter().zip(outcomes) {
        match slot.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(Outcome::Stored { bytes }) => {
                report.succeeded += 1;
                report.bytes_downloaded += bytes;
            }
            Some(Outcome::NoImage { bytes }) => {
                report.skipped_no_image += 1;
                report.bytes_downloaded += bytes;
            }
            Some(Outcome::AlreadyPresent) => report.already_present += 1,
            Some(Outcome::Failed(reason)) => {
                report.failed += 1;
                failures.push_str(&format!("{id}\t{}\n", reason.replace(['\n', '\t'], " ")));
            }
            None => {
                report.failed += 1;
                failures.push_str(&format!("{id}\tworker did not finish\n"));
            }
        }
    }

    writer.rebuild_index()?;
    let failures_path = writer.root().join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        write_atomic(&failures_path, failures.as_bytes())?;
    }

    report.elapsed = started.elapsed().as_secs_f64();
    debug_assert!(report.is_consistent());
    Ok(report)
}

fn ingest_one(source: &dyn CollectionSource, writer: &DatasetWriter, id: &str) -> Outcome {
    if validate_object_id(id).is_err() {
        return Outcome::Failed(format!("unusable object id {id:?}"));
    }
    if writer.is_complete(id) {
        return Outcome::AlreadyPresent;
    }
    let result = (|| -> Result<Outcome> {
        let record = source.fetch_manifest(id)?;
        let obj = parse_object(&record)?;
        if obj.object_id != id {
            return Err(Error::parse(format!(
                "manifest for {id} carries object id {}",
                obj.object_id
            )));
        }
        let manifest_bytes = record.raw_payload.len() as u64;
        let image = match image_reference(&record)? {
            None => None,
            Some(reference) => match source.fetch_image(&reference) {
                Ok(bytes) => Some((bytes, reference)),
                Err(Error::NotFound(what)) => {
                    tracing::info!(id, %what, "image not found");
                    None
                }
                Err(e) => return Err(e),
            },
        };
        match image {
            Some((bytes, reference)) => {
                let ext = image_extension(&bytes, &reference);
                writer.write_object(&obj, &record, Some((&bytes, ext)))?;
                Ok(Outcome::Stored {
                    bytes: manifest_bytes + bytes.len() as u64,
                })
            }
            None => {
                writer.write_object(&obj, &record, None)?;
                Ok(Outcome::NoImage {
                    bytes: manifest_bytes,
                })
            }
        }
    })();
    result.unwrap_or_else(|e| {
        tracing::warn!(id, error = %e, "object failed");
        Outcome::Failed(e.to_string())
    })
}

/// File extension for stored image bytes: sniffed format first, then the
/// reference's own extension.
fn image_extension<'a>(bytes: &[u8], reference: &'a str) -> &'a str {
    if let Ok(format) = image::guess_format(bytes) {
        if let Some(ext) = format.extensions_str().first() {
            return ext;
        }
    }
    let tail = reference.rsplit('/').next().unwrap_or(reference);
    let tail = tail.split(['?', '#']).next().unwrap_or(tail);
    match tail.rsplit_once('.') {
        Some((_, ext)) if !ext.is_empty() && ext.len() <= 5 && ext.chars().all(|c| c.is_ascii_alphanumeric()) => ext,
        _ => "bin",
    }
}
