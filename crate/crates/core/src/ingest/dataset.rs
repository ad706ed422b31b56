//! On-disk dataset layout.
//!
//! ```text
//! <root>/objects/<id>.meta     JSON metadata document
//! <root>/images/<id>.<ext>     original image bytes
//! <root>/manifests/<id>.raw    manifest exactly as fetched
//! <root>/manifests/<id>.src    provenance: source url and fetch time
//! <root>/index.tsv             object_id, image path, title
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::ingest::object::{validate_object_id, CollectionObject, ManifestRecord};

pub const INDEX_FILE: &str = "index.tsv";
pub const FAILURES_FILE: &str = "failures.log";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub object_id: String,
    pub image_path: String,
    pub title: String,
}

/// Read access to a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    entries: Vec<IndexEntry>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let index = root.join(INDEX_FILE);
        let text = fs::read_to_string(&index).at(&index)?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(id), Some(image), title) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::format("index row needs at least 2 columns", Some(n + 1)));
            };
            entries.push(IndexEntry {
                object_id: id.to_string(),
                image_path: image.to_string(),
                title: title.unwrap_or_default().to_string(),
            });
        }
        Ok(Dataset { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.object_id.as_str())
    }

    pub fn entry(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.object_id == id)
    }

    /// Absolute path of an object's image, if it has one.
    pub fn image_file(&self, entry: &IndexEntry) -> Option<PathBuf> {
        (!entry.image_path.is_empty()).then(|| self.root.join(&entry.image_path))
    }

    pub fn meta_path(&self, id: &str) -> PathBuf {
        meta_path(&self.root, id)
    }

    pub fn object(&self, id: &str) -> Result<CollectionObject> {
        read_object(&self.root, id)
    }
}

pub fn meta_path(root: &Path, id: &str) -> PathBuf {
    root.join("objects").join(format!("{id}.meta"))
}

pub fn read_object(root: &Path, id: &str) -> Result<CollectionObject> {
    validate_object_id(id)?;
    let path = meta_path(root, id);
    let bytes = fs::read(&path).at(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        message: format!("{}: {e}", path.display()),
        location: Some(format!("line {} column {}", e.line(), e.column())),
    })
}

pub fn encode_object(obj: &CollectionObject) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(obj).expect("metadata serializes");
    bytes.push(b'\n');
    bytes
}

/// Write access to a dataset directory. Individual object writes may happen
/// from several threads; [`DatasetWriter::rebuild_index`] is called once the
/// batch is done.
#[derive(Debug, Clone)]
pub struct DatasetWriter {
    root: PathBuf,
}

impl DatasetWriter {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for sub in ["objects", "images", "manifests"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).at(&dir)?;
        }
        Ok(DatasetWriter { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// True when the object's metadata and (if referenced) image are both on
    /// disk.
    pub fn is_complete(&self, id: &str) -> bool {
        match read_object(&self.root, id) {
            Ok(obj) => obj.image_path.is_empty() || self.root.join(&obj.image_path).is_file(),
            Err(_) => false,
        }
    }

    /// Persist one object. The metadata document is written last so that its
    /// presence marks a finished object.
    pub fn write_object(
        &self,
        obj: &CollectionObject,
        record: &ManifestRecord,
        image: Option<(&[u8], &str)>,
    ) -> Result<CollectionObject> {
        validate_object_id(&obj.object_id)?;
        let id = &obj.object_id;
        let mut obj = obj.clone();
        obj.image_path.clear();
        if let Some((bytes, ext)) = image {
            let rel = format!("images/{id}.{ext}");
            write_atomic(&self.root.join(&rel), bytes)?;
            obj.image_path = rel;
        }
        let manifests = self.root.join("manifests");
        write_atomic(&manifests.join(format!("{id}.raw")), &record.raw_payload)?;
        write_atomic(
            &manifests.join(format!("{id}.src")),
            format!("{}\t{}\n", record.source_url, record.fetched_at).as_bytes(),
        )?;
        write_atomic(&meta_path(&self.root, id), &encode_object(&obj))?;
        Ok(obj)
    }

    /// Regenerate `index.tsv` from the metadata documents, sorted by id.
    pub fn rebuild_index(&self) -> Result<usize> {
        let dir = self.root.join("objects");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).at(&dir)? {
            let path = entry.at(&dir)?.path();
            if path.extension().is_some_and(|e| e == "meta") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        let mut out = String::new();
        for id in &ids {
            let obj = read_object(&self.root, id)?;
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                obj.object_id,
                obj.image_path,
                sanitize_cell(&obj.title)
            ));
        }
        write_atomic(&self.root.join(INDEX_FILE), out.as_bytes())?;
        Ok(ids.len())
    }
}

fn sanitize_cell(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

/// Write via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}
