use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One museum object as stored in a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionObject {
    pub object_id: String,
    /// Relative to the dataset root; empty when the object has no image.
    pub image_path: String,
    pub title: String,
    pub description: String,
    pub attribution: String,
    pub date: String,
    pub classification: String,
    pub credit: String,
    pub authors: Vec<String>,
    pub subjects: Vec<String>,
    pub medium: String,
    pub dimensions: String,
    pub provenance: String,
}

/// A manifest document exactly as it was fetched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub raw_payload: Vec<u8>,
    pub source_url: String,
    /// UTC seconds.
    pub fetched_at: u64,
}

impl ManifestRecord {
    pub fn new(raw_payload: Vec<u8>, source_url: impl Into<String>) -> Self {
        let fetched_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ManifestRecord {
            raw_payload,
            source_url: source_url.into(),
            fetched_at,
        }
    }

    /// Decode the payload as a JSON object.
    pub fn document(&self) -> Result<Map<String, Value>> {
        let value: Value = serde_json::from_slice(&self.raw_payload).map_err(|e| Error::Parse {
            message: format!("malformed manifest from {}: {e}", self.source_url),
            location: Some(format!(
                "line {} column {} (byte {})",
                e.line(),
                e.column(),
                byte_offset(&self.raw_payload, e.line(), e.column())
            )),
        })?;
        match value {
            Value::Object(map) => Ok(map),
            other => Err(Error::parse(format!(
                "manifest from {} is a {}, not a document",
                self.source_url,
                json_kind(&other)
            ))),
        }
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (n, chunk) in bytes.split(|&b| b == b'\n').enumerate() {
        if n + 1 == line {
            return offset + column.saturating_sub(1).min(chunk.len());
        }
        offset += chunk.len() + 1;
    }
    bytes.len()
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

const ID_KEYS: &[&str] = &["object_id", "objectid", "id"];
const IMAGE_KEYS: &[&str] = &["image", "primaryimageurl", "image_url"];

/// Extract a [`CollectionObject`] from a fetched manifest.
///
/// Absent metadata fields become empty values. Both the generic field names
/// and the museum API's spellings (`dated`, `creditline`, `people`, ...) are
/// recognised. `image_path` is left empty; it is assigned once the image has
/// been stored locally.
pub fn parse_object(record: &ManifestRecord) -> Result<CollectionObject> {
    let doc = record.document()?;

    let object_id = ID_KEYS
        .iter()
        .find_map(|k| doc.get(*k).and_then(scalar_text))
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(format!("manifest from {} has no object id", record.source_url)))?;
    validate_object_id(&object_id)?;

    let text = |keys: &[&str]| -> String {
        keys.iter()
            .find_map(|k| doc.get(*k).map(value_text))
            .unwrap_or_default()
    };
    let list = |keys: &[&str]| -> Vec<String> {
        keys.iter()
            .find_map(|k| doc.get(*k).map(value_list))
            .unwrap_or_default()
    };

    Ok(CollectionObject {
        object_id,
        image_path: String::new(),
        title: text(&["title", "label"]),
        description: text(&["description", "summary"]),
        attribution: text(&["attribution"]),
        date: text(&["date", "dated"]),
        classification: text(&["classification"]),
        credit: text(&["credit", "creditline"]),
        authors: list(&["authors", "people"]),
        subjects: list(&["subjects", "subject"]),
        medium: text(&["medium"]),
        dimensions: text(&["dimensions"]),
        provenance: text(&["provenance"]),
    })
}

/// The image reference (URL or source-relative path) named by a manifest.
pub fn image_reference(record: &ManifestRecord) -> Result<Option<String>> {
    let doc = record.document()?;
    Ok(IMAGE_KEYS
        .iter()
        .find_map(|k| doc.get(*k).and_then(scalar_text))
        .filter(|s| !s.is_empty()))
}

/// Object ids double as file names inside a dataset.
pub fn validate_object_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.starts_with('.')
        || id
            .chars()
            .any(|c| matches!(c, '/' | '\\' | '\0' | '\t' | '\n' | '\r' | ':'));
    if bad {
        Err(Error::parse(format!("object id {id:?} is not usable as a file name")))
    } else {
        Ok(())
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Flatten a metadata value into display text. Language maps (`{"en": [..]}`)
/// and lists of named records are common in collection APIs.
fn value_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.trim().to_string(),
        Value::Array(items) => items
            .iter()
            .map(value_text)
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("; "),
        Value::Object(map) => ["name", "displayname", "value", "en", "none"]
            .iter()
            .find_map(|k| map.get(*k).map(value_text))
            .unwrap_or_default(),
    }
}

fn value_list(v: &Value) -> Vec<String> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(value_text)
            .filter(|s| !s.is_empty())
            .collect(),
        Value::Null => Vec::new(),
        other => {
            let s = value_text(other);
            if s.is_empty() {
                Vec::new()
            } else {
                vec![s]
            }
        }
    }
}
