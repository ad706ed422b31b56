//! Collection sources: where object ids, manifests and images come from.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;

use crate::error::{Error, IoContext, Result};
use crate::ingest::object::ManifestRecord;

/// Enumerate ids, fetch a manifest, fetch an image.
pub trait CollectionSource: Sync {
    fn describe(&self) -> String;

    fn enumerate_ids(&self) -> Result<Vec<String>>;

    fn fetch_manifest(&self, object_id: &str) -> Result<ManifestRecord>;

    /// Fetch image bytes for a reference taken from a manifest. A missing
    /// image is [`Error::NotFound`].
    fn fetch_image(&self, reference: &str) -> Result<Vec<u8>>;
}

#[derive(Debug, Clone)]
pub struct HttpOptions {
    /// Requests per second shared by all workers; `<= 0` disables limiting.
    pub rate: f64,
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Sent as `X-Api-Key` when present.
    pub api_key: Option<String>,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            rate: 4.0,
            retries: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
            api_key: None,
        }
    }
}

/// Spaces request starts at least `1 / rate` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> Self {
        let interval = (rate > 0.0 && rate.is_finite()).then(|| Duration::from_secs_f64(1.0 / rate));
        RateLimiter {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// Generic IIIF-flavoured JSON API:
///
/// * `GET {base}/objects` lists ids, either as a bare array or as
///   `{"ids": [...], "next": <url or null>}` pages;
/// * `GET {base}/objects/{id}` returns the object manifest;
/// * image references in manifests are absolute URLs or paths relative to
///   `{base}`.
pub struct HttpSource {
    base: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
    options: HttpOptions,
}

const MAX_BODY: u64 = 512 * 1024 * 1024;

impl HttpSource {
    pub fn new(base: impl Into<String>, options: HttpOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(options.timeout))
            .build();
        HttpSource {
            base: base.into().trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
            limiter: RateLimiter::new(options.rate),
            options,
        }
    }

    fn resolve(&self, reference: &str) -> String {
        if reference.contains("://") {
            reference.to_string()
        } else {
            format!("{}/{}", self.base, reference.trim_start_matches('/'))
        }
    }

    /// GET with rate limiting and bounded exponential-backoff retries.
    /// Retries transport errors, 429 and 5xx; 404 is returned immediately.
    pub fn get(&self, url: &str) -> Result<Vec<u8>> {
        let attempts = self.options.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.options.backoff * 2u32.saturating_pow(attempt - 1));
            }
            self.limiter.acquire();
            let mut req = self.agent.get(url);
            if let Some(key) = &self.options.api_key {
                req = req.header("X-Api-Key", key);
            }
            match req.call() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200..=299 => {
                            match resp.into_body().with_config().limit(MAX_BODY).read_to_vec() {
                                Ok(body) => return Ok(body),
                                Err(e) => last = format!("reading body: {e}"),
                            }
                        }
                        404 | 410 => return Err(Error::NotFound(url.to_string())),
                        429 | 500..=599 => last = format!("HTTP {status}"),
                        _ => {
                            return Err(Error::Transient {
                                url: url.to_string(),
                                attempts: attempt + 1,
                                reason: format!("HTTP {status}"),
                            })
                        }
                    }
                }
                Err(e) => last = e.to_string(),
            }
            tracing::debug!(url, attempt, reason = %last, "request failed");
        }
        Err(Error::Transient {
            url: url.to_string(),
            attempts,
            reason: last,
        })
    }
}

impl CollectionSource for HttpSource {
    fn describe(&self) -> String {
        self.base.clone()
    }

    fn enumerate_ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        let mut next = Some(format!("{}/objects", self.base));
        let mut pages = 0;
        while let Some(url) = next.take() {
            pages += 1;
            if pages > 1_000_000 {
                return Err(Error::parse("id listing does not terminate"));
            }
            let body = self.get(&url)?;
            let record = ManifestRecord::new(body, url.clone());
            let value: Value = serde_json::from_slice(&record.raw_payload).map_err(|e| Error::Parse {
                message: format!("id listing from {url}: {e}"),
                location: Some(format!("line {} column {}", e.line(), e.column())),
            })?;
            let (list, more) = match value {
                Value::Array(items) => (items, None),
                Value::Object(mut map) => {
                    let list = match map.remove("ids") {
                        Some(Value::Array(items)) => items,
                        _ => return Err(Error::parse(format!("id listing from {url} lacks an `ids` array"))),
                    };
                    let more = match map.remove("next") {
                        Some(Value::String(s)) if !s.is_empty() => Some(self.resolve(&s)),
                        _ => None,
                    };
                    (list, more)
                }
                _ => return Err(Error::parse(format!("id listing from {url} is not a list"))),
            };
            for item in list {
                match item {
                    Value::String(s) => ids.push(s),
                    Value::Number(n) => ids.push(n.to_string()),
                    other => return Err(Error::parse(format!("non-scalar id {other} in listing"))),
                }
            }
            next = more;
        }
        Ok(ids)
    }

    fn fetch_manifest(&self, object_id: &str) -> Result<ManifestRecord> {
        if object_id.is_empty() {
            return Err(Error::invalid("empty object id"));
        }
        let url = format!("{}/objects/{}", self.base, object_id);
        let body = self.get(&url)?;
        Ok(ManifestRecord::new(body, url))
    }

    fn fetch_image(&self, reference: &str) -> Result<Vec<u8>> {
        self.get(&self.resolve(reference))
    }
}

/// Fetch one manifest from an HTTP endpoint with default politeness settings.
pub fn fetch_manifest(endpoint: &str, object_id: &str) -> Result<ManifestRecord> {
    HttpSource::new(endpoint, HttpOptions::default()).fetch_manifest(object_id)
}

/// A local directory holding `manifests/<id>.raw` (or `.json`) documents whose
/// image references are paths relative to the directory. Any dataset written
/// by this crate is also a valid directory source.
pub struct DirectorySource {
    root: PathBuf,
}

impl DirectorySource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirectorySource { root: root.into() }
    }

    fn manifest_path(&self, id: &str) -> Option<PathBuf> {
        ["raw", "json"]
            .iter()
            .map(|ext| self.root.join("manifests").join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
    }
}

impl CollectionSource for DirectorySource {
    fn describe(&self) -> String {
        self.root.display().to_string()
    }

    fn enumerate_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("manifests");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).at(&dir)? {
            let path = entry.at(&dir)?.path();
            let is_manifest = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e == "raw" || e == "json");
            if is_manifest {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    fn fetch_manifest(&self, object_id: &str) -> Result<ManifestRecord> {
        let path = self
            .manifest_path(object_id)
            .ok_or_else(|| Error::NotFound(format!("manifest for {object_id} in {}", self.root.display())))?;
        let bytes = fs::read(&path).at(&path)?;
        Ok(ManifestRecord::new(bytes, format!("file://{}", path.display())))
    }

    fn fetch_image(&self, reference: &str) -> Result<Vec<u8>> {
        let rel = Path::new(reference);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(Error::invalid(format!("image reference {reference:?} escapes the source directory")));
        }
        let path = self.root.join(rel);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::NotFound(path.display().to_string()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

/// Pick an adapter from a `--source` argument.
pub fn open_source(source: &str, options: HttpOptions) -> Box<dyn CollectionSource> {
    if source.starts_with("http://") || source.starts_with("https://") {
        Box::new(HttpSource::new(source, options))
    } else {
        Box::new(DirectorySource::new(source))
    }
}
