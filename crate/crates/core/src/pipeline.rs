//! Incremental ingest → embed → layout → atlas orchestration.
//!
//! Each stage records the hashes of its inputs and its configuration in a
//! JSON manifest. A later run skips a stage when both are unchanged and its
//! outputs still exist. Stages write into a `<output>.partial` sibling that
//! replaces the real output only on success, so a failed stage leaves its
//! partial work behind for inspection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{build_atlas, AtlasParams};
use crate::demo::generate_demo_corpus;
use crate::embed::{embed_dataset, read_embeddings, skip_log_path, EmbedMode};
use crate::error::{Error, IoContext, Result};
use crate::ingest::{ingest_collection, open_source, write_atomic, Dataset, HttpOptions, IngestOptions, INDEX_FILE};
use crate::layout::{read_layout, run_layout, write_layout, LayoutConfig};

pub const STAGES: [&str; 4] = ["ingest", "embed", "layout", "atlas"];

/// Resolved pipeline settings. Keys in the config file match the long flag
/// names of the stage subcommands (`n-neighbors`, `base-budget`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory against which relative paths resolve.
    pub base_dir: PathBuf,
    /// Collection URL or directory, as written in the config.
    pub source: Option<String>,
    /// Generate a demo corpus of this size at `source` when it is absent.
    pub demo: Option<usize>,
    pub demo_seed: u64,
    pub dataset: String,
    pub embeddings: String,
    pub layout_path: String,
    pub atlas: String,
    pub manifest: String,
    pub limit: Option<usize>,
    pub workers: usize,
    pub import: Option<String>,
    pub binary: bool,
    pub layout: LayoutConfig,
    pub atlas_params: AtlasParams,
}

impl PipelineConfig {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            base_dir: base_dir.into(),
            source: None,
            demo: None,
            demo_seed: 0,
            dataset: "dataset".into(),
            embeddings: "embeddings.emb".into(),
            layout_path: "layout.lay".into(),
            atlas: "atlas".into(),
            manifest: "pipeline-manifest.json".into(),
            limit: None,
            workers: IngestOptions::default().workers,
            import: None,
            binary: false,
            layout: LayoutConfig::default(),
            atlas_params: AtlasParams::default(),
        }
    }

    /// Parse `key = value` lines; `#` starts a comment. Later keys win.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config = PipelineConfig::new(base_dir);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("expected key = value, got {line:?}"), Some(n + 1)))?;
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::format(m, Some(n + 1)),
                other => other,
            })?;
        }
        Ok(config)
    }

    /// Read a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::parse(&text, if base.as_os_str().is_empty() { PathBuf::from(".") } else { base })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::invalid(format!("{key}: expected true or false, got {value:?}"))),
            }
        }
        let key = key.replace('_', "-");
        match key.as_str() {
            "source" => self.source = Some(value.to_string()),
            "demo" => self.demo = Some(num(&key, value)?),
            "demo-seed" => self.demo_seed = num(&key, value)?,
            "dataset" => self.dataset = value.to_string(),
            "embeddings" | "out-embeddings" => self.embeddings = value.to_string(),
            "layout" => self.layout_path = value.to_string(),
            "atlas" => self.atlas = value.to_string(),
            "manifest" => self.manifest = value.to_string(),
            "limit" => self.limit = Some(num(&key, value)?),
            "workers" => self.workers = num(&key, value)?,
            "import" => self.import = Some(value.to_string()),
            "binary" => self.binary = flag(&key, value)?,
            "n-neighbors" => self.layout.n_neighbors = num(&key, value)?,
            "min-dist" => self.layout.min_dist = num(&key, value)?,
            "n-epochs" => self.layout.n_epochs = num(&key, value)?,
            "learning-rate" => self.layout.learning_rate = num(&key, value)?,
            "negative-samples" => self.layout.negative_samples = num(&key, value)?,
            "seed" => self.layout.seed = num(&key, value)?,
            "init" => self.layout.init = value.parse()?,
            "knn-mode" => {
                self.layout.knn_mode = match value {
                    "auto" => None,
                    other => Some(other.parse()?),
                }
            }
            "parallel" => self.layout.parallel = flag(&key, value)?,
            "zoom-levels" => self.atlas_params.zoom_levels = num(&key, value)?,
            "base-budget" => self.atlas_params.base_budget = num(&key, value)?,
            "leaf-capacity" => self.atlas_params.leaf_capacity = num(&key, value)?,
            other => return Err(Error::invalid(format!("unknown pipeline key {other:?}"))),
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn source_is_remote(&self) -> bool {
        self.source
            .as_deref()
            .is_some_and(|s| s.starts_with("http://") || s.starts_with("https://"))
    }

    fn validate(&self) -> Result<()> {
        if self.source.is_none() {
            return Err(Error::invalid("pipeline config needs a source"));
        }
        if self.demo == Some(0) {
            return Err(Error::invalid("demo size must be at least 1"));
        }
        self.layout.validate()?;
        self.atlas_params.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: BTreeMap<String, String>,
    pub config: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// UTC seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stages: Vec<StageRecord>,
}

impl PipelineManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|s| s.stage == record.stage) {
            Some(slot) => *slot = record,
            None => self.stages.push(record),
        }
        self.stages
            .sort_by_key(|s| STAGES.iter().position(|n| *n == s.stage).unwrap_or(STAGES.len()));
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).at(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub manifest: PipelineManifest,
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).at(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// SHA-256 over every regular file below `root`, in path order. Each file
/// contributes its relative path, length and bytes. Fetch provenance files
/// (`*.src`, which carry wall-clock fetch times) are left out.
pub fn hash_tree(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_some_and(|e| e == "src") {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        let bytes = fs::read(path).at(path)?;
        let name = rel.to_string_lossy().replace('\\', "/");
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        hash_tree(path)
    } else {
        hash_file(path)
    }
}

/// `foo/bar` → `foo/bar.partial`.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn remove_any(path: &Path) -> Result<()> {
    if path.is_dir() {
        fs::remove_dir_all(path).at(path)
    } else if path.exists() {
        fs::remove_file(path).at(path)
    } else {
        Ok(())
    }
}

fn promote(partial: &Path, dest: &Path) -> Result<()> {
    remove_any(dest)?;
    fs::rename(partial, dest).at(dest)
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Stage {
    inputs: BTreeMap<String, String>,
    config: BTreeMap<String, String>,
    outputs: Vec<(&'static str, PathBuf)>,
}

fn echo(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn up_to_date(stage: &Stage, previous: Option<&StageRecord>) -> bool {
    previous.is_some_and(|p| p.inputs == stage.inputs && p.config == stage.config)
        && stage.outputs.iter().all(|(_, p)| p.exists())
}

/// Run every stage that is out of date, in dependency order.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let source_text = config.source.clone().expect("validated");
    let source_path = config.resolve(&source_text);
    let dataset = config.resolve(&config.dataset);
    let embeddings = config.resolve(&config.embeddings);
    let layout_path = config.resolve(&config.layout_path);
    let atlas_dir = config.resolve(&config.atlas);
    let manifest_path = config.resolve(&config.manifest);

    if let Some(n) = config.demo {
        if !config.source_is_remote() && !source_path.join(INDEX_FILE).is_file() {
            tracing::info!(n, path = %source_path.display(), "generating demo corpus");
            generate_demo_corpus(config.demo_seed, n, &source_path)?;
        }
    }

    let mut manifest = if manifest_path.is_file() {
        PipelineManifest::read(&manifest_path)?
    } else {
        PipelineManifest::default()
    };
    let mut report = PipelineReport {
        executed: Vec::new(),
        skipped: Vec::new(),
        manifest: PipelineManifest::default(),
    };

    for name in STAGES {
        let stage = match name {
            "ingest" => {
                let source_hash = if config.source_is_remote() {
                    format!("{:x}", Sha256::digest(source_text.as_bytes()))
                } else {
                    hash_tree(&source_path)?
                };
                Stage {
                    inputs: echo(&[("source", source_hash)]),
                    config: echo(&[
                        ("source", source_text.clone()),
                        ("limit", config.limit.map(|l| l.to_string()).unwrap_or_else(|| "none".into())),
                    ]),
                    outputs: vec![("dataset", dataset.clone())],
                }
            }
            "embed" => {
                let mut inputs = vec![("dataset", hash_tree(&dataset)?)];
                if let Some(file) = &config.import {
                    inputs.push(("import", hash_file(&config.resolve(file))?));
                }
                Stage {
                    inputs: echo(&inputs),
                    config: echo(&[
                        ("mode", if config.import.is_some() { "import" } else { "baseline" }.into()),
                        ("binary", config.binary.to_string()),
                    ]),
                    outputs: vec![("embeddings", embeddings.clone())],
                }
            }
            "layout" => {
                let l = &config.layout;
                Stage {
                    inputs: echo(&[("embeddings", hash_file(&embeddings)?)]),
                    config: echo(&[
                        ("n-neighbors", l.n_neighbors.to_string()),
                        ("min-dist", l.min_dist.to_string()),
                        ("n-epochs", l.n_epochs.to_string()),
                        ("learning-rate", l.learning_rate.to_string()),
                        ("negative-samples", l.negative_samples.to_string()),
                        ("seed", l.seed.to_string()),
                        ("init", l.init.to_string()),
                        ("knn-mode", l.knn_mode.map(|m| m.to_string()).unwrap_or_else(|| "auto".into())),
                        ("parallel", l.parallel.to_string()),
                    ]),
                    outputs: vec![("layout", layout_path.clone())],
                }
            }
            _ => {
                let a = &config.atlas_params;
                Stage {
                    inputs: echo(&[("layout", hash_file(&layout_path)?), ("dataset", hash_tree(&dataset)?)]),
                    config: echo(&[
                        ("zoom-levels", a.zoom_levels.to_string()),
                        ("base-budget", a.base_budget.to_string()),
                        ("leaf-capacity", a.leaf_capacity.to_string()),
                    ]),
                    outputs: vec![("atlas", atlas_dir.clone())],
                }
            }
        };

        if up_to_date(&stage, manifest.stage(name)) {
            tracing::info!(stage = name, "up to date");
            report.skipped.push(name.to_string());
            continue;
        }
        tracing::info!(stage = name, "running");
        let started_at = now();
        let (_, out) = &stage.outputs[0];
        let partial = partial_path(out);
        remove_any(&partial)?;
        let result = match name {
            "ingest" => {
                let spec = if config.source_is_remote() {
                    source_text.clone()
                } else {
                    source_path.to_string_lossy().into_owned()
                };
                let source = open_source(&spec, HttpOptions::default());
                let options = IngestOptions {
                    limit: config.limit,
                    workers: config.workers,
                };
                ingest_collection(source.as_ref(), &partial, &options).map(|r| {
                    if r.failed > 0 {
                        tracing::warn!(failed = r.failed, "some objects failed to ingest");
                    }
                })
            }
            "embed" => {
                let mode = match &config.import {
                    Some(file) => EmbedMode::Import(config.resolve(file)),
                    None => EmbedMode::Baseline,
                };
                embed_dataset(&dataset, &mode, &partial, config.binary).and_then(|_| {
                    let log = skip_log_path(&partial);
                    promote(&log, &skip_log_path(out))
                })
            }
            "layout" => read_embeddings(&embeddings)
                .and_then(|m| run_layout(&m, &config.layout))
                .and_then(|l| write_layout(&l, &partial)),
            _ => Dataset::open(&dataset).and_then(|ds| {
                let layout = read_layout(&layout_path)?;
                build_atlas(&layout, &ds, config.atlas_params, &partial).map(|_| ())
            }),
        };
        if let Err(e) = result {
            return Err(Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            });
        }
        promote(&partial, out)?;

        let mut outputs = BTreeMap::new();
        for (role, path) in &stage.outputs {
            outputs.insert(role.to_string(), hash_path(path)?);
        }
        manifest.upsert(StageRecord {
            stage: name.to_string(),
            inputs: stage.inputs,
            config: stage.config,
            outputs,
            started_at,
            finished_at: now(),
        });
        manifest.write(&manifest_path)?;
        report.executed.push(name.to_string());
    }
    if !manifest_path.is_file() {
        manifest.write(&manifest_path)?;
    }
    report.manifest = manifest;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_and_comments() {
        let text = "source = corpus  # local\n\nn_neighbors = 10\nbase-budget=32\nknn-mode = exact\n";
        let c = PipelineConfig::parse(text, "/work").unwrap();
        assert_eq!(c.source.as_deref(), Some("corpus"));
        assert_eq!(c.layout.n_neighbors, 10);
        assert_eq!(c.atlas_params.base_budget, 32);
        assert_eq!(c.resolve("corpus"), PathBuf::from("/work/corpus"));
        assert_eq!(c.resolve("/abs"), PathBuf::from("/abs"));
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        match PipelineConfig::parse("source = a\nbogus = 1\n", ".") {
            Err(Error::Format { line: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(PipelineConfig::parse("no equals sign", ".").is_err());
        assert!(PipelineConfig::parse("seed = x", ".").is_err());
    }

    #[test]
    fn tree_hash_ignores_provenance_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("m")).unwrap();
        fs::write(dir.path().join("m/a.raw"), b"x").unwrap();
        let before = hash_tree(dir.path()).unwrap();
        fs::write(dir.path().join("m/a.src"), b"fetched at 123").unwrap();
        assert_eq!(hash_tree(dir.path()).unwrap(), before);
        fs::write(dir.path().join("m/a.raw"), b"y").unwrap();
        assert_ne!(hash_tree(dir.path()).unwrap(), before);
    }
}
