//! `cartographer`: build, serve and drive a zoomable map of an image
//! collection.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 when a stage fails.

mod gesture;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use cartographer_core::atlas::{build_atlas, AtlasParams, DEFAULT_BASE_BUDGET, DEFAULT_LEAF_CAPACITY, DEFAULT_ZOOM_LEVELS};
use cartographer_core::demo::generate_demo_corpus;
use cartographer_core::embed::{embed_dataset, read_embeddings, EmbedMode};
use cartographer_core::ingest::{ingest_collection, open_source, Dataset, HttpOptions, IngestOptions};
use cartographer_core::layout::{
    compute_trustworthiness, read_layout, run_layout, write_layout, InitMode, KnnMode, LayoutConfig,
};
use cartographer_core::pipeline::{run_pipeline, PipelineConfig};

#[derive(Parser)]
#[command(name = "cartographer", version, about = "Map an image collection into a zoomable 2D atlas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest a collection API or directory into a local dataset.
    Ingest(IngestArgs),
    /// Compute one descriptor per image, or import external embeddings.
    Embed(EmbedArgs),
    /// Build the kNN graph and optimize a 2D layout.
    Layout(LayoutArgs),
    /// Sample, index and tile a layout.
    Atlas(AtlasArgs),
    /// Serve the dataset, layout and atlas over HTTP.
    Serve(ServeArgs),
    /// Train the gesture classifier on a labeled pose stream.
    GestureTrain(gesture::TrainArgs),
    /// Report classifier accuracy on a labeled pose stream.
    GestureEval(gesture::EvalArgs),
    /// Turn a pose stream into interface events.
    GestureRun(gesture::RunArgs),
    /// Generate a procedural demo collection.
    Demo(DemoArgs),
    /// Run ingest, embed, layout and atlas incrementally from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Collection API base URL or local directory.
    #[arg(long)]
    source: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Requests per second against a remote source.
    #[arg(long, default_value_t = 4.0)]
    rate: f64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, env = "CARTOGRAPHER_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Import precomputed embeddings instead of computing descriptors.
    #[arg(long)]
    import: Option<PathBuf>,
    /// Write the binary format.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    n_neighbors: usize,
    #[arg(long, default_value_t = 0.1)]
    min_dist: f64,
    #[arg(long, default_value_t = 200)]
    n_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    negative_samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "random", value_parser = parse_init)]
    init: InitMode,
    /// exact, nn-descent or auto.
    #[arg(long, default_value = "auto")]
    knn_mode: String,
    /// Lock-free parallel optimization (faster, not bit-reproducible).
    #[arg(long)]
    parallel: bool,
    /// Also report trustworthiness with this many neighbors.
    #[arg(long)]
    trustworthiness: Option<usize>,
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    s.parse().map_err(|e: cartographer_core::Error| e.to_string())
}

#[derive(Args)]
struct AtlasArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ZOOM_LEVELS)]
    zoom_levels: usize,
    #[arg(long, default_value_t = DEFAULT_BASE_BUDGET)]
    base_budget: usize,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAPACITY)]
    leaf_capacity: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Static UI bundle served under `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long, default_value = cartographer_serve::DEFAULT_BIND)]
    bind: SocketAddr,
    #[arg(long, default_value_t = cartographer_serve::DEFAULT_MAX_CLIENTS)]
    max_clients: usize,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("outputs").required(true).multiple(true).args(["out", "gesture_corpus"])))]
struct DemoArgs {
    /// Image collection directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Labeled synthetic pose corpus.
    #[arg(long)]
    gesture_corpus: Option<PathBuf>,
    /// Split the pose corpus 80/20 per class and write the held-out part here.
    #[arg(long, requires = "gesture_corpus")]
    gesture_holdout: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classes mapped onto exit codes.
pub enum Failure {
    Usage(String),
    Stage(String),
}

impl From<cartographer_core::Error> for Failure {
    fn from(e: cartographer_core::Error) -> Self {
        Failure::Stage(e.to_string())
    }
}

impl From<cartographer_serve::ServeError> for Failure {
    fn from(e: cartographer_serve::ServeError) -> Self {
        Failure::Stage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Stage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let http = HttpOptions {
        rate: a.rate,
        retries: a.retries,
        api_key: a.api_key,
        ..HttpOptions::default()
    };
    let source = open_source(&a.source, http);
    let options = IngestOptions {
        limit: a.limit,
        workers: a.workers,
    };
    let report = ingest_collection(source.as_ref(), &a.out, &options)?;
    println!(
        "requested {}\tsucceeded {}\tfailed {}\tno_image {}\talready_present {}\tbytes {}\tseconds {:.2}",
        report.requested,
        report.succeeded,
        report.failed,
        report.skipped_no_image,
        report.already_present,
        report.bytes_downloaded,
        report.elapsed
    );
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<(), Failure> {
    let mode = match a.import {
        Some(file) => EmbedMode::Import(file),
        None => EmbedMode::Baseline,
    };
    let m = embed_dataset(&a.dataset, &mode, &a.out, a.binary)?;
    println!("embedded {} objects in {} dimensions ({})", m.len(), m.dim(), m.descriptor_tag);
    Ok(())
}

fn layout(a: LayoutArgs) -> Result<(), Failure> {
    let knn_mode = match a.knn_mode.as_str() {
        "auto" => None,
        other => Some(other.parse::<KnnMode>().map_err(usage)?),
    };
    let config = LayoutConfig {
        n_neighbors: a.n_neighbors,
        min_dist: a.min_dist,
        n_epochs: a.n_epochs,
        learning_rate: a.learning_rate,
        negative_samples: a.negative_samples,
        seed: a.seed,
        init: a.init,
        knn_mode,
        parallel: a.parallel,
    };
    config.validate().map_err(usage)?;
    let matrix = read_embeddings(&a.embeddings)?;
    let layout = run_layout(&matrix, &config)?;
    write_layout(&layout, &a.out)?;
    println!("laid out {} points", layout.len());
    if let Some(k) = a.trustworthiness {
        println!("trustworthiness@{k} {:.4}", compute_trustworthiness(&matrix, &layout, k)?);
    }
    Ok(())
}

fn atlas(a: AtlasArgs) -> Result<(), Failure> {
    let params = AtlasParams {
        zoom_levels: a.zoom_levels,
        base_budget: a.base_budget,
        leaf_capacity: a.leaf_capacity,
    };
    params.validate().map_err(usage)?;
    let layout = read_layout(&a.layout)?;
    let dataset = Dataset::open(&a.dataset)?;
    let (atlas, manifest) = build_atlas(&layout, &dataset, params, &a.out)?;
    let demoted = (0..atlas.len()).filter(|&p| atlas.is_demoted(p)).count();
    println!(
        "{} points, {} tiles over {} zoom levels, {} samples demoted",
        atlas.len(),
        manifest.tiles.len(),
        manifest.zoom_levels,
        demoted
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let mut config = cartographer_serve::ServeConfig::new(a.dataset, a.atlas, a.layout);
    config.bind = a.bind;
    config.ui = a.ui;
    config.max_clients = a.max_clients;
    let state = Arc::new(cartographer_serve::AppState::load(&config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = cartographer_serve::bind(config.bind).await?;
        // Tests and scripts read the bound port from this line.
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        let signal = cartographer_serve::termination_signal();
        cartographer_serve::serve_until(listener, state, config.ui.as_deref(), signal).await?;
        Ok::<_, Failure>(())
    })?;
    runtime.shutdown_timeout(Duration::from_secs(1));
    Ok(())
}

fn demo(a: DemoArgs) -> Result<(), Failure> {
    if let Some(out) = &a.out {
        if a.n == 0 {
            return Err(usage("--n must be at least 1"));
        }
        let ds = generate_demo_corpus(a.seed, a.n, out)?;
        println!("wrote {} demo objects to {}", ds.len(), out.display());
    }
    if let Some(path) = &a.gesture_corpus {
        if a.per_class == 0 {
            return Err(usage("--per-class must be at least 1"));
        }
        gesture::write_synthetic(a.seed, a.per_class, path, a.gesture_holdout.as_deref())?;
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<(), Failure> {
    let mut config = PipelineConfig::load(&a.config).map_err(usage)?;
    for item in &a.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(k.trim(), v.trim()).map_err(usage)?;
    }
    config.layout.validate().map_err(usage)?;
    config.atlas_params.validate().map_err(usage)?;
    let report = run_pipeline(&config)?;
    for stage in cartographer_core::pipeline::STAGES {
        let state = if report.executed.iter().any(|s| s == stage) {
            "ran"
        } else {
            "up-to-date"
        };
        println!("{stage}\t{state}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CARTOGRAPHER_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Embed(a) => embed(a),
        Command::Layout(a) => layout(a),
        Command::Atlas(a) => atlas(a),
        Command::Serve(a) => serve(a),
        Command::GestureTrain(a) => gesture::train(a),
        Command::GestureEval(a) => gesture::eval(a),
        Command::GestureRun(a) => gesture::run(a),
        Command::Demo(a) => demo(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
