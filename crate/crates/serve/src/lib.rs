//! HTTP service over a built dataset, layout and atlas, plus a websocket
//! feed of interface events.
//!
//! Everything answered by the read endpoints is loaded once at startup and
//! never mutated, so identical requests get byte-identical responses.

mod hub;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::watch;

use cartographer_core::atlas::{load_atlas, parse_sprite_map, Atlas, SpriteCell, TileManifest};
use cartographer_core::gesture::{encode_event, parse_event};
use cartographer_core::ingest::{encode_object, Dataset};
use cartographer_core::layout::{decode_layout, Bounds};
use cartographer_core::pipeline::{hash_file, hash_tree};

pub use hub::{EventHub, Subscription, DEFAULT_MAX_CLIENTS, DEFAULT_QUEUE_CAPACITY};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Core(#[from] cartographer_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Startup(String),
    #[error("server error: {0}")]
    Runtime(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub dataset: PathBuf,
    pub atlas: PathBuf,
    pub layout: PathBuf,
    pub ui: Option<PathBuf>,
    pub max_clients: usize,
    pub queue_capacity: usize,
}

impl ServeConfig {
    pub fn new(dataset: impl Into<PathBuf>, atlas: impl Into<PathBuf>, layout: impl Into<PathBuf>) -> Self {
        ServeConfig {
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            dataset: dataset.into(),
            atlas: atlas.into(),
            layout: layout.into(),
            ui: None,
            max_clients: DEFAULT_MAX_CLIENTS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

/// Immutable artifacts plus the event hub.
pub struct AppState {
    pub atlas: Atlas,
    pub manifest: TileManifest,
    pub hub: EventHub,
    atlas_dir: PathBuf,
    objects: HashMap<String, Vec<u8>>,
    layout_text: Vec<u8>,
    sprite_maps: HashMap<(usize, u32, u32), Vec<SpriteCell>>,
    stats: Vec<u8>,
    etag: HeaderValue,
    shutdown: watch::Sender<bool>,
}

#[derive(Serialize)]
struct Stats<'a> {
    objects: usize,
    points: usize,
    zoom_levels: usize,
    base_budget: usize,
    samples_per_zoom: Vec<usize>,
    thumbnail_sizes: &'a [u32],
    tiles: usize,
    bounds: Bounds,
    hashes: Hashes,
}

#[derive(Serialize)]
struct Hashes {
    layout: String,
    atlas: String,
}

fn require(path: &Path, what: &str) -> Result<(), ServeError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ServeError::Startup(format!("{what} {} does not exist", path.display())))
    }
}

impl AppState {
    pub fn load(config: &ServeConfig) -> Result<Self, ServeError> {
        require(&config.dataset, "dataset")?;
        require(&config.atlas, "atlas")?;
        require(&config.layout, "layout")?;
        if let Some(ui) = &config.ui {
            require(ui, "ui directory")?;
        }
        let dataset = Dataset::open(&config.dataset)?;
        let layout_text = std::fs::read(&config.layout)
            .map_err(|e| ServeError::Startup(format!("cannot read {}: {e}", config.layout.display())))?;
        let layout = decode_layout(&String::from_utf8_lossy(&layout_text))?;
        let (atlas, manifest) = load_atlas(&config.atlas)?;
        if layout.ids != atlas.ids() {
            return Err(ServeError::Startup("layout and atlas describe different points".into()));
        }

        let mut objects = HashMap::new();
        for id in dataset.ids() {
            objects.insert(id.to_string(), encode_object(&dataset.object(id)?));
        }
        let mut sprite_maps = HashMap::new();
        for tile in &manifest.tiles {
            if tile.sprite.is_some() {
                let path = config.atlas.join(format!("tiles/{}/{}_{}.map", tile.z, tile.tx, tile.ty));
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ServeError::Startup(format!("cannot read {}: {e}", path.display())))?;
                sprite_maps.insert((tile.z, tile.tx, tile.ty), parse_sprite_map(&text)?);
            }
        }

        let hashes = Hashes {
            layout: hash_file(&config.layout)?,
            atlas: hash_tree(&config.atlas)?,
        };
        let etag = HeaderValue::from_str(&format!("\"{}\"", hashes.atlas)).expect("hex is a valid header");
        let stats = Stats {
            objects: dataset.len(),
            points: atlas.len(),
            zoom_levels: manifest.zoom_levels,
            base_budget: manifest.base_budget,
            samples_per_zoom: (0..manifest.zoom_levels).map(|z| atlas.samples_at(z).sample_ids.len()).collect(),
            thumbnail_sizes: &manifest.thumbnail_sizes,
            tiles: manifest.tiles.len(),
            bounds: atlas.bounds(),
            hashes,
        };
        let stats = serde_json::to_vec(&stats).expect("stats serialize");

        Ok(AppState {
            atlas,
            manifest,
            hub: EventHub::new(config.queue_capacity, config.max_clients),
            atlas_dir: config.atlas.clone(),
            objects,
            layout_text,
            sprite_maps,
            stats,
            etag,
            shutdown: watch::channel(false).0,
        })
    }

    /// Ask open websocket sessions to close.
    pub fn begin_shutdown(&self) {
        self.shutdown.send_replace(true);
    }
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match self.status {
            StatusCode::BAD_REQUEST => "bad_request",
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::SERVICE_UNAVAILABLE => "unavailable",
            _ => "internal",
        };
        let body = serde_json::json!({
            "error": { "status": self.status.as_u16(), "code": code, "message": self.message }
        });
        (self.status, json_bytes(serde_json::to_vec(&body).expect("error serializes"))).into_response()
    }
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

type Shared = State<Arc<AppState>>;

async fn object(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    s.objects
        .get(&id)
        .map(|doc| json_bytes(doc.clone()))
        .ok_or_else(|| ApiError::not_found(format!("no object {id:?}")))
}

async fn layout(State(s): Shared) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], s.layout_text.clone()).into_response()
}

async fn stats(State(s): Shared) -> Response {
    json_bytes(s.stats.clone())
}

#[derive(Serialize)]
struct SamplePoint<'a> {
    id: &'a str,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct TileBody<'a> {
    z: usize,
    tx: u32,
    ty: u32,
    samples: Vec<SamplePoint<'a>>,
    circles: Vec<[f64; 2]>,
    sprite: Option<String>,
    sprite_map: &'a [SpriteCell],
}

fn parse_zoom(s: &AppState, raw: &str) -> Result<usize, ApiError> {
    let z: usize = raw
        .parse()
        .map_err(|_| ApiError::bad_request(format!("zoom {raw:?} is not a non-negative integer")))?;
    if z >= s.manifest.zoom_levels {
        return Err(ApiError::bad_request(format!(
            "zoom {z} outside 0..{}",
            s.manifest.zoom_levels
        )));
    }
    Ok(z)
}

async fn tile(State(s): Shared, UrlPath((z, tx, ty)): UrlPath<(String, String, String)>) -> Result<Response, ApiError> {
    let z = parse_zoom(&s, &z)?;
    let coord = |raw: &str| {
        raw.parse::<u32>()
            .map_err(|_| ApiError::bad_request(format!("tile coordinate {raw:?} is not a non-negative integer")))
    };
    let (tx, ty) = (coord(&tx)?, coord(&ty)?);
    let members = s
        .atlas
        .tile_members(z, tx, ty)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut body = TileBody {
        z,
        tx,
        ty,
        samples: Vec::new(),
        circles: Vec::new(),
        sprite: None,
        sprite_map: s.sprite_maps.get(&(z, tx, ty)).map(Vec::as_slice).unwrap_or(&[]),
    };
    for p in members {
        let p = p as usize;
        let [x, y] = s.atlas.coords()[p];
        if s.atlas.is_sample(p, z) {
            body.samples.push(SamplePoint {
                id: &s.atlas.ids()[p],
                x,
                y,
            });
        } else {
            body.circles.push([x, y]);
        }
    }
    if !body.sprite_map.is_empty() {
        body.sprite = Some(format!("/api/sprites/{z}/{tx}_{ty}.png"));
    }
    Ok(json_bytes(serde_json::to_vec(&body).expect("tile serializes")))
}

async fn sprite(
    State(s): Shared,
    UrlPath((z, name)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let z = parse_zoom(&s, &z)?;
    let bad = || ApiError::bad_request(format!("sprite name {name:?} is not <tx>_<ty>.png"));
    let (tx, ty) = name
        .strip_suffix(".png")
        .and_then(|stem| stem.split_once('_'))
        .ok_or_else(bad)?;
    let (tx, ty) = (tx.parse::<u32>().map_err(|_| bad())?, ty.parse::<u32>().map_err(|_| bad())?);
    if (tx as u64) >> z != 0 || (ty as u64) >> z != 0 {
        return Err(ApiError::bad_request(format!("tile ({tx}, {ty}) outside zoom {z}")));
    }
    if !s.sprite_maps.contains_key(&(z, tx, ty)) {
        return Err(ApiError::not_found(format!("no sprite sheet for tile {z}/{tx}/{ty}")));
    }
    let cache = [
        (header::ETAG, s.etag.clone()),
        (header::CACHE_CONTROL, HeaderValue::from_static("public, max-age=3600")),
    ];
    if headers.get(header::IF_NONE_MATCH) == Some(&s.etag) {
        return Ok((StatusCode::NOT_MODIFIED, cache).into_response());
    }
    let path = s.atlas_dir.join(format!("tiles/{z}/{tx}_{ty}.png"));
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("cannot read sprite sheet: {e}"),
    })?;
    Ok((cache, [(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], Body::from(bytes)).into_response())
}

#[derive(Serialize)]
struct ViewportBody<'a> {
    zoom: usize,
    samples: Vec<SamplePoint<'a>>,
    circles: Vec<[f64; 2]>,
}

async fn viewport(State(s): Shared, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let num = |key: &str| -> Result<f64, ApiError> {
        let raw = q
            .get(key)
            .ok_or_else(|| ApiError::bad_request(format!("missing query parameter {key}")))?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ApiError::bad_request(format!("{key}={raw:?} is not a finite number")))
    };
    let rect = Bounds {
        min_x: num("x0")?,
        min_y: num("y0")?,
        max_x: num("x1")?,
        max_y: num("y1")?,
    };
    let zoom = parse_zoom(
        &s,
        q.get("zoom")
            .ok_or_else(|| ApiError::bad_request("missing query parameter zoom"))?,
    )?;
    let vp = s
        .atlas
        .query_viewport(&rect, zoom)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let body = ViewportBody {
        zoom,
        samples: vp
            .samples
            .iter()
            .map(|(id, [x, y])| SamplePoint { id, x: *x, y: *y })
            .collect(),
        circles: vp.circles,
    };
    Ok(json_bytes(serde_json::to_vec(&body).expect("viewport serializes")))
}

async fn events(State(s): Shared, ws: WebSocketUpgrade) -> Response {
    match s.hub.subscribe() {
        Some(sub) => ws.on_upgrade(move |socket| event_session(s, sub, socket)),
        None => ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: "too many event clients".into(),
        }
        .into_response(),
    }
}

/// Forward hub messages to the socket. Text the client sends is read as
/// event-trace lines and republished to every client, which is how a
/// gesture engine feeds the hub.
async fn event_session(s: Arc<AppState>, mut sub: Subscription, mut socket: WebSocket) {
    let mut shutdown = s.shutdown.subscribe();
    let mut stopping = *shutdown.borrow_and_update();
    while !stopping {
        tokio::select! {
            queued = sub.rx.recv() => match queued {
                Some(msg) => {
                    if socket.send(Message::Text(msg.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                None => {
                    // Dropped by the hub after a queue overflow.
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        match parse_event(line) {
                            Ok(event) => {
                                s.hub.publish(&encode_event(&event));
                            }
                            Err(e) => tracing::warn!(%e, "ignoring malformed event from client"),
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            _ = shutdown.changed() => stopping = true,
        }
    }
    if stopping {
        let _ = socket.send(Message::Close(None)).await;
    }
    s.hub.unsubscribe(sub.id);
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>, ui: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/objects/{id}", get(object))
        .route("/api/layout", get(layout))
        .route("/api/tiles/{z}/{tx}/{ty}", get(tile))
        .route("/api/sprites/{z}/{name}", get(sprite))
        .route("/api/viewport", get(viewport))
        .route("/api/stats", get(stats))
        .route("/api/{*rest}", get(api_not_found))
        .route("/ws/events", get(events))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })
}

/// Serve until `shutdown` resolves, then close websocket sessions and drain
/// in-flight requests.
pub async fn serve_until(
    listener: TcpListener,
    state: Arc<AppState>,
    ui: Option<&Path>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let app = router(state.clone(), ui);
    let stopping = state.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            stopping.begin_shutdown();
        })
        .await?;
    Ok(())
}

/// Resolves on SIGINT or SIGTERM.
pub async fn termination_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Load artifacts, bind and serve until SIGINT or SIGTERM.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::load(&config)?);
    let listener = bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, points = state.atlas.len(), "serving");
    serve_until(listener, state, config.ui.as_deref(), termination_signal()).await
}
