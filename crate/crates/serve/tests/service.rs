use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, HeaderMap, Request, StatusCode};
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

use cartographer_core::atlas::{build_atlas, AtlasParams};
use cartographer_core::ingest::{encode_object, CollectionObject, Dataset, DatasetWriter, ManifestRecord};
use cartographer_core::layout::{decode_layout, write_layout, Layout2D, LayoutConfig};
use cartographer_serve::{bind, router, serve_until, AppState, ServeConfig, ServeError};

const N: usize = 300;

fn tiny_png(shade: u8) -> Vec<u8> {
    let img = image::RgbImage::from_pixel(8, 8, image::Rgb([shade, 255 - shade, 128]));
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
        .unwrap();
    out
}

/// `N` objects `obj-0..`, random layout, 4-level atlas with base budget 16.
fn build_fixture(root: &Path) -> ServeConfig {
    let ds = root.join("dataset");
    let writer = DatasetWriter::create(&ds).unwrap();
    for i in 0..N {
        let obj = CollectionObject {
            object_id: format!("obj-{i}"),
            title: format!("Object {i}"),
            classification: ["Prints", "Photographs"][i % 2].into(),
            ..Default::default()
        };
        let record = ManifestRecord {
            raw_payload: b"{}".to_vec(),
            source_url: "fixture".into(),
            fetched_at: 0,
        };
        writer
            .write_object(&obj, &record, Some((&tiny_png(i as u8), "png")))
            .unwrap();
    }
    writer.rebuild_index().unwrap();
    let dataset = Dataset::open(&ds).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ids: Vec<String> = dataset.ids().map(str::to_string).collect();
    let coords = ids
        .iter()
        .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect();
    let layout = Layout2D::new(ids, coords, LayoutConfig::default()).unwrap();
    let layout_path = root.join("layout.lay");
    write_layout(&layout, &layout_path).unwrap();
    let params = AtlasParams {
        zoom_levels: 4,
        base_budget: 16,
        leaf_capacity: 8,
    };
    build_atlas(&layout, &dataset, params, &root.join("atlas")).unwrap();
    ServeConfig::new(ds, root.join("atlas"), layout_path)
}

struct Fixture {
    config: ServeConfig,
    state: Arc<AppState>,
    app: Router,
}

/// Built once per test binary; every test only reads it.
fn shared_config() -> &'static ServeConfig {
    static CONFIG: OnceLock<ServeConfig> = OnceLock::new();
    CONFIG.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("serve-fixture");
        let _ = std::fs::remove_dir_all(&root);
        build_fixture(&root)
    })
}

fn fixture() -> Fixture {
    let config = shared_config().clone();
    let state = Arc::new(AppState::load(&config).unwrap());
    let app = router(state.clone(), None);
    Fixture { config, state, app }
}

async fn fetch(app: &Router, uri: &str) -> (StatusCode, HeaderMap, Vec<u8>) {
    fetch_with(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn fetch_with(app: &Router, req: Request<Body>) -> (StatusCode, HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn object_document_and_unknown_id() {
    let f = fixture();
    let (status, headers, body) = fetch(&f.app, "/api/objects/obj-1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "application/json");
    let ds = Dataset::open(&f.config.dataset).unwrap();
    assert_eq!(body, encode_object(&ds.object("obj-1").unwrap()));
    assert_eq!(json(&body)["title"], "Object 1");

    let (status, _, body) = fetch(&f.app, "/api/objects/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"]["code"], "not_found");
}

#[tokio::test]
async fn layout_is_served_verbatim() {
    let f = fixture();
    let (status, _, body) = fetch(&f.app, "/api/layout").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, std::fs::read(&f.config.layout).unwrap());
}

#[tokio::test]
async fn root_tile_partitions_every_point() {
    let f = fixture();
    let (status, _, body) = fetch(&f.app, "/api/tiles/0/0/0").await;
    assert_eq!(status, StatusCode::OK);
    let tile = json(&body);
    let samples = tile["samples"].as_array().unwrap();
    let circles = tile["circles"].as_array().unwrap();
    assert_eq!(samples.len() + circles.len(), N);
    let mut got: Vec<String> = samples.iter().map(|s| s["id"].as_str().unwrap().to_string()).collect();
    let mut want = f.state.atlas.samples_at(0).sample_ids;
    got.sort();
    want.sort();
    assert_eq!(got, want);
    assert_eq!(tile["sprite"], "/api/sprites/0/0_0.png");
    let cells: Vec<&str> = tile["sprite_map"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(cells.len(), 16);
}

#[tokio::test]
async fn sprite_has_etag_and_revalidates() {
    let f = fixture();
    let (status, headers, body) = fetch(&f.app, "/api/sprites/0/0_0.png").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert!(body.starts_with(b"\x89PNG"));
    let etag = headers[header::ETAG].clone();
    let req = Request::get("/api/sprites/0/0_0.png")
        .header(header::IF_NONE_MATCH, etag)
        .body(Body::empty())
        .unwrap();
    let (status, _, body) = fetch_with(&f.app, req).await;
    assert_eq!(status, StatusCode::NOT_MODIFIED);
    assert!(body.is_empty());
    assert_eq!(fetch(&f.app, "/api/sprites/0/9_9.png").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(fetch(&f.app, "/api/sprites/0/sheet.png").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stats_report_counts_and_hashes() {
    let f = fixture();
    let (status, _, body) = fetch(&f.app, "/api/stats").await;
    assert_eq!(status, StatusCode::OK);
    let stats = json(&body);
    assert_eq!(stats["objects"], N);
    assert_eq!(stats["points"], N);
    assert_eq!(stats["samples_per_zoom"], serde_json::json!([16, 64, 256, 300]));
    assert_eq!(stats["hashes"]["atlas"].as_str().unwrap().len(), 64);
}

#[tokio::test]
async fn malformed_requests_get_structured_400s() {
    let f = fixture();
    for uri in [
        "/api/viewport?x0=0&y0=0&x1=1",
        "/api/viewport?x0=abc&y0=0&x1=1&y1=1&zoom=0",
        "/api/viewport?x0=0&y0=0&x1=1&y1=1&zoom=9",
        "/api/viewport?x0=0&y0=0&x1=1&y1=1&zoom=-1",
        "/api/viewport?x0=5&y0=0&x1=1&y1=1&zoom=0",
        "/api/viewport?x0=NaN&y0=0&x1=1&y1=1&zoom=0",
        "/api/tiles/1/2/0",
        "/api/tiles/x/0/0",
    ] {
        let (status, _, body) = fetch(&f.app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        let err = json(&body);
        assert_eq!(err["error"]["code"], "bad_request", "{uri}");
        assert!(err["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    assert_eq!(fetch(&f.app, "/api/unknown").await.0, StatusCode::NOT_FOUND);
}

fn random_query(rng: &mut ChaCha8Rng) -> (String, [f64; 4], usize) {
    let mut r = || rng.random_range(-12.0f64..12.0);
    let (a, b, c, d) = (r(), r(), r(), r());
    let rect = [a.min(b), c.min(d), a.max(b), c.max(d)];
    let z = rng.random_range(0..4);
    (
        format!("/api/viewport?x0={}&y0={}&x1={}&y1={}&zoom={z}", rect[0], rect[1], rect[2], rect[3]),
        rect,
        z,
    )
}

#[tokio::test]
async fn viewport_matches_brute_force_scan() {
    let f = fixture();
    let layout = decode_layout(&std::fs::read_to_string(&f.config.layout).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (uri, [x0, y0, x1, y1], z) = random_query(&mut rng);
        let (status, _, body) = fetch(&f.app, &uri).await;
        assert_eq!(status, StatusCode::OK);
        let vp = json(&body);

        let mut samples = Vec::new();
        let mut circles = Vec::new();
        for (i, (id, [x, y])) in layout.ids.iter().zip(&layout.coords).enumerate() {
            if *x >= x0 && *x <= x1 && *y >= y0 && *y <= y1 {
                if f.state.atlas.is_sample(i, z) {
                    samples.push(serde_json::json!({"id": id, "x": x, "y": y}));
                } else {
                    circles.push(serde_json::json!([x, y]));
                }
            }
        }
        assert_eq!(vp["samples"], Value::Array(samples), "{uri}");
        assert_eq!(vp["circles"], Value::Array(circles), "{uri}");
    }
}

#[tokio::test]
async fn responses_are_byte_identical() {
    let f = fixture();
    for uri in [
        "/api/stats",
        "/api/layout",
        "/api/objects/obj-7",
        "/api/tiles/2/1/3",
        "/api/viewport?x0=-3&y0=-3&x1=4.5&y1=2&zoom=2",
        "/api/viewport?x0=0&y0=0&x1=1&zoom=2",
    ] {
        let first = fetch(&f.app, uri).await;
        for _ in 0..3 {
            let again = fetch(&f.app, uri).await;
            assert_eq!(first.0, again.0);
            assert_eq!(first.2, again.2, "{uri}");
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallel_viewport_queries_equal_serial() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let uris: Vec<String> = (0..64).map(|_| random_query(&mut rng).0).collect();
    let mut serial = Vec::new();
    for uri in &uris {
        serial.push(fetch(&f.app, uri).await.2);
    }
    let handles: Vec<_> = uris
        .iter()
        .cloned()
        .map(|uri| {
            let app = f.app.clone();
            tokio::spawn(async move { fetch(&app, &uri).await.2 })
        })
        .collect();
    for (h, want) in handles.into_iter().zip(serial) {
        assert_eq!(h.await.unwrap(), want);
    }
}

#[tokio::test]
async fn missing_artifacts_fail_startup() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServeConfig::new(dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(matches!(AppState::load(&config), Err(ServeError::Startup(_))));
}

#[tokio::test]
async fn port_in_use_is_reported() {
    let first = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = first.local_addr().unwrap();
    assert!(matches!(bind(addr).await, Err(ServeError::Bind { .. })));
}

async fn wait_for_clients(state: &AppState, n: usize) {
    for _ in 0..200 {
        if state.hub.client_count() == n {
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("expected {n} clients, have {}", state.hub.client_count());
}

async fn next_text<S>(ws: &mut S) -> String
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("message within timeout")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return t.to_string();
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_fan_out_and_graceful_shutdown() {
    let f = fixture();
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_until(listener, f.state.clone(), None, async {
        let _ = stop_rx.await;
    }));

    let url = format!("ws://{addr}/ws/events");
    let (mut a, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let (mut b, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let (mut publisher, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    wait_for_clients(&f.state, 3).await;

    let lines = [
        "0.100000\tZoomIn\t1.000000",
        "0.200000\tCursorMove(0.250000,0.750000)\t0.000000",
        "0.300000\tSelectDown\t0.000000",
    ];
    publisher.send(Message::Text(lines.join("\n").into())).await.unwrap();
    publisher.send(Message::Text("not an event".into())).await.unwrap();
    for client in [&mut a, &mut b, &mut publisher] {
        for want in lines {
            assert_eq!(next_text(client).await, want);
        }
    }

    stop_tx.send(()).unwrap();
    tokio::time::timeout(Duration::from_secs(5), server)
        .await
        .expect("server stops")
        .unwrap()
        .unwrap();
    // Clients see the close frame and then the end of the stream.
    let mut closed = false;
    while let Ok(Some(msg)) = tokio::time::timeout(Duration::from_secs(5), a.next()).await {
        if matches!(msg, Ok(Message::Close(_)) | Err(_)) {
            closed = true;
            break;
        }
    }
    assert!(closed);
}

#[tokio::test]
async fn static_ui_is_served_under_root() {
    let f = fixture();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>nebula</html>").unwrap();
    let app = router(f.state.clone(), Some(ui.path()));
    let (status, _, body) = fetch(&app, "/").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>nebula</html>");
    assert_eq!(fetch(&app, "/api/stats").await.0, StatusCode::OK);
}
