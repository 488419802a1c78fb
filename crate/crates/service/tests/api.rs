use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use flowshap_core::config::Config;
use flowshap_core::predict::PredictorKind;
use flowshap_core::scenario::Scenario;
use flowshap_core::synth::{generate, SynthParams};
use flowshap_service::{router, serve_on, AppState};
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

const LONG: Duration = Duration::from_secs(600);

fn config(dir: &Path) -> Config {
    let out = generate(&SynthParams {
        vehicles: 80,
        hours: 3,
        ..SynthParams::default()
    })
    .unwrap();
    fs::write(dir.join("trajectories.csv"), out.trajectories_csv()).unwrap();
    fs::write(dir.join("intersections.csv"), out.intersections_csv()).unwrap();
    let mut c = out.config();
    c.trajectories = Some(dir.join("trajectories.csv"));
    c.intersections = Some(dir.join("intersections.csv"));
    c.predictor.kind = PredictorKind::Persistence;
    c
}

fn scenario() -> (tempfile::TempDir, Arc<Scenario>) {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::build(config(dir.path())).unwrap();
    (dir, Arc::new(s))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Option<String>, String) {
    let res = app
        .clone()
        .oneshot(
            Request::get(uri)
                .header(header::ORIGIN, "http://example.org")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    let status = res.status();
    let retry = res
        .headers()
        .get(header::RETRY_AFTER)
        .map(|v| v.to_str().unwrap().to_string());
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, retry, String::from_utf8(body.to_vec()).unwrap())
}

fn endpoints(base: usize) -> Vec<String> {
    vec![
        "/api/meta".into(),
        format!("/api/flows?t={base}"),
        format!("/api/trajectories?t={base}"),
        format!("/api/forecast?base={base}"),
        "/api/clusters".into(),
        format!("/api/glyphs?base={base}"),
        format!("/api/attributions/cluster/3?base={base}&h=1"),
        format!("/api/attributions/grid/10/10?base={base}"),
    ]
}

fn error_code(body: &str) -> String {
    let v: Value = serde_json::from_str(body).unwrap();
    let obj = v.as_object().unwrap();
    assert!(obj.contains_key("message") && obj.contains_key("detail"));
    obj["code"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn loading_state_answers_503_with_retry_after() {
    let app = router(AppState::loading(LONG), "*");
    let (status, retry, body) = get(&app, "/api/meta").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(retry.as_deref(), Some("1"));
    assert_eq!(error_code(&body), "initializing");
    let (status, _, body) = get(&app, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("initializing"));
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_map_to_statuses() {
    let (_dir, s) = scenario();
    let n = s.tensor.n_intervals();
    let app = router(AppState::ready(s, LONG), "*");
    for (uri, status, code) in [
        ("/api/flows".to_string(), 422, "invalid_parameter"),
        ("/api/flows?t=abc".to_string(), 422, "invalid_parameter"),
        (format!("/api/flows?t={n}"), 404, "not_found"),
        ("/api/forecast?base=2".to_string(), 422, "config"),
        ("/api/glyphs?base=10&h=99".to_string(), 422, "config"),
        (
            "/api/attributions/cluster/999?base=10".to_string(),
            404,
            "not_found",
        ),
        (
            "/api/attributions/cluster/x?base=10".to_string(),
            404,
            "not_found",
        ),
        (
            "/api/attributions/grid/20/0?base=10".to_string(),
            404,
            "not_found",
        ),
        ("/api/jobs/nope".to_string(), 404, "not_found"),
        ("/api/nothing".to_string(), 404, "not_found"),
    ] {
        let (got, _, body) = get(&app, &uri).await;
        assert_eq!(got.as_u16(), status, "{uri}: {body}");
        assert_eq!(error_code(&body), code, "{uri}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn cached_and_uncached_answers_match_the_scenario() {
    let (_dir, s) = scenario();
    let base = 8;
    let cached = router(AppState::ready(s.clone(), LONG), "*");
    let uncached = router(AppState::ready(s.clone(), LONG).without_cache(), "*");
    for uri in endpoints(base) {
        let (a_status, _, a) = get(&cached, &uri).await;
        let (_, _, a2) = get(&cached, &uri).await;
        let (b_status, _, b) = get(&uncached, &uri).await;
        assert_eq!(a_status, StatusCode::OK, "{uri}: {a}");
        assert_eq!(b_status, StatusCode::OK);
        assert_eq!(a, a2, "{uri}");
        assert_eq!(a, b, "{uri}");
        serde_json::from_str::<Value>(&a).unwrap();
    }
    let (_, _, meta) = get(&cached, "/api/meta").await;
    let meta: Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(meta["fingerprint"].as_str().unwrap(), s.fingerprint);
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_requests_get_a_poll_token() {
    let (_dir, s) = scenario();
    let direct = s
        .answer(&flowshap_core::scenario::Query::Glyphs { base: 9, h: None })
        .unwrap();
    let app = router(AppState::ready(s, Duration::ZERO), "*");
    let (status, _, body) = get(&app, "/api/glyphs?base=9").await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let v: Value = serde_json::from_str(&body).unwrap();
    let poll = v["poll"].as_str().unwrap().to_string();
    assert!(poll.starts_with("/api/jobs/"));
    let mut result = None;
    for _ in 0..600 {
        let (status, _, body) = get(&app, &poll).await;
        if status == StatusCode::OK {
            result = Some(body);
            break;
        }
        assert_eq!(status, StatusCode::ACCEPTED);
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(result.as_deref(), Some(direct.as_str()));
    // the same request is answered from the cache without another token
    let (status, _, body) = get(&app, "/api/glyphs?base=9").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, direct);
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_allows_the_configured_origin() {
    let (_dir, s) = scenario();
    let app = router(AppState::ready(s, LONG), "http://example.org");
    let res = app
        .oneshot(
            Request::get("/api/meta")
                .header(header::ORIGIN, "http://example.org")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(
        res.headers()
            .get(header::ACCESS_CONTROL_ALLOW_ORIGIN)
            .unwrap(),
        "http://example.org"
    );
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split_once("\r\n\r\n").unwrap().1.to_string();
    (status, body)
}

#[tokio::test(flavor = "multi_thread")]
async fn tcp_server_loads_in_the_background() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.precompute_glyphs = false;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, c));
    let mut meta = None;
    for _ in 0..1200 {
        let (status, body) = http_get(addr, "/api/meta").await;
        if status == 200 {
            meta = Some(body);
            break;
        }
        assert_eq!(status, 503);
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let meta: Value = serde_json::from_str(&meta.expect("server never became ready")).unwrap();
    assert_eq!(meta["k"], 21);
}
