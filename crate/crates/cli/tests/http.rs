mod common;

use axum::http::StatusCode;
use common::*;
use frostroute_cli::server::router;
use serde_json::json;

#[tokio::test]
async fn health() {
    let app = router(snapshot(&fixture("triangle.config.json")), None);
    let (s, v) = request(app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok"}));
    assert_schema("health", &v);
}

#[tokio::test]
async fn network_has_one_feature_per_directed_edge() {
    let app = router(snapshot(&fixture("triangle.config.json")), None);
    let (s, v) = request(app, "GET", "/network", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("network", &v);
    let features = v["features"].as_array().unwrap();
    assert_eq!(features.len(), 6);
    // GeoJSON order is [lon, lat]
    assert_eq!(features[0]["geometry"]["coordinates"][0], json!([17.42, 68.43]));
    assert_eq!(features[0]["properties"]["source"], "default");
}

#[tokio::test]
async fn route_ok_and_errors() {
    let snap = snapshot(&fixture("icy.config.json"));
    let q = "/route?from_lat=68.0&from_lon=17.0&to_lat=68.0&to_lon=17.01";
    let (s, fast) = request(router(snap.clone(), None), "GET", &format!("{q}&alpha=0"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("route", &fast);
    assert_eq!(fast["edges"].as_array().unwrap().len(), 1);
    assert_eq!(fast["edges"][0]["state"], "Icy");
    let (_, safe) = request(router(snap.clone(), None), "GET", &format!("{q}&alpha=5"), None).await;
    assert_eq!(safe["total_time_s"], json!(90.0));
    assert_eq!(safe["geometry"].as_array().unwrap().len(), 3);
    // default alpha from the config is 0
    let (_, dflt) = request(router(snap.clone(), None), "GET", q, None).await;
    assert_eq!(dflt, fast);

    let back = "/route?from_lat=68.0&from_lon=17.01&to_lat=68.0&to_lon=17.0";
    let (s, v) = request(router(snap.clone(), None), "GET", back, None).await;
    assert_eq!((s, v.clone()), (StatusCode::NOT_FOUND, json!({"error": "no_path"})));
    assert_schema("error", &v);

    for bad in [
        "/route?from_lat=68.0&from_lon=17.0&to_lat=68.0",
        "/route?from_lat=abc&from_lon=17.0&to_lat=68.0&to_lon=17.01",
        "/route?from_lat=68.0&from_lon=17.0&to_lat=68.0&to_lon=17.01&alpha=-1",
        "/route?from_lat=95&from_lon=17.0&to_lat=68.0&to_lon=17.01",
        "/route?from_lat=60&from_lon=10.0&to_lat=68.0&to_lon=17.01",
    ] {
        let (s, v) = request(router(snap.clone(), None), "GET", bad, None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        assert_schema("error", &v);
    }
}

#[tokio::test]
async fn repeated_requests_are_identical() {
    let snap = snapshot(&fixture("triangle.config.json"));
    let q = "/route?from_lat=68.43&from_lon=17.42&to_lat=68.44&to_lon=17.43&alpha=2";
    let (_, a) = request(router(snap.clone(), None), "GET", q, None).await;
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let app = router(snap.clone(), None);
            tokio::spawn(async move { request(app, "GET", q, None).await.1 })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), a);
    }
}

#[tokio::test]
async fn predict_without_models_is_unavailable() {
    let app = router(snapshot(&fixture("triangle.config.json")), None);
    let (s, v) = request(app.clone(), "POST", "/predict", Some(r#"{"features": {}}"#)).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_schema("error", &v);
    let (s, _) = request(app, "POST", "/predict", Some("not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_path_is_json_404() {
    let app = router(snapshot(&fixture("triangle.config.json")), None);
    let (s, v) = request(app, "GET", "/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_schema("error", &v);
}

#[tokio::test]
async fn static_dir_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>map</title>").unwrap();
    let app = router(snapshot(&fixture("triangle.config.json")), Some(dir.path()));
    let req = axum::http::Request::builder().uri("/index.html").body(axum::body::Body::empty()).unwrap();
    use tower::ServiceExt;
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
