//! Drives the HTTP API in-process: upload, session, click, mask.
//! `vf serve` exposes the same router on a TCP port.
use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use voxelforge::nifti::NiftiImage;
use voxelforge::service::{router, AppState, ServiceConfig};
use voxelforge::volume::{Dims, Volume};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Vec<u8>) -> Value {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    println!("{method} {uri} -> {status} {v}");
    v
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig { data_dir: dir.path().into(), patch: 32, ..Default::default() };
    let app = router(AppState::open(cfg).unwrap());

    let vol = Volume::from_fn(Dims::cube(32), |[x, y, z]| if x.max(y).max(z) < 12 { 90.0 } else { 0.0 });
    let v = call(&app, "POST", "/volumes", NiftiImage::from_volume(&vol).to_bytes()).await;
    let vid = v["volume_id"].as_str().unwrap();
    let body = json!({"volume_id": vid, "class_index": "zero_shot", "predictor": "region_grow:20"});
    let s = call(&app, "POST", "/sessions", body.to_string().into_bytes()).await;
    let sid = s["session_id"].as_str().unwrap();
    let click = json!({"xyz": [4, 4, 4], "polarity": "pos"});
    call(&app, "POST", &format!("/sessions/{sid}/clicks"), click.to_string().into_bytes()).await;
    call(&app, "GET", &format!("/sessions/{sid}/mask/slice?axis=2&index=4"), vec![]).await;
    call(&app, "POST", &format!("/sessions/{sid}/undo"), vec![]).await;
    call(&app, "GET", &format!("/sessions/{sid}"), vec![]).await;
}
