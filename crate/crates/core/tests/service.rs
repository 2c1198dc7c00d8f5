use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use voxelforge::nifti::NiftiImage;
use voxelforge::service::render::{SlicePlane, SliceRle};
use voxelforge::service::{router, AppState, ServiceConfig};
use voxelforge::volume::{Dims, LabelVolume, Volume};

fn phantom() -> Volume {
    Volume::from_fn(Dims::new(20, 18, 16), |[x, y, z]| {
        let d = (x as f64 - 10.0).powi(2) + (y as f64 - 9.0).powi(2) + (z as f64 - 8.0).powi(2);
        if d < 25.0 {
            100.0
        } else {
            0.0
        }
    })
}

fn app(dir: &std::path::Path, max_upload_mb: u64) -> Router {
    let cfg = ServiceConfig {
        data_dir: dir.to_path_buf(),
        max_upload_mb,
        patch: 16,
        ..Default::default()
    };
    router(AppState::open(cfg).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, serde_json::to_vec(&body).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn upload(app: &Router) -> String {
    let bytes = NiftiImage::from_volume(&phantom()).to_bytes();
    let (s, b) = call(app, "POST", "/volumes", bytes).await;
    assert_eq!(s, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["dims"], json!([20, 18, 16]));
    v["volume_id"].as_str().unwrap().to_string()
}

async fn session(app: &Router, vid: &str, class: Value, predictor: &str) -> String {
    let (s, v) = call_json(app, "POST", "/sessions", json!({"volume_id": vid, "class_index": class, "predictor": predictor})).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn click_undo_and_mask_formats() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 64);
    let vid = upload(&app).await;
    let sid = session(&app, &vid, json!("zero_shot"), "region_grow:10").await;

    let (_, empty) = call(&app, "GET", &format!("/sessions/{sid}/mask"), vec![]).await;
    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/clicks"), json!({"xyz": [10, 9, 8], "polarity": "pos"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], 1);
    let (lo, hi) = (&v["changed_bbox"]["min"], &v["changed_bbox"]["max"]);
    for (a, c) in [10, 9, 8].iter().enumerate() {
        assert!(lo[a].as_u64().unwrap() <= *c && *c <= hi[a].as_u64().unwrap());
    }

    // nifti, whole-mask rle and slice rle all describe the same mask
    let (_, nii) = call(&app, "GET", &format!("/sessions/{sid}/mask?format=nifti"), vec![]).await;
    let mask = NiftiImage::from_bytes(&nii).unwrap().to_mask().unwrap();
    assert!(mask.count() > 100);
    let (_, rle) = call_json(&app, "GET", &format!("/sessions/{sid}/mask?format=rle"), json!(null)).await;
    let rle: voxelforge::service::render::MaskRle = serde_json::from_value(json!({"dims": rle["dims"], "rle": rle["rle"]})).unwrap();
    assert_eq!(rle.decode().unwrap(), mask);
    for axis in 0..3 {
        let index = [10, 9, 8][axis];
        let (s, v) = call_json(&app, "GET", &format!("/sessions/{sid}/mask/slice?axis={axis}&index={index}"), json!(null)).await;
        assert_eq!(s, StatusCode::OK);
        let sl: SliceRle = serde_json::from_value(v).unwrap();
        let plane = SlicePlane::new(mask.dims(), axis, index).unwrap();
        for (row, line) in sl.decode().unwrap().iter().enumerate() {
            for (col, &px) in line.iter().enumerate() {
                assert_eq!(px, mask.get(plane.voxel(col, row)));
            }
        }
    }

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/undo"), json!(null)).await;
    assert_eq!((s, v["version"].as_u64()), (StatusCode::OK, Some(2)));
    let (_, after) = call(&app, "GET", &format!("/sessions/{sid}/mask"), vec![]).await;
    assert_eq!(after, empty);
    let (s, _) = call(&app, "POST", &format!("/sessions/{sid}/undo"), vec![]).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 1);
    let vid = upload(&app).await;
    let sid = session(&app, &vid, json!(1), "region_grow").await;

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/clicks"), json!({"xyz": [20, 0, 0], "polarity": "pos"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "xyz[0]");
    let (s, _) = call(&app, "POST", &format!("/sessions/{sid}/clicks"), b"{not json".to_vec()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{sid}/clicks"), json!({"xyz": [1, 1, 1], "polarity": "maybe"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "GET", "/sessions/nope", vec![]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/volumes/nope/slice?axis=0&index=0", vec![]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/volumes", vec![0u8; 2 << 20]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let (s, _) = call(&app, "POST", "/volumes", vec![0u8; 100]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = call_json(&app, "POST", "/sessions", json!({"volume_id": vid, "class_index": 0})).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("class_index")));
    let (s, _) = call_json(&app, "POST", "/sessions", json!({"volume_id": vid, "class_index": 1, "predictor": "nope"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = call_json(&app, "GET", &format!("/volumes/{vid}/slice?axis=2&index=99"), json!(null)).await;
    assert_eq!((s, v["field"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("index")));
    // region growing has no automatic branch
    let (s, _) = call(&app, "POST", &format!("/sessions/{sid}/auto"), vec![]).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn auto_then_click_and_replay_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, before, vid) = {
        let app = app(dir.path(), 64);
        let vid = upload(&app).await;
        let sid = session(&app, &vid, json!(3), "window:50,200+region_grow:10").await;
        let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/auto"), json!(null)).await;
        assert_eq!((s, v["version"].as_u64()), (StatusCode::OK, Some(1)));
        let (_, nii) = call(&app, "GET", &format!("/sessions/{sid}/mask"), vec![]).await;
        let auto = NiftiImage::from_bytes(&nii).unwrap().to_mask().unwrap();
        assert_eq!(auto, phantom().threshold(50.0));

        let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/clicks"), json!({"xyz": [10, 9, 8], "polarity": "neg"})).await;
        assert_eq!(s, StatusCode::OK);
        assert!(!v["changed_bbox"].is_null());
        let (s, _) = call(&app, "POST", &format!("/sessions/{sid}/auto"), vec![]).await;
        assert_eq!(s, StatusCode::CONFLICT);
        let (_, nii) = call(&app, "GET", &format!("/sessions/{sid}/mask"), vec![]).await;
        assert!(NiftiImage::from_bytes(&nii).unwrap().to_mask().unwrap().is_empty());
        (sid, nii, vid)
    };
    let app = app(dir.path(), 64);
    let (s, after) = call(&app, "GET", &format!("/sessions/{sid}/mask"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(after, before);
    let (_, log) = call_json(&app, "GET", &format!("/sessions/{sid}/clicks"), json!(null)).await;
    assert_eq!(log["clicks"].as_array().unwrap().len(), 1);

    // gt upload enables dice reporting
    let gt = LabelVolume::from_fn(Dims::new(20, 18, 16), |_| 0);
    let (s, _) = call(&app, "POST", &format!("/volumes/{vid}/gt"), NiftiImage::from_labels(&gt).unwrap().to_bytes()).await;
    assert_eq!(s, StatusCode::OK);
    let (_, info) = call_json(&app, "GET", &format!("/sessions/{sid}"), json!(null)).await;
    assert_eq!(info["dice"], 1.0);
}

#[tokio::test]
async fn slice_png_and_supervoxels() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 64);
    let vid = upload(&app).await;
    let (s, png) = call(&app, "GET", &format!("/volumes/{vid}/slice?axis=0&index=10&window=0,100"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap();
    assert_eq!((img.width(), img.height()), (18, 16));
    let (s, nii) = call(&app, "GET", &format!("/volumes/{vid}/supervoxels?n=8&sigma=0"), vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let labels = NiftiImage::from_bytes(&nii).unwrap().to_labels().unwrap();
    assert_eq!(labels.dims(), Dims::new(20, 18, 16));
    assert!(labels.data().iter().all(|&l| l >= 1));
}
