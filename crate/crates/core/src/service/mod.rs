//! HTTP session service.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | POST | `/volumes` | NIfTI bytes | `{volume_id, dims, spacing}` |
//! | POST | `/volumes/{id}/gt` | NIfTI label bytes | `{volume_id}` |
//! | GET | `/volumes/{id}/slice` | `axis, index, window=lo,hi` | PNG |
//! | GET | `/volumes/{id}/supervoxels` | `n, sigma, compactness, extractor` | int32 NIfTI |
//! | POST | `/sessions` | `{volume_id, class_index, predictor}` | `{session_id}` |
//! | GET | `/sessions/{id}` | | session state |
//! | POST | `/sessions/{id}/auto` | | `{version}` |
//! | POST | `/sessions/{id}/clicks` | `{xyz, polarity}` | `{version, changed_bbox}` |
//! | POST | `/sessions/{id}/undo` | | `{version}` |
//! | GET | `/sessions/{id}/clicks` | | click log |
//! | GET | `/sessions/{id}/mask` | `format=nifti\|rle` | mask |
//! | GET | `/sessions/{id}/mask/slice` | `axis, index` | `{rle: [[[start, len]…] per row]}` |
//!
//! Sessions are persisted as append-only JSON lines and rebuilt by replay
//! when the service starts.

pub mod render;

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::editor::{Session, SessionConfig};
use crate::error::Error;
use crate::evalsim::dice;
use crate::inference::{sliding_window, ClassPrompt, PointContext, PointPrompt, Polarity, Predictor, Prompt, SlidingWindowConfig};
use crate::labelspace::LabelSpace;
use crate::nifti::NiftiImage;
use crate::registry::PredictorSpec;
use crate::supervoxel::{builtin_extractor, supervoxels, ExtractorKind, SlicParams};
use crate::volume::{BinaryMask, Dims, LabelVolume, Volume};

use render::{slice_png, MaskRle, SliceRle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub max_upload_mb: u64,
    pub patch: usize,
    pub overlap: f64,
    /// External predictor name → command line.
    pub externals: BTreeMap<String, String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            data_dir: PathBuf::from("vf-data"),
            max_upload_mb: 1024,
            patch: crate::inference::sliding::DEFAULT_PATCH,
            overlap: crate::inference::sliding::DEFAULT_OVERLAP,
            externals: BTreeMap::new(),
        }
    }
}

impl ServiceConfig {
    /// Reads an optional TOML file, then applies `VF_PORT`, `VF_DATA_DIR`
    /// and `VF_MAX_UPLOAD_MB`.
    pub fn load(file: Option<&Path>) -> crate::Result<Self> {
        let mut cfg = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> crate::Result<()> {
        if let Some(v) = var("VF_PORT") {
            self.port = v.parse().map_err(|_| Error::arg(format!("VF_PORT={v:?} is not a port")))?;
        }
        if let Some(v) = var("VF_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("VF_MAX_UPLOAD_MB") {
            self.max_upload_mb = v
                .parse()
                .map_err(|_| Error::arg(format!("VF_MAX_UPLOAD_MB={v:?} is not an integer")))?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
            field: Some(field.to_string()),
        }
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Argument(_)
            | Error::Format(_)
            | Error::Unsupported(_)
            | Error::Dimensionality(_)
            | Error::Mapping(_)
            | Error::NoSample(_)
            | Error::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::State(_) => StatusCode::CONFLICT,
            Error::Contract(_) | Error::Predictor(_) | Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.message, "field": self.field});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

struct VolumeEntry {
    volume: Arc<Volume>,
    gt: RwLock<Option<Arc<LabelVolume>>>,
    supervoxels: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum ClassField {
    Index(u32),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogEntry {
    Create {
        volume_id: String,
        class: Option<u32>,
        predictor: String,
    },
    Auto,
    Click {
        xyz: [usize; 3],
        polarity: Polarity,
    },
    Undo,
}

struct SessionState {
    session: Session,
    predictor: Box<dyn Predictor>,
    version: u64,
}

struct SessionEntry {
    id: String,
    volume_id: String,
    class: Option<u32>,
    predictor: String,
    log_path: PathBuf,
    state: Mutex<SessionState>,
    /// Current version and mask, readable without the session lock.
    snapshot: RwLock<(u64, Arc<BinaryMask>)>,
}

pub struct AppState {
    cfg: ServiceConfig,
    labels: LabelSpace,
    volumes: RwLock<HashMap<String, Arc<VolumeEntry>>>,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
}

fn read_lock<T>(l: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

fn write_lock<T>(l: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Opens the data directory and replays stored volumes and sessions.
    pub fn open(cfg: ServiceConfig) -> crate::Result<Arc<Self>> {
        for sub in ["volumes", "gt", "sessions"] {
            let d = cfg.data_dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let state = Arc::new(AppState {
            cfg,
            labels: LabelSpace::bundled(),
            volumes: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
        });
        state.reload()?;
        Ok(state)
    }

    fn dir(&self, sub: &str) -> PathBuf {
        self.cfg.data_dir.join(sub)
    }

    fn sorted_entries(dir: &Path, ext: &str) -> crate::Result<Vec<(String, PathBuf)>> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = e.map_err(|e| Error::io(dir, e))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(id) = name.strip_suffix(ext) {
                out.push((id.to_string(), p.clone()));
            }
        }
        out.sort();
        Ok(out)
    }

    fn reload(&self) -> crate::Result<()> {
        for (id, path) in Self::sorted_entries(&self.dir("volumes"), ".nii")? {
            let volume = Arc::new(crate::nifti::read_volume(&path)?);
            let gt_path = self.dir("gt").join(format!("{id}.nii"));
            let gt = if gt_path.exists() {
                Some(Arc::new(crate::nifti::read_labels(&gt_path)?))
            } else {
                None
            };
            write_lock(&self.volumes).insert(
                id,
                Arc::new(VolumeEntry {
                    volume,
                    gt: RwLock::new(gt),
                    supervoxels: Mutex::new(HashMap::new()),
                }),
            );
        }
        for (id, path) in Self::sorted_entries(&self.dir("sessions"), ".jsonl")? {
            match self.replay_session(&id, &path) {
                Ok(entry) => {
                    write_lock(&self.sessions).insert(id, Arc::new(entry));
                }
                Err(e) => tracing::warn!("session {id} not restored: {e}"),
            }
        }
        Ok(())
    }

    fn replay_session(&self, id: &str, path: &Path) -> crate::Result<SessionEntry> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str::<LogEntry>(&line)?);
            }
        }
        let Some(LogEntry::Create { volume_id, class, predictor }) = entries.first().cloned() else {
            return Err(Error::Format(format!("{}: missing create record", path.display())));
        };
        let entry = self
            .build_session(id, &volume_id, class, &predictor)
            .map_err(|e| Error::State(e.message))?;
        {
            let mut st = entry.state.lock().unwrap_or_else(|e| e.into_inner());
            for e in &entries[1..] {
                match e {
                    LogEntry::Auto => run_auto(&self.cfg, &mut st, class)?,
                    LogEntry::Click { xyz, polarity } => {
                        let st = &mut *st;
                        let click = PointPrompt::new(*xyz, *polarity, st.session.context());
                        st.session.apply_click(click, st.predictor.as_ref())?;
                    }
                    LogEntry::Undo => st.session.undo()?,
                    LogEntry::Create { .. } => return Err(Error::Format("repeated create record".into())),
                }
                st.version += 1;
            }
            *write_lock(&entry.snapshot) = (st.version, Arc::new(st.session.current().clone()));
        }
        Ok(entry)
    }

    fn volume(&self, id: &str) -> ApiResult<Arc<VolumeEntry>> {
        read_lock(&self.volumes)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("volume", id))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        read_lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn build_session(&self, id: &str, volume_id: &str, class: Option<u32>, predictor: &str) -> ApiResult<SessionEntry> {
        let vol = self.volume(volume_id)?;
        let spec: PredictorSpec = predictor.parse().map_err(|e: Error| ApiError::invalid("predictor", e.to_string()))?;
        let gt = read_lock(&vol.gt).clone();
        if spec.needs_ground_truth() && gt.is_none() {
            return Err(ApiError::invalid("predictor", "oracle predictor requires uploaded ground truth"));
        }
        let pred = spec
            .build(gt, Some(&self.cfg.externals))
            .map_err(|e| ApiError::invalid("predictor", e.to_string()))?;
        let context = PointContext::for_class(class, &self.labels);
        let cfg = SessionConfig {
            patch: Dims::cube(self.cfg.patch),
            ..Default::default()
        };
        let session = Session::new(vol.volume.clone(), context, cfg);
        let mask = Arc::new(session.current().clone());
        Ok(SessionEntry {
            id: id.to_string(),
            volume_id: volume_id.to_string(),
            class,
            predictor: predictor.to_string(),
            log_path: self.dir("sessions").join(format!("{id}.jsonl")),
            state: Mutex::new(SessionState {
                session,
                predictor: pred,
                version: 0,
            }),
            snapshot: RwLock::new((0, mask)),
        })
    }
}

fn run_auto(cfg: &ServiceConfig, st: &mut SessionState, class: Option<u32>) -> crate::Result<()> {
    let class = class.ok_or_else(|| Error::arg("automatic segmentation needs a class index"))?;
    if !st.predictor.supports_auto() {
        return Err(Error::Unsupported("predictor has no automatic branch".into()));
    }
    let wcfg = SlidingWindowConfig {
        patch: Dims::cube(cfg.patch),
        overlap: cfg.overlap,
        ..Default::default()
    };
    let vol = st.session.volume().clone();
    let prob = sliding_window(&vol, st.predictor.as_ref(), &Prompt::Class(ClassPrompt::new(class)?), &wcfg)?;
    st.session.set_auto(prob.threshold(crate::inference::DEFAULT_THRESHOLD))
}

fn append_log(path: &Path, entry: &LogEntry) -> crate::Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(entry)?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid("body", format!("malformed body: {e}")))
}

fn query_usize(q: &HashMap<String, String>, key: &str) -> ApiResult<usize> {
    let v = q.get(key).ok_or_else(|| ApiError::invalid(key, format!("missing {key}")))?;
    v.parse().map_err(|_| ApiError::invalid(key, format!("{key}={v:?} is not an integer")))
}

fn query_opt<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::invalid(key, format!("{key}={v:?} is invalid"))))
        .transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

async fn upload_volume(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let app2 = app.clone();
    blocking(move || {
        let img = NiftiImage::from_bytes(&body).map_err(ApiError::from)?;
        let volume = img.to_volume()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = app2.dir("volumes").join(format!("{id}.nii"));
        crate::nifti::write_volume(&volume, &path)?;
        let reply = json!({"volume_id": id, "dims": volume.dims().0, "spacing": volume.spacing()});
        write_lock(&app2.volumes).insert(
            id,
            Arc::new(VolumeEntry {
                volume: Arc::new(volume),
                gt: RwLock::new(None),
                supervoxels: Mutex::new(HashMap::new()),
            }),
        );
        Ok((StatusCode::CREATED, Json(reply)))
    })
    .await
}

async fn upload_gt(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let vol = app.volume(&id)?;
    let app2 = app.clone();
    blocking(move || {
        let labels = NiftiImage::from_bytes(&body)?.to_labels()?;
        if labels.dims() != vol.volume.dims() {
            return Err(ApiError::invalid("body", "label dims differ from the volume"));
        }
        crate::nifti::write_labels(&labels, app2.dir("gt").join(format!("{id}.nii")))?;
        *write_lock(&vol.gt) = Some(Arc::new(labels));
        Ok(Json(json!({"volume_id": id})))
    })
    .await
}

async fn volume_slice(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let vol = app.volume(&id)?;
    let axis = query_usize(&q, "axis")?;
    let index = query_usize(&q, "index")?;
    let window = match q.get("window") {
        None => None,
        Some(w) => {
            let parsed = w
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<f32>().ok()?, b.trim().parse::<f32>().ok()?)));
            match parsed {
                Some((lo, hi)) if lo < hi => Some((lo, hi)),
                _ => return Err(ApiError::invalid("window", "window must be lo,hi with lo < hi")),
            }
        }
    };
    let png = slice_png(&vol.volume, axis, index, window).map_err(|e| match e {
        Error::Argument(m) => ApiError::invalid(if m.contains("axis") && !m.contains("index") { "axis" } else { "index" }, m),
        other => other.into(),
    })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn volume_supervoxels(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let vol = app.volume(&id)?;
    let mut params = SlicParams::default();
    if let Some(n) = query_opt(&q, "n")? {
        params.n_segments = n;
    }
    if let Some(s) = query_opt(&q, "sigma")? {
        params.sigma = s;
    }
    if let Some(c) = query_opt(&q, "compactness")? {
        params.compactness = c;
    }
    let kind: ExtractorKind = query_opt(&q, "extractor")?.unwrap_or_default();
    let key = format!("{}:{}:{}:{}:{:?}", params.n_segments, params.sigma, params.compactness, params.max_iter, kind);
    let bytes = blocking(move || {
        if let Some(b) = vol.supervoxels.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(b.clone());
        }
        let map = supervoxels(&vol.volume, builtin_extractor(kind).as_ref(), &params)?;
        let labels = map.to_label_volume(vol.volume.geometry())?;
        let bytes = Arc::new(NiftiImage::from_labels(&labels)?.to_bytes());
        vol.supervoxels
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, bytes.clone());
        Ok(bytes)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], (*bytes).clone()).into_response())
}

#[derive(Deserialize)]
struct CreateSession {
    volume_id: String,
    class_index: ClassField,
    #[serde(default = "default_predictor")]
    predictor: String,
}

fn default_predictor() -> String {
    "region_grow".into()
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_json(&body)?;
    let class = match req.class_index {
        ClassField::Index(i) => {
            ClassPrompt::new(i).map_err(|e| ApiError::invalid("class_index", e.to_string()))?;
            if i == 0 {
                return Err(ApiError::invalid("class_index", "class 0 is background"));
            }
            Some(i)
        }
        ClassField::Name(s) if s == "zero_shot" => None,
        ClassField::Name(s) => {
            return Err(ApiError::invalid("class_index", format!("expected an integer or \"zero_shot\", got {s:?}")))
        }
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let app2 = app.clone();
    let entry = blocking(move || {
        let entry = app2.build_session(&id, &req.volume_id, class, &req.predictor)?;
        append_log(
            &entry.log_path,
            &LogEntry::Create {
                volume_id: entry.volume_id.clone(),
                class,
                predictor: entry.predictor.clone(),
            },
        )?;
        Ok(Arc::new(entry))
    })
    .await?;
    let reply = json!({"session_id": entry.id});
    write_lock(&app.sessions).insert(entry.id.clone(), entry);
    Ok((StatusCode::CREATED, Json(reply)))
}

async fn session_info(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let (version, mask) = read_lock(&s.snapshot).clone();
    let vol = app.volume(&s.volume_id)?;
    let gt = read_lock(&vol.gt).clone();
    let d = match (gt, s.class) {
        (Some(gt), Some(c)) => Some(dice(&mask, &gt.class_mask(c))?),
        _ => None,
    };
    let clicks = s.state.try_lock().map(|st| st.session.clicks().len()).ok();
    Ok(Json(json!({
        "session_id": s.id,
        "volume_id": s.volume_id,
        "class": s.class,
        "predictor": s.predictor,
        "version": version,
        "clicks": clicks,
        "dice": d,
    })))
}

/// Runs `f` under the session lock on a worker thread; a busy session is a conflict.
async fn mutate<T: Send + 'static>(
    s: Arc<SessionEntry>,
    f: impl FnOnce(&SessionEntry, &mut SessionState) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    blocking(move || {
        let mut st = match s.state.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(ApiError::conflict("session is busy with another request")),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let out = f(&s, &mut st)?;
        *write_lock(&s.snapshot) = (st.version, Arc::new(st.session.current().clone()));
        Ok(out)
    })
    .await
}

async fn session_auto(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let cfg = app.cfg.clone();
    let version = mutate(s, move |s, st| {
        if !st.session.clicks().is_empty() {
            return Err(ApiError::conflict("automatic segmentation must run before any click"));
        }
        run_auto(&cfg, st, s.class)?;
        append_log(&s.log_path, &LogEntry::Auto)?;
        st.version += 1;
        Ok(st.version)
    })
    .await?;
    Ok(Json(json!({"version": version})))
}

#[derive(Deserialize)]
struct ClickBody {
    xyz: [i64; 3],
    polarity: Polarity,
}

async fn session_click(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let req: ClickBody = parse_json(&body)?;
    let dims = app.volume(&s.volume_id)?.volume.dims();
    for a in 0..3 {
        if req.xyz[a] < 0 || req.xyz[a] >= dims.0[a] as i64 {
            return Err(ApiError::invalid(
                &format!("xyz[{a}]"),
                format!("click {:?} outside volume dims {:?}", req.xyz, dims.0),
            ));
        }
    }
    let xyz = req.xyz.map(|v| v as usize);
    let polarity = req.polarity;
    let (version, bbox) = mutate(s, move |s, st| {
        let ctx = st.session.context();
        let st = &mut *st;
        let out = st
            .session
            .apply_click(PointPrompt::new(xyz, polarity, ctx), st.predictor.as_ref())?;
        append_log(&s.log_path, &LogEntry::Click { xyz, polarity })?;
        st.version += 1;
        Ok((st.version, out.changed_bbox))
    })
    .await?;
    Ok(Json(json!({
        "version": version,
        "changed_bbox": bbox.map(|(lo, hi)| json!({"min": lo, "max": hi})),
    })))
}

async fn session_undo(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let version = mutate(s, |s, st| {
        st.session.undo()?;
        append_log(&s.log_path, &LogEntry::Undo)?;
        st.version += 1;
        Ok(st.version)
    })
    .await?;
    Ok(Json(json!({"version": version})))
}

async fn session_clicks(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let st = s
        .state
        .try_lock()
        .map_err(|_| ApiError::conflict("session is busy with another request"))?;
    Ok(Json(serde_json::to_value(st.session.click_log()).map_err(Error::from)?))
}

async fn session_mask(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let (version, mask) = read_lock(&s.snapshot).clone();
    let version_header = [(header::HeaderName::from_static("x-mask-version"), version.to_string())];
    match q.get("format").map(String::as_str).unwrap_or("nifti") {
        "nifti" => {
            let vol = app.volume(&s.volume_id)?;
            let bytes = NiftiImage::from_mask(&mask, vol.volume.geometry())?.to_bytes();
            Ok((version_header, [(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
        }
        "rle" => {
            let rle = MaskRle::encode(&mask);
            Ok((version_header, Json(json!({"version": version, "dims": rle.dims, "rle": rle.rle}))).into_response())
        }
        other => Err(ApiError::invalid("format", format!("format must be nifti or rle, got {other:?}"))),
    }
}

async fn session_mask_slice(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let axis = query_usize(&q, "axis")?;
    let index = query_usize(&q, "index")?;
    let (version, mask) = read_lock(&s.snapshot).clone();
    let rle = SliceRle::encode(&mask, axis, index).map_err(|e| ApiError::invalid(if axis > 2 { "axis" } else { "index" }, e.to_string()))?;
    let mut v = serde_json::to_value(rle).map_err(Error::from)?;
    v["version"] = json!(version);
    Ok(Json(v))
}

pub fn router(app: Arc<AppState>) -> Router {
    let limit = (app.cfg.max_upload_mb as usize).saturating_mul(1 << 20);
    Router::new()
        .route("/volumes", post(upload_volume))
        .route("/volumes/{id}/gt", post(upload_gt))
        .route("/volumes/{id}/slice", get(volume_slice))
        .route("/volumes/{id}/supervoxels", get(volume_supervoxels))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/auto", post(session_auto))
        .route("/sessions/{id}/clicks", post(session_click).get(session_clicks))
        .route("/sessions/{id}/undo", post(session_undo))
        .route("/sessions/{id}/mask", get(session_mask))
        .route("/sessions/{id}/mask/slice", get(session_mask_slice))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(app)
}

/// Binds and serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> crate::Result<()> {
    let port = cfg.port;
    let app = tokio::task::spawn_blocking(move || AppState::open(cfg))
        .await
        .map_err(|e| Error::State(format!("startup: {e}")))??;
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("bind {addr}"), e))?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("serve", e))
}

