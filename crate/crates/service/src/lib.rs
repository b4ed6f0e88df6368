//! Local HTTP API over studies, slices, crosshairs, diagnosis and history.
//!
//! All bodies are JSON except `GET /api/log` (plain text) and the CSV
//! export. Errors are `{"error": code, "message": text}`.

mod error;
mod studies;

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use chrono::{SecondsFormat, Utc};
use ndarray::Array2;
use phydcm_core::diagnose::{self, DiagnosticRecord, PatientInfo};
use phydcm_core::volume::{map_crosshair, render_window, CrosshairMap, CrosshairPoint, Plane};
use phydcm_core::ModelRegistry;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use error::ApiError;
pub use studies::{Study, StudyEntry};

pub const DEFAULT_PORT: u16 = 8640;
const LOG_CAPACITY: usize = 200;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub models_dir: PathBuf,
    pub data_dir: PathBuf,
    pub history_path: PathBuf,
}

/// Last [`LOG_CAPACITY`] service events, newest last.
#[derive(Debug, Default)]
pub struct LogBuffer(Mutex<VecDeque<String>>);

impl LogBuffer {
    pub fn push(&self, line: impl Into<String>) {
        let line = line.into();
        log::info!("{line}");
        let stamped = format!("{} {line}", Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true));
        let mut lines = self.0.lock().unwrap_or_else(|e| e.into_inner());
        if lines.len() == LOG_CAPACITY {
            lines.pop_front();
        }
        lines.push_back(stamped);
    }

    pub fn text(&self) -> String {
        let lines = self.0.lock().unwrap_or_else(|e| e.into_inner());
        lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub registry: ModelRegistry,
    pub studies: Vec<Arc<Study>>,
    /// Serializes history read-modify-write cycles.
    history_lock: tokio::sync::Mutex<()>,
    pub log: LogBuffer,
}

impl AppState {
    /// Scan the models and data directories. A missing models dir is an
    /// error; a missing data dir is an empty study list.
    pub fn new(config: ServiceConfig) -> Result<Self, String> {
        let registry = ModelRegistry::scan(&config.models_dir, None).map_err(|e| e.to_string())?;
        let studies = if config.data_dir.is_dir() {
            studies::discover(&config.data_dir).map_err(|e| format!("{}: {e}", config.data_dir.display()))?
        } else {
            Vec::new()
        };
        let log = LogBuffer::default();
        for w in registry.warnings() {
            log.push(format!("registry: {w}"));
        }
        log.push(format!(
            "ready: {} model bundle(s), {} study(ies)",
            registry.bundles().len(),
            studies.len()
        ));
        Ok(AppState {
            config,
            registry,
            studies,
            history_lock: tokio::sync::Mutex::new(()),
            log,
        })
    }

    fn study(&self, id: &str) -> Result<&Arc<Study>, ApiError> {
        self.studies
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| ApiError::not_found(format!("unknown study {id:?}")))
    }
}

type Shared = Arc<AppState>;

fn localhost_cors() -> CorsLayer {
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            let Ok(o) = origin.to_str() else { return false };
            ["http://localhost", "http://127.0.0.1", "http://[::1]"].iter().any(|base| {
                o.strip_prefix(base)
                    .is_some_and(|rest| rest.is_empty() || rest.starts_with(':'))
            })
        }))
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/models", get(list_models))
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{id}/slice", get(get_slice))
        .route("/api/crosshair", post(crosshair))
        .route("/api/diagnose", post(diagnose_handler))
        .route("/api/history", get(get_history).delete(clear_history))
        .route("/api/history/export", get(export_history))
        .route("/api/log", get(get_log))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(localhost_cors())
        .with_state(state)
}

/// Bind and serve until interrupted. Bind failures are returned, not logged.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), String> {
    let state = Arc::new(AppState::new(config)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    state.log.push(format!("listening on http://{addr}"));
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Serialize)]
struct ModelEntry {
    scan_type: String,
    classes: Vec<String>,
    loaded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Deserialize)]
struct ModelsQuery {
    scan_type: Option<String>,
}

async fn list_models(State(st): State<Shared>, Query(q): Query<ModelsQuery>) -> Json<Vec<ModelEntry>> {
    let entries = st
        .registry
        .bundles()
        .iter()
        .filter(|b| q.scan_type.as_deref().is_none_or(|s| s == b.scan_type()))
        .map(|b| {
            let (classes, error) = match b.labels() {
                Ok(l) => (l.classes().to_vec(), None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            ModelEntry {
                scan_type: b.scan_type().to_string(),
                classes,
                loaded: b.is_loaded(),
                error,
            }
        })
        .collect();
    Json(entries)
}

async fn list_studies(State(st): State<Shared>) -> Json<Vec<StudyEntry>> {
    Json(st.studies.iter().map(|s| s.entry()).collect())
}

#[derive(Deserialize)]
struct SliceQuery {
    plane: Option<String>,
    index: Option<String>,
    window: Option<String>,
    level: Option<String>,
}

#[derive(Serialize)]
struct SliceResponse {
    study_id: String,
    plane: Plane,
    index: usize,
    width: usize,
    height: usize,
    window: f64,
    level: f64,
    /// Base64 of 8-bit grayscale, row-major.
    pixels: String,
}

fn parse_plane(s: Option<&str>) -> Result<Plane, ApiError> {
    s.unwrap_or("axial").parse().map_err(|e| ApiError::bad_request(format!("{e}")))
}

fn parse_num<T: std::str::FromStr>(name: &str, s: Option<&str>) -> Result<Option<T>, ApiError> {
    s.map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("{name} must be a number, got {v:?}"))))
        .transpose()
}

fn volume_of(study: &Study) -> Result<Arc<phydcm_core::Volume>, ApiError> {
    study
        .volume()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", e))
}

async fn get_slice(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SliceQuery>,
) -> Result<Json<SliceResponse>, ApiError> {
    let study = st.study(&id)?.clone();
    let plane = parse_plane(q.plane.as_deref())?;
    let index: usize = parse_num("index", q.index.as_deref())?.unwrap_or(0);
    let window: Option<f64> = parse_num("window", q.window.as_deref())?;
    let level: Option<f64> = parse_num("level", q.level.as_deref())?;

    let volume = blocking(move || volume_of(&study)).await??;
    let slice = volume.extract_slice(plane, index).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (default_w, default_l) = volume.full_range_window();
    let (window, level) = (window.unwrap_or(default_w), level.unwrap_or(default_l));
    let bytes = render_window(&slice, window, level).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (height, width) = bytes.dim();
    Ok(Json(SliceResponse {
        study_id: id,
        plane,
        index,
        width,
        height,
        window,
        level,
        pixels: base64::engine::general_purpose::STANDARD.encode(bytes.as_slice().expect("standard layout")),
    }))
}

#[derive(Deserialize)]
struct CrosshairRequest {
    study_id: String,
    x: usize,
    y: usize,
    z: usize,
}

async fn crosshair(State(st): State<Shared>, body: Bytes) -> Result<Json<CrosshairMap>, ApiError> {
    let req: CrosshairRequest = parse_json(&body)?;
    let study = st.study(&req.study_id)?.clone();
    let volume = blocking(move || volume_of(&study)).await??;
    let point = CrosshairPoint {
        x: req.x,
        y: req.y,
        z: req.z,
    };
    map_crosshair(point, &volume)
        .map(Json)
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Deserialize)]
struct DiagnoseRequest {
    study_id: Option<String>,
    file_path: Option<String>,
    plane: Option<String>,
    index: Option<usize>,
    window: Option<f64>,
    level: Option<f64>,
    scan_type: String,
    patient_id: Option<String>,
    patient_name: Option<String>,
}

/// Resolve a request path against the data dir, refusing anything outside it.
fn resolve_data_file(data_dir: &Path, requested: &str) -> Result<PathBuf, ApiError> {
    let root = data_dir
        .canonicalize()
        .map_err(|e| ApiError::not_found(format!("data dir unavailable: {e}")))?;
    let candidate = root.join(requested);
    let path = candidate
        .canonicalize()
        .map_err(|_| ApiError::not_found(format!("no such file {requested:?}")))?;
    if !path.starts_with(&root) {
        return Err(ApiError::bad_request("file_path must lie inside the data directory"));
    }
    Ok(path)
}

/// Pixels and provenance for a diagnose request.
fn diagnosis_input(st: &AppState, req: &DiagnoseRequest) -> Result<(Array2<f64>, String, PatientInfo), ApiError> {
    match (&req.study_id, &req.file_path) {
        (Some(id), None) => {
            let study = st.study(id)?;
            let volume = volume_of(study)?;
            let plane = parse_plane(req.plane.as_deref())?;
            let index = req.index.unwrap_or(volume.extent(plane) / 2);
            let slice = volume.extract_slice(plane, index).map_err(|e| ApiError::bad_request(e.to_string()))?;
            // A requested window means "diagnose what I see"; otherwise the raw values.
            let pixels = match (req.window, req.level) {
                (None, None) => slice,
                (w, l) => {
                    let (dw, dl) = volume.full_range_window();
                    render_window(&slice, w.unwrap_or(dw), l.unwrap_or(dl))
                        .map_err(|e| ApiError::bad_request(e.to_string()))?
                        .mapv(f64::from)
                }
            };
            let source = format!("{}#{}={}", study.dir.display(), plane, index);
            Ok((pixels, source, study.patient.clone()))
        }
        (None, Some(file)) => {
            let path = resolve_data_file(&st.config.data_dir, file)?;
            let image = diagnose::load_image(&path)?;
            Ok((image.pixels, path.display().to_string(), image.patient))
        }
        _ => Err(ApiError::bad_request("exactly one of study_id and file_path is required")),
    }
}

async fn diagnose_handler(State(st): State<Shared>, body: Bytes) -> Result<Json<DiagnosticRecord>, ApiError> {
    let req: DiagnoseRequest = parse_json(&body)?;
    if st.registry.get(&req.scan_type).is_none() {
        let e = ApiError::from(diagnose::DiagnoseError::NoModelForScanType(req.scan_type.clone()));
        st.log.push(format!("diagnose rejected: {}", e.message));
        return Err(e);
    }
    let worker = st.clone();
    let record = blocking(move || -> Result<DiagnosticRecord, ApiError> {
        let (pixels, source, file_patient) = diagnosis_input(&worker, &req)?;
        let patient = PatientInfo {
            patient_id: req.patient_id.clone().or(file_patient.patient_id),
            patient_name: req.patient_name.clone().or(file_patient.patient_name),
        };
        Ok(diagnose::predict_pixels(&pixels, &source, &req.scan_type, &worker.registry, patient)?)
    })
    .await?;
    let record = match record {
        Ok(r) => r,
        Err(e) => {
            st.log.push(format!("diagnose failed: {}", e.message));
            return Err(e);
        }
    };

    let _guard = st.history_lock.lock().await;
    let path = st.config.history_path.clone();
    let appended = record.clone();
    blocking(move || diagnose::append_history(&appended, &path)).await??;
    st.log.push(format!(
        "diagnosed {} as {} ({:.4})",
        record.source_path, record.predicted_class, record.confidence
    ));
    Ok(Json(record))
}

async fn read_history(st: &Shared) -> Result<Vec<DiagnosticRecord>, ApiError> {
    let _guard = st.history_lock.lock().await;
    let path = st.config.history_path.clone();
    Ok(blocking(move || diagnose::read_history(&path)).await??)
}

async fn get_history(State(st): State<Shared>) -> Result<Json<Vec<DiagnosticRecord>>, ApiError> {
    Ok(Json(read_history(&st).await?))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export_history(State(st): State<Shared>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    match q.format.as_deref().unwrap_or("csv") {
        "csv" => {}
        other => return Err(ApiError::bad_request(format!("unsupported export format {other:?}"))),
    }
    let records = read_history(&st).await?;
    let csv = diagnose::csv_string(&records)?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"phydcm_history.csv\""),
        ],
        csv,
    )
        .into_response())
}

async fn clear_history(State(st): State<Shared>) -> Result<StatusCode, ApiError> {
    let _guard = st.history_lock.lock().await;
    let path = st.config.history_path.clone();
    blocking(move || diagnose::write_history(&path, &[])).await??;
    st.log.push("history cleared");
    Ok(StatusCode::NO_CONTENT)
}

async fn get_log(State(st): State<Shared>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], st.log.text())
}
