//! Local HTTP API for interactive hybrid-image tuning.
//!
//! | method | path | result |
//! |---|---|---|
//! | `POST` | `/session` | multipart with two image files → `201 {session_id, width, height}` |
//! | `GET` | `/session/{id}/hybrid` | PNG preview |
//! | `GET` | `/session/{id}/layers` | `{low_png_b64, high_png_b64}` |
//! | `DELETE` | `/session/{id}` | `204` |
//!
//! Query parameters for the two `GET`s: `sigma_low`, `sigma_high` (in
//! `[0.5, 30]`, default 7), `weight` (in `[0, 1]`, default 0.5), `mode`
//! (`subtract` or `log`) and `scale` (in `(0, 1]`, default 1). With
//! `scale < 1` both inputs are downscaled first and both sigmas shrink by the
//! same factor, so small previews are cheap but only approximate the full
//! render. Out-of-range values get a `422` whose JSON body names the
//! parameter.
//!
//! Sessions live in memory only and are evicted least-recently-used once
//! more than [`ServiceConfig::max_sessions`] exist.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use hybridkit::filters::{visualize_signed, Filters};
use hybridkit::{
    image_io, match_dimensions, size_rule, BlendSpec, BoundaryPolicy, EncodedFormat, HighpassMode,
    Image, Planar,
};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

pub const SIGMA_MIN: f64 = 0.5;
pub const SIGMA_MAX: f64 = 30.0;
pub const DEFAULT_MAX_SESSIONS: usize = 8;
const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    /// Directory of prebuilt UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: DEFAULT_MAX_SESSIONS,
            static_dir: None,
        }
    }
}

struct Session {
    id: String,
    low: Image,
    high: Image,
    #[allow(dead_code)]
    created_at: std::time::SystemTime,
    // serializes renders on one session
    busy: tokio::sync::Mutex<()>,
}

#[derive(Default)]
struct Store {
    sessions: HashMap<String, (Arc<Session>, u64)>,
    tick: u64,
}

impl Store {
    fn get(&mut self, id: &str) -> Option<Arc<Session>> {
        self.tick += 1;
        let tick = self.tick;
        self.sessions.get_mut(id).map(|(s, used)| {
            *used = tick;
            s.clone()
        })
    }

    fn insert(&mut self, session: Arc<Session>, cap: usize) {
        self.tick += 1;
        self.sessions
            .insert(session.id.clone(), (session, self.tick));
        while self.sessions.len() > cap.max(1) {
            let oldest = self
                .sessions
                .iter()
                .min_by_key(|(_, (_, used))| *used)
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            self.sessions.remove(&oldest);
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            store: Arc::default(),
            config: Arc::new(config),
        }
    }

    fn lookup(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.store
            .lock()
            .expect("store lock")
            .get(id)
            .ok_or(ApiError::NotFound)
    }

    /// Number of live sessions.
    pub fn session_count(&self) -> usize {
        self.store.lock().expect("store lock").sessions.len()
    }
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound,
    Param { name: &'static str, reason: String },
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(reason) => (StatusCode::BAD_REQUEST, json!({ "error": reason })),
            ApiError::NotFound => (StatusCode::NOT_FOUND, json!({ "error": "unknown session" })),
            ApiError::Param { name, reason } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": format!("invalid parameter `{name}`: {reason}"), "parameter": name }),
            ),
            ApiError::Internal(reason) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": reason }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

/// Parsed and range-checked preview parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Params {
    sigma_low: f64,
    sigma_high: f64,
    weight: f64,
    mode: HighpassMode,
    scale: f64,
}

impl Params {
    fn parse(q: &HashMap<String, String>) -> Result<Self, ApiError> {
        fn num(
            q: &HashMap<String, String>,
            name: &'static str,
            default: f64,
        ) -> Result<f64, ApiError> {
            match q.get(name) {
                None => Ok(default),
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ApiError::Param {
                        name,
                        reason: format!("{s:?} is not a number"),
                    }),
            }
        }
        let sigma_low = num(q, "sigma_low", 7.0)?;
        let sigma_high = num(q, "sigma_high", 7.0)?;
        let weight = num(q, "weight", 0.5)?;
        let scale = num(q, "scale", 1.0)?;
        for (name, s) in [("sigma_low", sigma_low), ("sigma_high", sigma_high)] {
            if !(SIGMA_MIN..=SIGMA_MAX).contains(&s) {
                return Err(ApiError::Param {
                    name,
                    reason: format!("must lie in [{SIGMA_MIN}, {SIGMA_MAX}], got {s}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(ApiError::Param {
                name: "weight",
                reason: format!("must lie in [0, 1], got {weight}"),
            });
        }
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(ApiError::Param {
                name: "scale",
                reason: format!("must lie in (0, 1], got {scale}"),
            });
        }
        let mode = match q.get("mode") {
            None => HighpassMode::Subtract,
            Some(m) => m.parse().map_err(|_| ApiError::Param {
                name: "mode",
                reason: format!("expected subtract or log, got {m:?}"),
            })?,
        };
        Ok(Self {
            sigma_low,
            sigma_high,
            weight,
            mode,
            scale,
        })
    }

    fn spec(&self) -> BlendSpec {
        BlendSpec {
            sigma_low: self.sigma_low * self.scale,
            sigma_high: self.sigma_high * self.scale,
            weight: self.weight,
            highpass_mode: self.mode,
            boundary: BoundaryPolicy::Replicate,
        }
    }

    /// Strong validator over the session and every parameter that affects
    /// the output.
    fn etag(&self, session: &str, endpoint: &str) -> String {
        let mut h = Sha256::new();
        h.update(session.as_bytes());
        h.update(
            format!(
                "|{endpoint}|{:?}|{:?}|{:?}|{}|{:?}",
                self.sigma_low, self.sigma_high, self.weight, self.mode, self.scale
            )
            .as_bytes(),
        );
        let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        format!("\"{}\"", &hex[..32])
    }
}

/// Scaled copies of the session inputs, with kernel-size checks mapped to the
/// sigma that does not fit.
fn prepare(session: &Session, p: &Params) -> Result<(Image, Image, BlendSpec), ApiError> {
    let (mut low, mut high) = (session.low.clone(), session.high.clone());
    if p.scale < 1.0 {
        let w = ((low.width() as f64 * p.scale).round() as usize).max(1);
        let h = ((low.height() as f64 * p.scale).round() as usize).max(1);
        low = hybridkit::resize_bilinear(&low, w, h)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        high = hybridkit::resize_bilinear(&high, w, h)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
    }
    let spec = p.spec();
    let limit = 2 * low.width().min(low.height()) + 1;
    for (name, s) in [
        ("sigma_low", spec.sigma_low),
        ("sigma_high", spec.sigma_high),
    ] {
        let size = size_rule(s).map_err(|e| ApiError::Param {
            name,
            reason: e.to_string(),
        })?;
        if size > limit {
            return Err(ApiError::Param {
                name,
                reason: format!(
                    "kernel of {size} taps does not fit a {}x{} image (at most {limit})",
                    low.width(),
                    low.height()
                ),
            });
        }
    }
    Ok((low, high, spec))
}

fn encode_png(img: &Image) -> Result<Vec<u8>, ApiError> {
    image_io::save(img, EncodedFormat::Png).map_err(|e| ApiError::Internal(e.to_string()))
}

fn not_modified(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|t| {
            let t = t.trim();
            t == "*" || t == etag
        })
}

fn cached_response(etag: &str, content_type: &'static str, body: Vec<u8>) -> Response {
    (
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(content_type)),
            (header::ETAG, HeaderValue::from_str(etag).expect("hex etag")),
            (
                header::CACHE_CONTROL,
                HeaderValue::from_static("private, no-cache"),
            ),
        ],
        body,
    )
        .into_response()
}

fn not_modified_response(etag: &str) -> Response {
    (
        StatusCode::NOT_MODIFIED,
        [(header::ETAG, HeaderValue::from_str(etag).expect("hex etag"))],
    )
        .into_response()
}

/// Runs a render on the blocking pool while holding the session's lock.
async fn render<T: Send + 'static>(
    session: Arc<Session>,
    f: impl FnOnce(&Session) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let guard_owner = session.clone();
    let _guard = guard_owner.busy.lock().await;
    tokio::task::spawn_blocking(move || f(&session))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    width: usize,
    height: usize,
}

async fn create_session(
    State(state): State<AppState>,
    mut multipart: Multipart,
) -> Result<Response, ApiError> {
    let mut files: Vec<(String, Bytes)> = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::BadRequest(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or("").to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::BadRequest(format!("could not read field {name:?}: {e}")))?;
        if !data.is_empty() {
            files.push((name, data));
        }
    }
    if files.len() != 2 {
        return Err(ApiError::BadRequest(format!(
            "expected exactly two image files, got {}",
            files.len()
        )));
    }
    // Named fields win; otherwise the first file is the low-frequency source.
    let pos = |n: &str| files.iter().position(|(name, _)| name == n);
    let (li, hi) = match (pos("low"), pos("high")) {
        (Some(l), Some(h)) => (l, h),
        _ => (0, 1),
    };
    let (low_bytes, high_bytes) = (files[li].1.clone(), files[hi].1.clone());
    let max = state.config.max_sessions;
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let decode = |which: &str, b: &[u8]| {
            image_io::load(b).map_err(|e| ApiError::BadRequest(format!("{which} image: {e}")))
        };
        let low = decode("low", &low_bytes)?;
        let high = decode("high", &high_bytes)?;
        let (low, high) =
            match_dimensions(&low, &high).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        Ok(Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            low,
            high,
            created_at: std::time::SystemTime::now(),
            busy: tokio::sync::Mutex::new(()),
        })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let body = Created {
        session_id: session.id.clone(),
        width: session.low.width(),
        height: session.low.height(),
    };
    state
        .store
        .lock()
        .expect("store lock")
        .insert(Arc::new(session), max);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn hybrid_preview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let session = state.lookup(&id)?;
    let params = Params::parse(&q)?;
    let etag = params.etag(&id, "hybrid");
    if not_modified(&headers, &etag) {
        return Ok(not_modified_response(&etag));
    }
    let png = render(session, move |s| {
        let (low, high, spec) = prepare(s, &params)?;
        let out = Filters::default()
            .hybrid(&low, &high, &spec)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        encode_png(&out)
    })
    .await?;
    Ok(cached_response(&etag, "image/png", png))
}

#[derive(Serialize)]
struct Layers {
    low_png_b64: String,
    high_png_b64: String,
}

async fn layers(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let session = state.lookup(&id)?;
    let params = Params::parse(&q)?;
    let etag = params.etag(&id, "layers");
    if not_modified(&headers, &etag) {
        return Ok(not_modified_response(&etag));
    }
    let body = render(session, move |s| {
        let (low, high, spec) = prepare(s, &params)?;
        let (l, h) = Filters::default()
            .layers(&low, &high, &spec)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let b64 = base64::engine::general_purpose::STANDARD;
        let layers = Layers {
            low_png_b64: b64.encode(encode_png(&l)?),
            high_png_b64: b64.encode(encode_png(&visualize_signed(&h))?),
        };
        serde_json::to_vec(&layers).map_err(|e| ApiError::Internal(e.to_string()))
    })
    .await?;
    Ok(cached_response(&etag, "application/json", body))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> StatusCode {
    match state.store.lock().expect("store lock").sessions.remove(&id) {
        Some(_) => StatusCode::NO_CONTENT,
        None => StatusCode::NOT_FOUND,
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", axum::routing::delete(delete_session))
        .route("/session/{id}/hybrid", get(hybrid_preview))
        .route("/session/{id}/layers", get(layers))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(config))).await
}
