//! HTTP/JSON front end for elicitation sessions.
//!
//! Routes:
//!
//! - `POST /sessions` creates a session and returns its first pending query.
//! - `GET /sessions/{id}` reads a session.
//! - `POST /sessions/{id}/answer` answers the pending query.
//! - `GET /stimuli?family=..&a=..` renders an SVG stimulus.
//!
//! Answers to one session are serialized by a per-session lock; a second
//! answer arriving while one is being processed gets `409`. Posterior
//! recomputation runs on the blocking pool so other sessions are unaffected.

pub mod api;
pub mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefsearch::render::{render, Family, StimulusSpec};
use prefsearch::seed::derive_seed;
use prefsearch::{AttributeVector, McmcConfig, NoiseConstant, SelectionConfig, SessionState};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::api::{parse_answer, parse_create, ApiError, ApiSessionView};
use crate::store::{persist, Store};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
const STIMULUS_CACHE_CONTROL: &str = "public, max-age=31536000, immutable";
const MAX_CANVAS: u32 = 2048;

#[derive(Debug, Clone, Default)]
pub struct GatewayConfig {
    pub snapshot_dir: Option<PathBuf>,
    /// Sampler settings for new sessions; the seed is replaced per session.
    pub mcmc: McmcConfig,
    /// CORS origin for the UI; any origin when unset.
    pub allow_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    mcmc: McmcConfig,
}

impl AppState {
    /// Opens the snapshot directory, if any, and restores its sessions.
    pub fn open(config: &GatewayConfig) -> std::io::Result<Self> {
        config
            .mcmc
            .validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        let store = match &config.snapshot_dir {
            Some(dir) => {
                let (store, skipped) = Store::open(dir)?;
                for (path, reason) in skipped {
                    tracing::warn!(path = %path.display(), %reason, "skipping unreadable snapshot");
                }
                tracing::info!(sessions = store.len(), dir = %dir.display(), "restored sessions");
                store
            }
            None => Store::in_memory(),
        };
        Ok(Self {
            store: Arc::new(store),
            mcmc: config.mcmc.clone(),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

pub fn router(state: AppState, allow_origin: Option<&str>) -> Router {
    let origin = match allow_origin {
        Some(o) if o != "*" => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::from(Any),
        },
        _ => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/stimuli", get(stimulus))
        .layer(cors)
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn save(state: &AppState, family: Family, session: &SessionState) -> Result<(), ApiError> {
    let Some(dir) = state.store.snapshot_dir().map(|d| d.to_path_buf()) else {
        return Ok(());
    };
    let session = session.clone();
    blocking(move || persist(&dir, family, &session))
        .await?
        .map_err(|e| ApiError::internal(format!("could not write snapshot: {e}")))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_create(&body)?;
    let id = uuid::Uuid::new_v4();
    let seed = req.seed.unwrap_or_else(|| id.as_u64_pair().0);
    let selection = SelectionConfig {
        strategy: req.strategy,
        n_candidates: req.n_candidates.unwrap_or(SelectionConfig::default().n_candidates),
        lambda: req.lambda.unwrap_or(SelectionConfig::default().lambda),
        spacing_stddevs: req.spacing_stddevs,
        seed: derive_seed(seed, &[1]),
    };
    let mcmc = state.mcmc.with_seed(derive_seed(seed, &[2]));
    let k = NoiseConstant::new(req.k_q).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?;
    let dimension = req.dimension;
    let session = blocking(move || SessionState::new(id.to_string(), dimension, selection, k, mcmc))
        .await?
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?;
    save(&state, req.family, &session).await?;
    let view = ApiSessionView::of(&session, req.family);
    state.store.insert(req.family, session);
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ApiSessionView>, ApiError> {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let guard = slot.state.lock().await;
    Ok(Json(ApiSessionView::of(&guard.session, slot.family)))
}

async fn answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<ApiSessionView>, ApiError> {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let req = parse_answer(&body)?;
    let key = req.idempotency_key.or_else(|| {
        headers
            .get(IDEMPOTENCY_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    });
    let mut guard = slot.state.try_lock().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "answer_in_flight",
            "another answer for this session is being processed",
        )
    })?;
    if let Some(previous) = key.as_deref().and_then(|k| guard.reply_for(k)) {
        return Ok(Json(previous.clone()));
    }
    if guard.session.pending().is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "no_pending_query", "session has no pending query"));
    }
    let mut next = guard.session.clone();
    let choice = req.choice;
    let next = blocking(move || next.submit_answer(choice).map(|_| next))
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    save(&state, slot.family, &next).await?;
    let view = ApiSessionView::of(&next, slot.family);
    guard.session = next;
    if let Some(k) = key {
        guard.remember(k, view.clone());
    }
    Ok(Json(view))
}

fn bad_stimulus(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_stimulus", message)
}

async fn stimulus(Query(params): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let family: Family = params
        .get("family")
        .ok_or_else(|| bad_stimulus("missing family"))?
        .parse()
        .map_err(|e: prefsearch::Error| bad_stimulus(e.to_string()))?;
    let coords = params
        .get("a")
        .ok_or_else(|| bad_stimulus("missing a"))?
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad_stimulus(format!("bad coordinate {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let a = AttributeVector::new(coords).map_err(|e| bad_stimulus(e.to_string()))?;
    let size = |name: &str| -> Result<u32, ApiError> {
        match params.get(name) {
            None => Ok(256),
            Some(s) => s
                .parse::<u32>()
                .ok()
                .filter(|v| (1..=MAX_CANVAS).contains(v))
                .ok_or_else(|| bad_stimulus(format!("{name} must be an integer in 1..={MAX_CANVAS}"))),
        }
    };
    let spec = StimulusSpec {
        family,
        dimension: a.dim(),
        width: size("width")?,
        height: size("height")?,
    };
    let svg = render(&spec, &a).map_err(|e| bad_stimulus(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/svg+xml"),
            (header::CACHE_CONTROL, STIMULUS_CACHE_CONTROL),
        ],
        svg,
    )
        .into_response())
}
