//! Wire types, request validation and error bodies.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use prefsearch::render::Family;
use prefsearch::{AttributeVector, Choice, SessionState, Strategy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Upper bound on `posterior_preview` length.
pub const PREVIEW_POINTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.into(),
                message: message.into(),
                fields: Vec::new(),
            },
        }
    }

    pub fn fields(fields: Vec<FieldError>) -> Self {
        let message = fields
            .iter()
            .map(|f| format!("{}: {}", f.field, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        Self {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: "invalid_request".into(),
                message,
                fields,
            },
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub first_stimulus_url: String,
    pub second_stimulus_url: String,
    pub first: AttributeVector,
    pub second: AttributeVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub id: String,
    pub dimension: usize,
    pub family: Family,
    pub strategy: Strategy,
    pub k_q: f64,
    pub n_answered: usize,
    pub pending: Option<PendingView>,
    pub estimate: AttributeVector,
    pub estimate_stimulus_url: String,
    /// Every `preview_stride`-th pooled draw, at most 500 points.
    pub posterior_preview: Vec<AttributeVector>,
    pub preview_stride: usize,
    pub log_det_cov: f64,
}

/// Relative URL of the stimulus for `a`. Coordinates use the shortest
/// round-trip decimal form so the URL identifies `a` exactly.
pub fn stimulus_url(family: Family, a: &AttributeVector) -> String {
    let coords: Vec<String> = a.as_slice().iter().map(|c| c.to_string()).collect();
    format!("/stimuli?family={family}&a={}", coords.join(","))
}

impl ApiSessionView {
    pub fn of(session: &SessionState, family: Family) -> Self {
        let posterior = session.posterior();
        let stride = posterior.draws().len().div_ceil(PREVIEW_POINTS).max(1);
        let estimate = posterior.mean();
        Self {
            id: session.id().to_string(),
            dimension: session.dimension(),
            family,
            strategy: session.selection().strategy,
            k_q: session.noise_constant().value(),
            n_answered: session.n_answered(),
            pending: session.pending().map(|q| PendingView {
                first_stimulus_url: stimulus_url(family, q.first()),
                second_stimulus_url: stimulus_url(family, q.second()),
                first: q.first().clone(),
                second: q.second().clone(),
            }),
            estimate_stimulus_url: stimulus_url(family, &estimate),
            estimate,
            posterior_preview: posterior.strided(stride),
            preview_stride: stride,
            log_det_cov: posterior.moments().log_det_covariance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateSession {
    pub dimension: usize,
    pub strategy: Strategy,
    pub k_q: f64,
    pub family: Family,
    pub n_candidates: Option<usize>,
    pub lambda: Option<f64>,
    pub spacing_stddevs: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerRequest {
    pub choice: Choice,
    pub idempotency_key: Option<String>,
}

fn object(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", "body must be a JSON object")),
        Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", format!("malformed JSON: {e}"))),
    }
}

struct Fields {
    map: Map<String, Value>,
    errors: Vec<FieldError>,
}

impl Fields {
    fn new(map: Map<String, Value>, known: &[&str]) -> Self {
        let errors = map
            .keys()
            .filter(|k| !known.contains(&k.as_str()))
            .map(|k| FieldError {
                field: k.clone(),
                message: "unknown field".into(),
            })
            .collect();
        Self { map, errors }
    }

    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    /// `None` when absent or null; records an error when the value has the wrong type.
    fn optional<T: DeserializeOwned>(&mut self, field: &str) -> Option<T> {
        match self.map.get(field) {
            None | Some(Value::Null) => None,
            Some(v) => match serde_json::from_value(v.clone()) {
                Ok(x) => Some(x),
                Err(e) => {
                    self.fail(field, e.to_string());
                    None
                }
            },
        }
    }

    fn required<T: DeserializeOwned>(&mut self, field: &str) -> Option<T> {
        if matches!(self.map.get(field), None | Some(Value::Null)) {
            self.fail(field, "required");
            return None;
        }
        self.optional(field)
    }
}

pub fn parse_create(body: &[u8]) -> Result<CreateSession, ApiError> {
    let mut f = Fields::new(
        object(body)?,
        &["dimension", "strategy", "k_q", "family", "n_candidates", "lambda", "spacing_stddevs", "seed"],
    );
    let dimension: Option<usize> = f.required("dimension");
    let strategy = f.optional::<Strategy>("strategy").unwrap_or(Strategy::ClosedForm);
    let k_q = f.optional::<f64>("k_q").unwrap_or(10.0);
    let family = f.optional::<Family>("family").unwrap_or(Family::ColorShape);
    let n_candidates: Option<usize> = f.optional("n_candidates");
    let lambda: Option<f64> = f.optional("lambda");
    let spacing_stddevs: Option<f64> = f.optional("spacing_stddevs");
    let seed: Option<u64> = f.optional("seed");

    if let Some(d) = dimension {
        if !(1..=prefsearch::render::MAX_STIMULUS_DIM).contains(&d) {
            f.fail("dimension", "must be between 1 and 4");
        }
    }
    if !(k_q.is_finite() && k_q > 0.0) {
        f.fail("k_q", "must be finite and > 0");
    }
    if let Some(n) = n_candidates {
        if strategy == Strategy::BestOfN && n < 2 {
            f.fail("n_candidates", "must be >= 2 for best_of_n");
        }
    }
    if let Some(l) = lambda {
        if !(l.is_finite() && l >= 0.0) {
            f.fail("lambda", "must be finite and >= 0");
        }
    }
    if let Some(s) = spacing_stddevs {
        if !(s.is_finite() && s > 0.0) {
            f.fail("spacing_stddevs", "must be finite and > 0");
        }
    }
    match dimension {
        Some(dimension) if f.errors.is_empty() => Ok(CreateSession {
            dimension,
            strategy,
            k_q,
            family,
            n_candidates,
            lambda,
            spacing_stddevs,
            seed,
        }),
        _ => Err(ApiError::fields(f.errors)),
    }
}

pub fn parse_answer(body: &[u8]) -> Result<AnswerRequest, ApiError> {
    let mut f = Fields::new(object(body)?, &["choice", "idempotency_key"]);
    let choice: Option<String> = f.required("choice");
    let idempotency_key: Option<String> = f.optional("idempotency_key");
    let choice = choice.and_then(|c| match c.parse::<Choice>() {
        Ok(c) => Some(c),
        Err(_) => {
            f.fail("choice", format!("expected \"first\" or \"second\", got {c:?}"));
            None
        }
    });
    match choice {
        Some(choice) if f.errors.is_empty() => Ok(AnswerRequest {
            choice,
            idempotency_key,
        }),
        _ => Err(ApiError::fields(f.errors)),
    }
}
