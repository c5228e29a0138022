//! HTTP routes over an [`Engine`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::body::Bytes;
use axum::{Json, Router};
use revkit_core::corpus::Contract;
use revkit_core::Error as CoreError;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::engine::{DecisionRequest, Engine};
use crate::error::ServiceError;

pub fn status_for(err: &ServiceError) -> StatusCode {
    match err {
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::Conflict(_) => StatusCode::CONFLICT,
        ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
        ServiceError::NoModel => StatusCode::SERVICE_UNAVAILABLE,
        ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::Core(e) => match e {
            _ if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            CoreError::ProviderUnavailable(_) | CoreError::ScorerUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            CoreError::ProviderError(_) | CoreError::MalformedLlmOutput(_) | CoreError::AllCandidatesMalformed(_) => {
                StatusCode::BAD_GATEWAY
            }
            CoreError::InsufficientDemonstrations { .. }
            | CoreError::InsufficientData(_)
            | CoreError::TooFewPoints { .. }
            | CoreError::EmptyStore => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            log::error!("{}: {}", self.0.kind(), self.0);
        }
        (status, Json(self.0.to_json())).into_response()
    }
}

/// JSON body extractor whose rejections all map to 422.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(ServiceError::Validation(rejection.body_text()).into()),
        }
    }
}

/// Bodies that may be omitted entirely.
fn optional_body<T: DeserializeOwned + Default>(bytes: &[u8]) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ServiceError::Validation(e.to_string()).into())
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    token: Option<Arc<str>>,
}

type ApiResult = Result<Response, ApiError>;

/// Runs blocking engine work off the async executor.
async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> ApiResult
where
    T: serde::Serialize + Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ServiceError> + Send + 'static,
{
    let engine = engine.clone();
    let out = tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Core(CoreError::Io(std::io::Error::other(e.to_string()))))??;
    Ok(Json(out).into_response())
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token.as_ref());
        if !ok {
            return ApiError(ServiceError::Unauthorized).into_response();
        }
    }
    next.run(req).await
}

async fn health(State(state): State<AppState>) -> Response {
    let model = state.engine.model_snapshot().map(|m| m.version);
    let counts = state.engine.counts();
    Json(json!({ "status": "ok", "model_version": model, "counts": counts })).into_response()
}

async fn ingest(State(state): State<AppState>, ApiJson(contract): ApiJson<Contract>) -> ApiResult {
    blocking(&state.engine, move |e| e.ingest_contract(&contract)).await
}

#[derive(Deserialize)]
struct FlagsQuery {
    #[serde(default)]
    all: bool,
}

async fn flags(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<FlagsQuery>) -> ApiResult {
    blocking(&state.engine, move |e| e.flags(&id, q.all)).await
}

async fn revision(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    blocking(&state.engine, move |e| e.revision_detail(&id)).await
}

#[derive(Deserialize, Default)]
struct OptimizeBody {
    #[serde(default, rename = "override")]
    override_unflagged: bool,
}

async fn optimize(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: OptimizeBody = optional_body(&body)?;
    blocking(&state.engine, move |e| e.optimize_revision(&id, body.override_unflagged)).await
}

async fn decision(State(state): State<AppState>, Path(id): Path<String>, ApiJson(req): ApiJson<DecisionRequest>) -> ApiResult {
    blocking(&state.engine, move |e| e.decide(&id, req)).await
}

#[derive(Deserialize, Default)]
struct RetrainBody {
    #[serde(default)]
    force: bool,
}

async fn retrain(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let force = optional_body::<RetrainBody>(&body)?.force;
    blocking(&state.engine, move |e| e.retrain(force)).await
}

async fn current_model(State(state): State<AppState>) -> ApiResult {
    blocking(&state.engine, |e| e.model_info()).await
}

/// All routes. When `token` is set every route except `/health` requires
/// `Authorization: Bearer <token>`.
pub fn router(engine: Arc<Engine>, token: Option<String>) -> Router {
    let state = AppState { engine, token: token.map(Into::into) };
    let protected = Router::new()
        .route("/contracts", post(ingest))
        .route("/contracts/{id}/flags", get(flags))
        .route("/revisions/{id}", get(revision))
        .route("/revisions/{id}/optimize", post(optimize))
        .route("/revisions/{id}/decision", post(decision))
        .route("/models/retrain", post(retrain))
        .route("/models/current", get(current_model))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new().route("/health", get(health)).merge(protected).with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, token: Option<String>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    log::info!("listening on {local}");
    // Machine-readable so wrappers can bind port 0 and discover the port.
    println!("{}", json!({ "listening": local.to_string() }));
    axum::serve(listener, router(engine, token))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
