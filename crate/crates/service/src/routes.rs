use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection};
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ods_core::check::{check as run_check, CheckRequest};
use ods_core::rebac::{import_model, parse_context, ObjectRef, RelationshipTuple};
use ods_core::store::Store;
use serde::Deserialize;
use serde_json::{json, Map, Value as JsonValue};

use crate::error::ApiError;
use crate::AppState;

type AppResult = Result<Response, ApiError>;

fn body_error(status: StatusCode, message: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "payload_too_large", message)
    } else {
        ApiError::bad_request(message)
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(b)| b).map_err(|e| body_error(e.status(), e.body_text()))
}

/// Runs blocking store work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()))?
}

pub(crate) async fn authenticate(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing or invalid bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

pub(crate) async fn fallback() -> ApiError {
    ApiError::not_found("no such route; supported routes are POST /stores, /stores/{id}/authorization-models, /stores/{id}/write and /stores/{id}/check")
}

#[derive(Deserialize)]
pub(crate) struct CreateStore {
    name: String,
}

pub(crate) async fn create_store(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateStore>, JsonRejection>,
) -> AppResult {
    let body = json_body(body)?;
    if body.name.trim().is_empty() {
        return Err(ApiError::bad_request("store name must not be empty"));
    }
    let parent = state.data_dir.clone();
    let name = body.name.clone();
    let store = blocking(move || Ok(Store::create(parent, &name)?)).await?;
    let id = store.store_id();
    state
        .stores
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), Arc::new(store));
    Ok((StatusCode::CREATED, Json(json!({"id": id, "name": body.name}))).into_response())
}

pub(crate) async fn put_model(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> AppResult {
    let body = body.map_err(|e| body_error(e.status(), e.body_text()))?;
    let store = state.store(&id)?;
    let model = import_model(&body)?;
    let model_id = blocking(move || Ok(store.put_model(&model)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({"authorization_model_id": model_id}))).into_response())
}

#[derive(Deserialize, Default)]
pub(crate) struct TupleKeys {
    #[serde(default)]
    tuple_keys: Vec<JsonValue>,
}

impl TupleKeys {
    fn parse(&self) -> Result<Vec<RelationshipTuple>, ApiError> {
        self.tuple_keys
            .iter()
            .map(|k| RelationshipTuple::from_json(k).map_err(|e| ApiError::bad_request(format!("tuple key {k}: {e}"))))
            .collect()
    }
}

#[derive(Deserialize)]
pub(crate) struct WriteBody {
    #[serde(default)]
    writes: TupleKeys,
    #[serde(default)]
    deletes: TupleKeys,
    authorization_model_id: Option<String>,
}

pub(crate) async fn write(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<WriteBody>, JsonRejection>,
) -> AppResult {
    let body = json_body(body)?;
    let store = state.store(&id)?;
    let adds = body.writes.parse()?;
    let deletes = body.deletes.parse()?;
    if let Some(model_id) = &body.authorization_model_id {
        store.snapshot().model(Some(model_id))?;
    }
    blocking(move || Ok(store.write(&adds, &deletes)?)).await?;
    Ok(Json(json!({})).into_response())
}

#[derive(Deserialize)]
pub(crate) struct CheckKey {
    user: String,
    relation: String,
    object: String,
}

#[derive(Deserialize)]
pub(crate) struct CheckBody {
    tuple_key: CheckKey,
    #[serde(default)]
    context: Map<String, JsonValue>,
    #[serde(default)]
    contextual_tuples: TupleKeys,
    authorization_model_id: Option<String>,
}

impl CheckBody {
    fn request(&self) -> Result<CheckRequest, ApiError> {
        let user: ObjectRef = self
            .tuple_key
            .user
            .parse()
            .map_err(|e| ApiError::bad_request(format!("user: {e}")))?;
        let object: ObjectRef = self
            .tuple_key
            .object
            .parse()
            .map_err(|e| ApiError::bad_request(format!("object: {e}")))?;
        let mut request = CheckRequest::new(user, self.tuple_key.relation.clone(), object);
        request.context = parse_context(&self.context).map_err(|e| ApiError::bad_request(e.to_string()))?;
        request.contextual_tuples = self.contextual_tuples.parse()?;
        Ok(request)
    }
}

pub(crate) async fn check(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<CheckBody>, JsonRejection>,
) -> AppResult {
    let body = json_body(body)?;
    let store = state.store(&id)?;
    let request = body.request()?;
    let _permit = state
        .checks
        .acquire()
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", e.to_string()))?;
    let snapshot = store.snapshot();
    let model = snapshot.model(body.authorization_model_id.as_deref())?;
    let decision = blocking(move || Ok(run_check(&snapshot.tuples, &model, &request)?)).await?;
    Ok(Json(json!({"allowed": decision.allowed})).into_response())
}
