use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use super::{ServiceError, Shared};
use crate::wire::{
    AcceptedResponse, ClosedResponse, DataFrame, ErrorBody, PullResponse, ServiceDescriptor, StatusResponse,
    SubscribeResponse, UnsubscribeRequest, SERVICE_ROOT,
};

type Reply<T> = Result<Json<T>, ServiceError>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            error: self.code().to_string(),
            detail: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

pub(super) fn router(shared: Arc<Shared>) -> Router {
    let op = |suffix: &str| format!("{SERVICE_ROOT}/{{name}}{suffix}");
    Router::new()
        .route(SERVICE_ROOT, get(index))
        .route(&format!("{SERVICE_ROOT}/"), get(index))
        .route(&op(""), get(descriptor))
        .route(&op("/subscribe"), post(subscribe))
        .route(&op("/push"), post(push))
        .route(&op("/pull"), get(pull))
        .route(&op("/unsubscribe"), post(unsubscribe))
        .route(&op("/status"), get(status))
        .fallback(not_found)
        .with_state(shared)
}

async fn not_found() -> ServiceError {
    ServiceError::NotFound("no such path".into())
}

async fn index(State(shared): State<Arc<Shared>>) -> Json<Vec<String>> {
    Json(shared.service_names())
}

async fn descriptor(State(shared): State<Arc<Shared>>, Path(name): Path<String>) -> Reply<ServiceDescriptor> {
    shared.descriptor(&name).map(Json)
}

async fn subscribe(State(shared): State<Arc<Shared>>, Path(name): Path<String>) -> Reply<SubscribeResponse> {
    shared.subscribe(&name).map(|sub_id| Json(SubscribeResponse { sub_id }))
}

async fn push(State(shared): State<Arc<Shared>>, Path(name): Path<String>, body: Bytes) -> Reply<AcceptedResponse> {
    let frame: DataFrame = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    shared.push(&name, &frame)?;
    Ok(Json(AcceptedResponse { accepted: true }))
}

fn sub_id(query: &HashMap<String, String>) -> Result<&str, ServiceError> {
    query
        .get("subId")
        .map(String::as_str)
        .ok_or_else(|| ServiceError::BadRequest("missing subId".into()))
}

async fn pull(
    State(shared): State<Arc<Shared>>,
    Path(name): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Reply<PullResponse> {
    let wait = match query.get("maxWaitMillis") {
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| ServiceError::BadRequest(format!("bad maxWaitMillis {v:?}")))?,
        None => 0,
    };
    let frames = shared
        .pull(&name, sub_id(&query)?, Duration::from_millis(wait))
        .await?;
    Ok(Json(PullResponse { frames }))
}

async fn unsubscribe(State(shared): State<Arc<Shared>>, Path(name): Path<String>, body: Bytes) -> Reply<ClosedResponse> {
    let req: UnsubscribeRequest = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    shared.unsubscribe(&name, &req.sub_id)?;
    Ok(Json(ClosedResponse { closed: true }))
}

async fn status(
    State(shared): State<Arc<Shared>>,
    Path(name): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Reply<StatusResponse> {
    shared.status(&name, sub_id(&query)?).map(Json)
}
