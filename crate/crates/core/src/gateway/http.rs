//! HTTP surface of the gateway, plus the broker routes remote workers use.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::model::{Job, JobStatus};
use super::service::{Gateway, JobOptions};
use crate::broker::{
    Broker, ConsumeRequest, DeclareRequest, Lease, MessageQueue, NackRequest, PublishRequest, PublishResponse,
    BROKER_TOKEN_HEADER,
};
use crate::error::Error;
use crate::geometry::{GeoPoint, GeoRect};
use crate::messages::TaskKind;

const MAX_LONG_POLL: Duration = Duration::from_secs(30);

#[derive(Clone)]
pub struct AppState {
    pub gateway: Arc<Gateway>,
    /// Exposed under `/broker` when present.
    pub broker: Option<Broker>,
    pub broker_token: Option<String>,
    pub max_upload_bytes: usize,
}

pub struct ApiError {
    error: Error,
    status: Option<JobStatus>,
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        Self { error, status: None }
    }
}

pub fn error_code(error: &Error) -> (StatusCode, &'static str) {
    match error {
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid_input"),
        Error::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
        Error::Forbidden => (StatusCode::FORBIDDEN, "forbidden"),
        Error::NotFound(_) | Error::FixtureMiss(_) => (StatusCode::NOT_FOUND, "not_found"),
        Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
        Error::LeaseInvalid => (StatusCode::CONFLICT, "lease_invalid"),
        Error::PayloadTooLarge { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large"),
        Error::UnsupportedMedia(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media"),
        Error::Unsupported(_) | Error::Refused(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
        Error::Unavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "unavailable"),
        Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = error_code(&self.error);
        let message = match &self.error {
            Error::Io(_) => "internal error".to_string(),
            other => other.to_string(),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self.error, "request failed");
        }
        let mut body = json!({ "error": code, "message": message });
        if let Some(s) = self.status {
            body["status"] = json!(s);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(Error::Unavailable(format!("worker task failed: {e}"))))?
        .map_err(ApiError::from)
}

fn bearer(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::Unauthorized.into())
}

#[derive(Debug, Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

async fn register(State(st): State<AppState>, Json(c): Json<Credentials>) -> ApiResult<impl IntoResponse> {
    let user_id = blocking(move || st.gateway.register(&c.username, &c.password)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "user_id": user_id }))))
}

async fn login(State(st): State<AppState>, Json(c): Json<Credentials>) -> ApiResult<impl IntoResponse> {
    let t = blocking(move || st.gateway.login(&c.username, &c.password)).await?;
    Ok(Json(json!({ "token": t.token, "expires_at_ms": t.expires_at_ms })))
}

async fn upload(State(st): State<AppState>, headers: HeaderMap, mut form: Multipart) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let mut file = None;
    let (mut lat, mut lon) = (None, None);
    let field_error = |e: axum::extract::multipart::MultipartError| -> ApiError {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Error::PayloadTooLarge { size: st.max_upload_bytes + 1, limit: st.max_upload_bytes }.into()
        } else {
            Error::invalid(format!("malformed multipart body: {}", e.body_text())).into()
        }
    };
    while let Some(field) = form.next_field().await.map_err(field_error)? {
        match field.name().unwrap_or_default() {
            "file" => file = Some(field.bytes().await.map_err(field_error)?),
            "lat" => lat = Some(field.text().await.map_err(field_error)?),
            "lon" => lon = Some(field.text().await.map_err(field_error)?),
            _ => {}
        }
    }
    let bytes = file.ok_or_else(|| ApiError::from(Error::invalid("missing file field")))?;
    let parse = |name: &str, v: &str| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("{name} is not a number")));
    let geo = match (lat, lon) {
        (None, None) => None,
        (Some(a), Some(o)) => Some(GeoPoint::new(parse("lat", &a)?, parse("lon", &o)?)?),
        _ => return Err(Error::invalid("lat and lon must be given together").into()),
    };
    let gateway = st.gateway.clone();
    let record = blocking(move || gateway.upload_image(&token, &bytes, geo)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "upload_id": record.upload_id, "digest": record.digest }))))
}

#[derive(Debug, Deserialize)]
struct CreateJob {
    upload_id: String,
    task_kind: TaskKind,
    #[serde(default)]
    verify: bool,
    #[serde(default)]
    conf_threshold: Option<f64>,
    #[serde(default)]
    nms_iou: Option<f64>,
}

/// Job as shown to its owner.
#[derive(Debug, Serialize)]
struct JobView {
    job_id: String,
    upload_id: String,
    task_kind: TaskKind,
    verify: bool,
    status: JobStatus,
    result_ref: Option<String>,
    error: Option<String>,
    created_at_ms: u64,
    updated_at_ms: u64,
}

impl From<Job> for JobView {
    fn from(j: Job) -> Self {
        Self {
            job_id: j.job_id,
            upload_id: j.upload_id,
            task_kind: j.task_kind,
            verify: j.verify,
            status: j.status,
            result_ref: j.result_ref,
            error: j.error,
            created_at_ms: j.created_at_ms,
            updated_at_ms: j.updated_at_ms,
        }
    }
}

async fn create_job(State(st): State<AppState>, headers: HeaderMap, Json(req): Json<CreateJob>) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let options = JobOptions { conf_threshold: req.conf_threshold, nms_iou: req.nms_iou };
    let job = blocking(move || st.gateway.create_job(&token, &req.upload_id, req.task_kind, req.verify, options)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.job_id, "status": job.status }))))
}

async fn job_status(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let token = bearer(&headers)?;
    let job = blocking(move || st.gateway.job_status(&token, &id)).await?;
    Ok(Json(job.into()))
}

async fn job_result(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let gateway = st.gateway.clone();
    let outcome = blocking(move || match gateway.get_result(&token, &id) {
        Ok(r) => Ok(Ok(r)),
        Err(Error::Conflict(m)) => {
            let status = gateway.job_status(&token, &id)?.status;
            Ok(Err((m, status)))
        }
        Err(e) => Err(e),
    })
    .await?;
    match outcome {
        Ok(result) => Ok(Json(result)),
        Err((message, status)) => Err(ApiError { error: Error::Conflict(message), status: Some(status) }),
    }
}

#[derive(Debug, Deserialize)]
struct OutbreakQuery {
    min_lat: f64,
    min_lon: f64,
    max_lat: f64,
    max_lon: f64,
    #[serde(default)]
    since: u64,
}

async fn outbreaks(State(st): State<AppState>, headers: HeaderMap, Query(q): Query<OutbreakQuery>) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let bbox = GeoRect::new(q.min_lat, q.min_lon, q.max_lat, q.max_lon)?;
    let groups = blocking(move || st.gateway.list_outbreaks(&token, bbox, q.since)).await?;
    Ok(Json(groups))
}

async fn treatment(State(st): State<AppState>, Path(slug): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(st.gateway.treatments().by_slug(&slug)?.clone()))
}

async fn health() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

fn broker_of(st: &AppState, headers: &HeaderMap) -> ApiResult<Broker> {
    if let Some(expected) = &st.broker_token {
        let given = headers.get(BROKER_TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return Err(Error::Unauthorized.into());
        }
    }
    st.broker.clone().ok_or_else(|| Error::not_found("no broker on this gateway").into())
}

async fn broker_declare(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(name): Path<String>,
    Json(req): Json<DeclareRequest>,
) -> ApiResult<StatusCode> {
    let broker = broker_of(&st, &headers)?;
    broker.declare_queue(&name, req.durable)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn broker_publish(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(name): Path<String>,
    Json(req): Json<PublishRequest>,
) -> ApiResult<Json<PublishResponse>> {
    let broker = broker_of(&st, &headers)?;
    let message_id = blocking(move || broker.publish(&name, &req.payload)).await?;
    Ok(Json(PublishResponse { message_id }))
}

async fn broker_consume(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(name): Path<String>,
    Json(req): Json<ConsumeRequest>,
) -> ApiResult<Response> {
    let broker = broker_of(&st, &headers)?;
    let wait = Duration::from_millis(req.wait_ms.unwrap_or(0)).min(MAX_LONG_POLL);
    let lease = req.lease_ms.map(Duration::from_millis);
    let delivery = blocking(move || broker.consume_blocking(&name, &req.consumer_id, lease, wait)).await?;
    Ok(match delivery {
        Some(d) => Json(d).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn broker_ack(State(st): State<AppState>, headers: HeaderMap, Json(lease): Json<Lease>) -> ApiResult<StatusCode> {
    broker_of(&st, &headers)?.ack(&lease)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn broker_nack(State(st): State<AppState>, headers: HeaderMap, Json(req): Json<NackRequest>) -> ApiResult<StatusCode> {
    broker_of(&st, &headers)?.nack(&req.lease, req.requeue)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(state: AppState) -> Router {
    // multipart framing adds a little on top of the image itself
    let upload_limit = state.max_upload_bytes.saturating_mul(2).max(1024 * 1024);
    Router::new()
        .route("/health", get(health))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/images", post(upload).layer(DefaultBodyLimit::max(upload_limit)))
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/result", get(job_result))
        .route("/outbreaks", get(outbreaks))
        .route("/treatments/{slug}", get(treatment))
        .route("/broker/queues/{name}", post(broker_declare))
        .route("/broker/queues/{name}/publish", post(broker_publish))
        .route("/broker/queues/{name}/consume", post(broker_consume))
        .route("/broker/ack", post(broker_ack))
        .route("/broker/nack", post(broker_nack))
        .with_state(state)
}
