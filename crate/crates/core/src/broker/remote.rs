//! HTTP client for a broker mounted on the gateway, so workers can run as
//! separate processes. The request bodies are shared with the server side.

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Delivery, Lease, MessageQueue};
use crate::error::{Error, Result};

pub const BROKER_TOKEN_HEADER: &str = "x-broker-token";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeclareRequest {
    pub durable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishRequest {
    #[serde(with = "super::hex_bytes")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishResponse {
    pub message_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsumeRequest {
    pub consumer_id: String,
    #[serde(default)]
    pub lease_ms: Option<u64>,
    /// Long-poll budget; zero or absent returns immediately.
    #[serde(default)]
    pub wait_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NackRequest {
    pub lease: Lease,
    pub requeue: bool,
}

/// Error body returned by the server: `{"error": code, "message": text}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RemoteBroker {
    base_url: String,
    token: Option<String>,
    client: Client,
}

impl RemoteBroker {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_secs(90))
            .build()
            .map_err(|e| Error::Unavailable(e.to_string()))?;
        Ok(Self { base_url: base_url.into().trim_end_matches('/').to_string(), token, client })
    }

    fn post<T: Serialize>(&self, path: &str, body: &T) -> Result<Response> {
        let mut req = self.client.post(format!("{}/broker{path}", self.base_url)).json(body);
        if let Some(t) = &self.token {
            req = req.header(BROKER_TOKEN_HEADER, t);
        }
        let resp = req.send().map_err(|e| Error::Unavailable(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let body: Option<ErrorBody> = resp.json().ok();
        let message = body.as_ref().map(|b| b.message.clone()).unwrap_or_else(|| status.to_string());
        Err(match (status, body.as_ref().map(|b| b.error.as_str())) {
            (_, Some("lease_invalid")) => Error::LeaseInvalid,
            (StatusCode::NOT_FOUND, _) => Error::NotFound(message),
            (StatusCode::BAD_REQUEST, _) => Error::InvalidInput(message),
            (StatusCode::UNAUTHORIZED, _) => Error::Unauthorized,
            _ => Error::Unavailable(message),
        })
    }

    fn consume_inner(&self, queue: &str, consumer_id: &str, lease: Option<Duration>, wait: Duration) -> Result<Option<Delivery>> {
        let req = ConsumeRequest {
            consumer_id: consumer_id.to_string(),
            lease_ms: lease.map(|d| d.as_millis() as u64),
            wait_ms: Some(wait.as_millis() as u64),
        };
        let resp = self.post(&format!("/queues/{queue}/consume"), &req)?;
        if resp.status() == StatusCode::NO_CONTENT {
            return Ok(None);
        }
        resp.json().map(Some).map_err(|e| Error::Unavailable(e.to_string()))
    }
}

impl MessageQueue for RemoteBroker {
    fn declare_queue(&self, name: &str, durable: bool) -> Result<()> {
        self.post(&format!("/queues/{name}"), &DeclareRequest { durable }).map(drop)
    }

    fn publish(&self, queue: &str, payload: &[u8]) -> Result<u64> {
        let resp = self.post(&format!("/queues/{queue}/publish"), &PublishRequest { payload: payload.to_vec() })?;
        let body: PublishResponse = resp.json().map_err(|e| Error::Unavailable(e.to_string()))?;
        Ok(body.message_id)
    }

    fn consume(&self, queue: &str, consumer_id: &str, lease: Option<Duration>) -> Result<Option<Delivery>> {
        self.consume_inner(queue, consumer_id, lease, Duration::ZERO)
    }

    fn consume_blocking(
        &self,
        queue: &str,
        consumer_id: &str,
        lease: Option<Duration>,
        timeout: Duration,
    ) -> Result<Option<Delivery>> {
        self.consume_inner(queue, consumer_id, lease, timeout)
    }

    fn ack(&self, lease: &Lease) -> Result<()> {
        self.post("/ack", lease).map(drop)
    }

    fn nack(&self, lease: &Lease, requeue: bool) -> Result<()> {
        self.post("/nack", &NackRequest { lease: lease.clone(), requeue }).map(drop)
    }
}
