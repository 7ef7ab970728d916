//! At-least-once message queue with leases, redelivery and dead-lettering.

mod journal;
mod local;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use journal::{Journal, Record};
pub use local::{Broker, BrokerConfig, BrokerStats, QueueStats};
pub use remote::{
    ConsumeRequest, DeclareRequest, ErrorBody, NackRequest, PublishRequest, PublishResponse, RemoteBroker,
    BROKER_TOKEN_HEADER,
};

pub const DEFAULT_LEASE: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_DELIVERIES: u32 = 5;
pub const DEAD_SUFFIX: &str = ".dead";

pub fn dead_letter_name(queue: &str) -> String {
    format!("{queue}{DEAD_SUFFIX}")
}

pub fn validate_queue_name(name: &str) -> Result<()> {
    let ok = (1..=64).contains(&name.len())
        && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("invalid queue name {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub message_id: u64,
    pub queue: String,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    /// 1 on first delivery.
    pub delivery_count: u32,
    pub enqueued_at_ms: u64,
}

/// Proof of an exclusive claim on one delivery. `epoch` distinguishes
/// successive deliveries of the same message so a stale lease is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub message_id: u64,
    pub queue: String,
    pub consumer_id: String,
    pub expires_at_ms: u64,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub envelope: Envelope,
    pub lease: Lease,
}

/// Operations shared by the in-process broker and its HTTP client.
pub trait MessageQueue: Send + Sync {
    fn declare_queue(&self, name: &str, durable: bool) -> Result<()>;
    fn publish(&self, queue: &str, payload: &[u8]) -> Result<u64>;
    /// `lease` of `None` uses the broker default.
    fn consume(&self, queue: &str, consumer_id: &str, lease: Option<Duration>) -> Result<Option<Delivery>>;
    fn consume_blocking(
        &self,
        queue: &str,
        consumer_id: &str,
        lease: Option<Duration>,
        timeout: Duration,
    ) -> Result<Option<Delivery>>;
    fn ack(&self, lease: &Lease) -> Result<()>;
    fn nack(&self, lease: &Lease, requeue: bool) -> Result<()>;
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
