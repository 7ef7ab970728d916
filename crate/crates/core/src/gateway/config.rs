use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use serde::Deserialize;

use crate::broker::{DEFAULT_LEASE, DEFAULT_MAX_DELIVERIES};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 10 * 1024 * 1024;
pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(24 * 60 * 60);

/// Gateway settings. Every field can be overridden through a `PADDY_*`
/// environment variable.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// `PADDY_LISTEN`
    pub listen: SocketAddr,
    /// `PADDY_DATA_DIR`: repository log, blobs and broker journal live here.
    pub data_dir: PathBuf,
    /// `PADDY_TOKEN_TTL_SECS`
    #[serde(with = "secs")]
    pub token_ttl: Duration,
    /// `PADDY_MAX_UPLOAD_BYTES`
    pub max_upload_bytes: usize,
    /// `PADDY_BROKER_LEASE_SECS`
    #[serde(with = "secs")]
    pub broker_lease: Duration,
    /// `PADDY_BROKER_MAX_DELIVERIES`
    pub broker_max_deliveries: u32,
    /// `PADDY_BROKER_TOKEN`: shared secret for remote workers; when unset the
    /// broker routes are open.
    pub broker_token: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("paddy-data"),
            token_ttl: DEFAULT_TOKEN_TTL,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            broker_lease: DEFAULT_LEASE,
            broker_max_deliveries: DEFAULT_MAX_DELIVERIES,
            broker_token: None,
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::invalid(format!("{key}={value:?} is not valid")))
}

impl GatewayConfig {
    pub fn from_env() -> Result<Self> {
        Self::default().with_overrides(|k| std::env::var(k).ok())
    }

    /// Applies `PADDY_*` overrides from `lookup` on top of `self`.
    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        if let Some(v) = lookup("PADDY_LISTEN") {
            self.listen = parse("PADDY_LISTEN", &v)?;
        }
        if let Some(v) = lookup("PADDY_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup("PADDY_TOKEN_TTL_SECS") {
            self.token_ttl = Duration::from_secs(parse("PADDY_TOKEN_TTL_SECS", &v)?);
        }
        if let Some(v) = lookup("PADDY_MAX_UPLOAD_BYTES") {
            self.max_upload_bytes = parse("PADDY_MAX_UPLOAD_BYTES", &v)?;
        }
        if let Some(v) = lookup("PADDY_BROKER_LEASE_SECS") {
            self.broker_lease = Duration::from_secs(parse("PADDY_BROKER_LEASE_SECS", &v)?);
        }
        if let Some(v) = lookup("PADDY_BROKER_MAX_DELIVERIES") {
            self.broker_max_deliveries = parse("PADDY_BROKER_MAX_DELIVERIES", &v)?;
        }
        if let Some(v) = lookup("PADDY_BROKER_TOKEN") {
            self.broker_token = Some(v).filter(|t| !t.is_empty());
        }
        Ok(self)
    }

    pub fn repository_path(&self) -> PathBuf {
        self.data_dir.join("repository.log")
    }

    pub fn blob_dir(&self) -> PathBuf {
        self.data_dir.join("blobs")
    }

    pub fn journal_path(&self) -> PathBuf {
        self.data_dir.join("broker.journal")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let c = GatewayConfig::default()
            .with_overrides(|k| match k {
                "PADDY_LISTEN" => Some("0.0.0.0:9000".into()),
                "PADDY_TOKEN_TTL_SECS" => Some("60".into()),
                _ => None,
            })
            .unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.token_ttl, Duration::from_secs(60));
        assert_eq!(c.max_upload_bytes, 10 * 1024 * 1024);
        assert!(GatewayConfig::default().with_overrides(|_| Some("x".into())).is_err());
    }
}
