//! Deterministic backend replaying canned outputs keyed by image digest.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendInfo, Capabilities, ClassificationResult, Detection, ImageInput, ModelBackend};
use crate::error::{Error, Result};
use crate::geometry::NormalizedBox;
use crate::metrics::validate_distribution;
use crate::taxonomy::{NUM_CLASSES, NUM_DETECTION_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureClassification {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureDetection {
    pub class: usize,
    pub conf: f64,
    #[serde(rename = "box")]
    pub bbox: NormalizedBox,
}

/// On-disk layout: `{"classifications": {digest: {"probs": [13]}},
/// "detections": {digest: [{"class", "conf", "box"}]}}`. Maps are ordered so
/// serialization is byte-stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureStore {
    #[serde(default)]
    pub classifications: BTreeMap<String, FixtureClassification>,
    #[serde(default)]
    pub detections: BTreeMap<String, Vec<FixtureDetection>>,
}

impl FixtureStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let store: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        store.validate()?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_json_bytes())?;
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("fixture store serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn validate(&self) -> Result<()> {
        let check_digest = |d: &str| {
            if d.len() == 64 && d.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{d:?} is not a lowercase hex SHA-256 digest")))
            }
        };
        for (digest, c) in &self.classifications {
            check_digest(digest)?;
            if c.probs.len() != NUM_CLASSES {
                return Err(Error::invalid(format!("{digest}: expected {NUM_CLASSES} probabilities")));
            }
            validate_distribution(&c.probs).map_err(|e| Error::invalid(format!("{digest}: {e}")))?;
        }
        for (digest, dets) in &self.detections {
            check_digest(digest)?;
            for d in dets {
                if d.class >= NUM_DETECTION_CLASSES || !(0.0..=1.0).contains(&d.conf) {
                    return Err(Error::invalid(format!("{digest}: invalid detection {d:?}")));
                }
                d.bbox.validate()?;
            }
        }
        Ok(())
    }

    pub fn insert_classification(&mut self, digest: impl Into<String>, probs: Vec<f64>) {
        self.classifications.insert(digest.into(), FixtureClassification { probs });
    }

    pub fn insert_detections(&mut self, digest: impl Into<String>, dets: Vec<FixtureDetection>) {
        self.detections.insert(digest.into(), dets);
    }
}

pub struct FixtureBackend {
    info: BackendInfo,
    store: Arc<FixtureStore>,
    delay: Duration,
}

impl FixtureBackend {
    pub fn new(backend_id: impl Into<String>, store: Arc<FixtureStore>) -> Self {
        Self {
            info: BackendInfo {
                backend_id: backend_id.into(),
                version: "fixture-1".into(),
                capabilities: Capabilities { classify: true, detect: true },
                input_side: 256,
            },
            store,
            delay: Duration::ZERO,
        }
    }

    pub fn with_capabilities(mut self, capabilities: Capabilities) -> Self {
        self.info.capabilities = capabilities;
        self
    }

    /// Sleeps this long per request, to stand in for a slow model.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    fn lookup<'a, T>(&self, map: &'a BTreeMap<String, T>, input: &ImageInput) -> Result<&'a T> {
        map.get(&input.digest)
            .or_else(|| input.parent_digest.as_ref().and_then(|p| map.get(p)))
            .ok_or_else(|| Error::FixtureMiss(input.digest.clone()))
    }

    fn pause(&self) {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
    }
}

impl ModelBackend for FixtureBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn classify(&mut self, input: &ImageInput) -> Result<ClassificationResult> {
        if !self.info.capabilities.classify {
            return Err(Error::Unsupported(format!("backend {} cannot classify", self.info.backend_id)));
        }
        self.pause();
        let entry = self.lookup(&self.store.classifications, input)?;
        ClassificationResult::new(entry.probs.clone())
    }

    fn detect_raw(&mut self, input: &ImageInput) -> Result<Vec<Detection>> {
        if !self.info.capabilities.detect {
            return Err(Error::Unsupported(format!("backend {} cannot detect", self.info.backend_id)));
        }
        self.pause();
        self.lookup(&self.store.detections, input)?
            .iter()
            .map(|d| Detection::new(d.class, d.conf, d.bbox))
            .collect()
    }
}
