use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::NormalizedBox;
use crate::metrics::{argmax, validate_distribution};
use crate::raster::RasterImage;
use crate::taxonomy::{NUM_CLASSES, NUM_DETECTION_CLASSES};

/// Lowercase hex SHA-256.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub classify: bool,
    pub detect: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub backend_id: String,
    pub version: String,
    pub capabilities: Capabilities,
    pub input_side: u32,
}

/// Decoded image plus the digest backends key on. Crops made for
/// verification carry the digest of their source image as `parent_digest`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub digest: String,
    pub raster: RasterImage,
    pub parent_digest: Option<String>,
}

impl ImageInput {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self {
            digest: digest_hex(bytes),
            raster: RasterImage::decode(bytes)?,
            parent_digest: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub probs: Vec<f64>,
    pub top_class: usize,
    pub top_prob: f64,
}

impl ClassificationResult {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() != NUM_CLASSES {
            return Err(Error::invalid(format!("expected {NUM_CLASSES} probabilities, got {}", probs.len())));
        }
        validate_distribution(&probs).map_err(Error::InvalidInput)?;
        let top_class = argmax(&probs);
        Ok(Self { top_prob: probs[top_class], top_class, probs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionStatus {
    Raw,
    Kept,
    Verified,
    Contested,
}

impl fmt::Display for DetectionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionStatus::Raw => "raw",
            DetectionStatus::Kept => "kept",
            DetectionStatus::Verified => "verified",
            DetectionStatus::Contested => "contested",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Index into the 12 detection classes.
    pub class_index: usize,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: NormalizedBox,
    pub status: DetectionStatus,
}

impl Detection {
    pub fn new(class_index: usize, confidence: f64, bbox: NormalizedBox) -> Result<Self> {
        let d = Self { class_index, confidence, bbox, status: DetectionStatus::Raw };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_index >= NUM_DETECTION_CLASSES {
            return Err(Error::invalid(format!("detection class {} out of range", self.class_index)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        self.bbox.validate()
    }
}

/// A model. One instance serves one request at a time.
pub trait ModelBackend: Send {
    fn info(&self) -> &BackendInfo;

    fn classify(&mut self, _input: &ImageInput) -> Result<ClassificationResult> {
        Err(Error::Unsupported(format!("backend {} cannot classify", self.info().backend_id)))
    }

    /// Raw detections before confidence filtering and NMS.
    fn detect_raw(&mut self, _input: &ImageInput) -> Result<Vec<Detection>> {
        Err(Error::Unsupported(format!("backend {} cannot detect", self.info().backend_id)))
    }
}

pub type BackendFactory = Arc<dyn Fn() -> Result<Box<dyn ModelBackend>> + Send + Sync>;

/// Named backend constructors. Every worker builds its own instance.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    entries: BTreeMap<String, (BackendInfo, BackendFactory)>,
}

impl fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, info: BackendInfo, factory: F)
    where
        F: Fn() -> Result<Box<dyn ModelBackend>> + Send + Sync + 'static,
    {
        self.entries.insert(info.backend_id.clone(), (info, Arc::new(factory)));
    }

    pub fn info(&self, backend_id: &str) -> Result<&BackendInfo> {
        self.entries
            .get(backend_id)
            .map(|(info, _)| info)
            .ok_or_else(|| Error::not_found(format!("backend {backend_id:?}")))
    }

    pub fn instantiate(&self, backend_id: &str) -> Result<Box<dyn ModelBackend>> {
        let (_, factory) = self
            .entries
            .get(backend_id)
            .ok_or_else(|| Error::not_found(format!("backend {backend_id:?}")))?;
        factory()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
