//! JSON payloads exchanged over the platform queues.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ClassificationResult, Detection};

pub const JOBS_CLASSIFICATION: &str = "jobs.classification";
pub const JOBS_DETECTION: &str = "jobs.detection";
pub const RESULTS: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Detection,
}

impl TaskKind {
    pub const ALL: [TaskKind; 2] = [TaskKind::Classification, TaskKind::Detection];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Detection => "detection",
        }
    }

    pub fn queue(self) -> &'static str {
        match self {
            TaskKind::Classification => JOBS_CLASSIFICATION,
            TaskKind::Detection => JOBS_DETECTION,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "detection" => Ok(TaskKind::Detection),
            other => Err(Error::invalid(format!("unknown task kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMessage {
    pub job_id: String,
    pub image_digest: String,
    pub task_kind: TaskKind,
    #[serde(default)]
    pub verify: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conf_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nms_iou: Option<f64>,
}

/// Worker output. A message with `processing` set only announces that a
/// worker picked the job up and carries no result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMessage {
    pub job_id: String,
    pub backend_id: String,
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub processing: bool,
}

impl ResultMessage {
    pub fn progress(job_id: &str, backend_id: &str) -> Self {
        Self {
            job_id: job_id.to_string(),
            backend_id: backend_id.to_string(),
            detections: Vec::new(),
            classification: None,
            error: None,
            processing: true,
        }
    }

    pub fn failure(job_id: &str, backend_id: &str, error: impl Into<String>) -> Self {
        Self { error: Some(error.into()), processing: false, ..Self::progress(job_id, backend_id) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("result message serializes")
    }
}

impl JobMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("job message serializes")
    }
}
