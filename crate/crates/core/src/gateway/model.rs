use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::GeoPoint;
use crate::inference::{ClassificationResult, Detection};
use crate::messages::TaskKind;
use crate::treatment::TreatmentEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub username: String,
    /// PHC string; carries its own salt.
    pub credential_hash: String,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRecord {
    pub upload_id: String,
    pub owner: String,
    pub digest: String,
    pub size: u64,
    pub geo: Option<GeoPoint>,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Processing,
    Done,
    Failed,
}

impl JobStatus {
    /// Position along queued -> processing -> done|failed.
    pub fn rank(self) -> u8 {
        match self {
            JobStatus::Queued => 0,
            JobStatus::Processing => 1,
            JobStatus::Done | JobStatus::Failed => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.rank() == 2
    }
}

impl fmt::Display for JobStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobStatus::Queued => "queued",
            JobStatus::Processing => "processing",
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub owner: String,
    pub upload_id: String,
    pub task_kind: TaskKind,
    pub verify: bool,
    pub status: JobStatus,
    /// Set exactly when the job is done.
    pub result_ref: Option<String>,
    pub error: Option<String>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

/// Inference output as stored; treatments are joined on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub job_id: String,
    pub backend_id: String,
    pub detections: Vec<Detection>,
    pub classification: Option<ClassificationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub job_id: String,
    pub backend_id: String,
    pub detections: Vec<Detection>,
    pub classification: Option<ClassificationResult>,
    pub treatments: Vec<TreatmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutbreakReport {
    pub job_id: String,
    pub class_index: usize,
    pub geo: GeoPoint,
    pub observed_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutbreakGroup {
    pub class: String,
    pub count: usize,
    pub centroid: GeoPoint,
}
