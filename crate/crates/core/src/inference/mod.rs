//! Model backends and detection post-processing.
//!
//! A backend turns an image into either a 13-way probability vector or raw
//! detections. Everything downstream of the backend (confidence filter,
//! class-wise NMS, crop-and-classify verification) is pure and lives here.

mod backend;
mod fixture;
mod heuristic;
mod postprocess;
mod verify;

pub use backend::{
    digest_hex, BackendFactory, BackendInfo, BackendRegistry, Capabilities, ClassificationResult,
    Detection, DetectionStatus, ImageInput, ModelBackend,
};
pub use fixture::{FixtureBackend, FixtureClassification, FixtureDetection, FixtureStore};
pub use heuristic::HeuristicBackend;
pub use postprocess::{detect, nms, DetectParams, DEFAULT_CONF_THRESHOLD, DEFAULT_NMS_IOU};
pub use verify::{
    crop_for_verification, verify_detections, VerifyParams, DEFAULT_AGREE_PROB, DEFAULT_CROP_MARGIN,
};
