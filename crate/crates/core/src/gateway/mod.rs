//! Authentication, uploads, job dispatch, result retrieval and outbreak
//! aggregation, with embedded persistence.

mod auth;
mod config;
mod http;
mod model;
mod repository;
mod service;

pub use auth::{hash_password, validate_password, validate_username, verify_password, IssuedToken, TokenStore};
pub use config::{GatewayConfig, DEFAULT_MAX_UPLOAD_BYTES, DEFAULT_TOKEN_TTL};
pub use http::{error_code, router, ApiError, AppState};
pub use model::{
    DiagnosisResult, Job, JobStatus, OutbreakGroup, OutbreakReport, StoredResult, UploadRecord, UserAccount,
};
pub use repository::{FileRepository, Repository};
pub use service::{ApplyOutcome, Gateway, JobOptions, ResultPump};
