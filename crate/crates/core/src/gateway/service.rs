use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::auth::{self, IssuedToken, TokenStore};
use super::config::GatewayConfig;
use super::model::{
    DiagnosisResult, Job, JobStatus, OutbreakGroup, OutbreakReport, StoredResult, UploadRecord, UserAccount,
};
use super::repository::Repository;
use crate::blobstore::BlobStore;
use crate::broker::{dead_letter_name, MessageQueue};
use crate::clock::SharedClock;
use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, GeoRect};
use crate::messages::{JobMessage, ResultMessage, TaskKind, RESULTS};
use crate::raster::RasterImage;
use crate::taxonomy::{detection_to_class, index_to_slug, is_normal};
use crate::treatment::{TreatmentEntry, TreatmentKb};

/// Optional per-job detection thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JobOptions {
    pub conf_threshold: Option<f64>,
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    /// Already reflected; nothing changed.
    Duplicate,
    UnknownJob,
}

/// The backend web server's application logic, independent of HTTP.
pub struct Gateway {
    repo: Arc<dyn Repository>,
    blobs: BlobStore,
    queue: Arc<dyn MessageQueue>,
    treatments: Arc<TreatmentKb>,
    clock: SharedClock,
    tokens: TokenStore,
    max_upload_bytes: usize,
    // serializes job state transitions so result application is atomic
    transitions: Mutex<()>,
}

impl Gateway {
    pub fn new(
        config: &GatewayConfig,
        repo: Arc<dyn Repository>,
        blobs: BlobStore,
        queue: Arc<dyn MessageQueue>,
        treatments: Arc<TreatmentKb>,
        clock: SharedClock,
    ) -> Result<Self> {
        for q in TaskKind::ALL.iter().map(|k| k.queue()).chain([RESULTS]) {
            queue.declare_queue(q, true)?;
        }
        Ok(Self {
            repo,
            blobs,
            queue,
            treatments,
            tokens: TokenStore::new(config.token_ttl.as_millis() as u64, clock.clone()),
            clock,
            max_upload_bytes: config.max_upload_bytes,
            transitions: Mutex::new(()),
        })
    }

    pub fn treatments(&self) -> &TreatmentKb {
        &self.treatments
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn register(&self, username: &str, password: &str) -> Result<String> {
        auth::validate_username(username)?;
        auth::validate_password(password)?;
        if self.repo.user_by_name(username)?.is_some() {
            return Err(Error::Conflict(format!("username {username} is taken")));
        }
        let user = UserAccount {
            user_id: auth::random_id(),
            username: username.to_string(),
            credential_hash: auth::hash_password(password)?,
            created_at_ms: self.clock.now_ms(),
        };
        let user_id = user.user_id.clone();
        self.repo.insert_user(user)?;
        Ok(user_id)
    }

    /// Unknown users and wrong passwords fail identically.
    pub fn login(&self, username: &str, password: &str) -> Result<IssuedToken> {
        let user = self.repo.user_by_name(username)?.ok_or(Error::Unauthorized)?;
        if !auth::verify_password(password, &user.credential_hash) {
            return Err(Error::Unauthorized);
        }
        Ok(self.tokens.issue(&user.user_id))
    }

    pub fn authenticate(&self, token: &str) -> Result<String> {
        self.tokens.resolve(token)
    }

    pub fn upload_image(&self, token: &str, bytes: &[u8], geo: Option<GeoPoint>) -> Result<UploadRecord> {
        let owner = self.authenticate(token)?;
        if bytes.len() > self.max_upload_bytes {
            return Err(Error::PayloadTooLarge { size: bytes.len(), limit: self.max_upload_bytes });
        }
        RasterImage::decode(bytes).map_err(|e| match e {
            Error::UnsupportedMedia(m) => Error::UnsupportedMedia(m),
            other => Error::UnsupportedMedia(other.to_string()),
        })?;
        let digest = self.blobs.put(bytes)?;
        let record = UploadRecord {
            upload_id: auth::random_id(),
            owner,
            digest,
            size: bytes.len() as u64,
            geo,
            created_at_ms: self.clock.now_ms(),
        };
        self.repo.insert_upload(record.clone())?;
        Ok(record)
    }

    pub fn create_job(
        &self,
        token: &str,
        upload_id: &str,
        task_kind: TaskKind,
        verify: bool,
        options: JobOptions,
    ) -> Result<Job> {
        let owner = self.authenticate(token)?;
        let upload = self.repo.upload(upload_id)?.ok_or_else(|| Error::not_found(format!("upload {upload_id}")))?;
        if upload.owner != owner {
            return Err(Error::Forbidden);
        }
        let now = self.clock.now_ms();
        let job = Job {
            job_id: auth::random_id(),
            owner,
            upload_id: upload_id.to_string(),
            task_kind,
            verify,
            status: JobStatus::Queued,
            result_ref: None,
            error: None,
            created_at_ms: now,
            updated_at_ms: now,
        };
        self.repo.insert_job(job.clone())?;
        let message = JobMessage {
            job_id: job.job_id.clone(),
            image_digest: upload.digest,
            task_kind,
            verify,
            conf_threshold: options.conf_threshold,
            nms_iou: options.nms_iou,
        };
        if let Err(e) = self.queue.publish(task_kind.queue(), &message.to_bytes()) {
            self.fail_job(&job.job_id, format!("dispatch failed: {e}"))?;
            return Err(Error::Unavailable(format!("could not dispatch job: {e}")));
        }
        Ok(job)
    }

    fn owned_job(&self, token: &str, job_id: &str) -> Result<Job> {
        let user = self.authenticate(token)?;
        let job = self.repo.job(job_id)?.ok_or_else(|| Error::not_found(format!("job {job_id}")))?;
        if job.owner != user {
            return Err(Error::Forbidden);
        }
        Ok(job)
    }

    pub fn job_status(&self, token: &str, job_id: &str) -> Result<Job> {
        self.owned_job(token, job_id)
    }

    /// Conflict unless the job is done; the message names the status.
    pub fn get_result(&self, token: &str, job_id: &str) -> Result<DiagnosisResult> {
        let job = self.owned_job(token, job_id)?;
        if job.status != JobStatus::Done {
            return Err(Error::Conflict(format!("job {job_id} is {}", job.status)));
        }
        let stored = self.repo.result(job_id)?.ok_or_else(|| Error::not_found(format!("result for {job_id}")))?;
        let treatments = self.treatments_for(&stored)?;
        Ok(DiagnosisResult {
            job_id: stored.job_id,
            backend_id: stored.backend_id,
            detections: stored.detections,
            classification: stored.classification,
            treatments,
        })
    }

    /// The distinct disease classes in a result, ascending.
    pub fn result_classes(result: &StoredResult) -> Result<BTreeSet<usize>> {
        let mut classes = BTreeSet::new();
        for d in &result.detections {
            classes.insert(detection_to_class(d.class_index)?);
        }
        if let Some(c) = &result.classification {
            classes.insert(c.top_class);
        }
        Ok(classes)
    }

    fn treatments_for(&self, result: &StoredResult) -> Result<Vec<TreatmentEntry>> {
        Self::result_classes(result)?.into_iter().map(|c| self.treatments.treatment_for(c).cloned()).collect()
    }

    fn fail_job(&self, job_id: &str, reason: String) -> Result<ApplyOutcome> {
        let _guard = self.transitions.lock().unwrap_or_else(|e| e.into_inner());
        let Some(mut job) = self.repo.job(job_id)? else { return Ok(ApplyOutcome::UnknownJob) };
        if job.status.is_terminal() {
            return Ok(ApplyOutcome::Duplicate);
        }
        job.status = JobStatus::Failed;
        job.error = Some(reason);
        job.updated_at_ms = self.clock.now_ms();
        self.repo.update_job(job)?;
        Ok(ApplyOutcome::Applied)
    }

    /// Applies a worker message. Safe to repeat: status only moves forward
    /// and a job keeps its first result.
    pub fn apply_result(&self, msg: &ResultMessage) -> Result<ApplyOutcome> {
        if let Some(err) = &msg.error {
            return self.fail_job(&msg.job_id, err.clone());
        }
        let _guard = self.transitions.lock().unwrap_or_else(|e| e.into_inner());
        let Some(mut job) = self.repo.job(&msg.job_id)? else { return Ok(ApplyOutcome::UnknownJob) };
        let now = self.clock.now_ms();
        if msg.processing {
            if job.status != JobStatus::Queued {
                return Ok(ApplyOutcome::Duplicate);
            }
            job.status = JobStatus::Processing;
            job.updated_at_ms = now;
            self.repo.update_job(job)?;
            return Ok(ApplyOutcome::Applied);
        }
        if job.status.is_terminal() {
            return Ok(ApplyOutcome::Duplicate);
        }
        let stored = StoredResult {
            job_id: msg.job_id.clone(),
            backend_id: msg.backend_id.clone(),
            detections: msg.detections.clone(),
            classification: msg.classification.clone(),
        };
        let classes = Self::result_classes(&stored)?;
        self.repo.insert_result(stored)?;
        job.status = JobStatus::Done;
        job.result_ref = Some(job.job_id.clone());
        job.updated_at_ms = now;
        let upload = self.repo.upload(&job.upload_id)?;
        let job_id = job.job_id.clone();
        self.repo.update_job(job)?;
        if let Some(geo) = upload.and_then(|u| u.geo) {
            for class_index in classes.into_iter().filter(|&c| !is_normal(c)) {
                self.repo.insert_outbreak(OutbreakReport { job_id: job_id.clone(), class_index, geo, observed_at_ms: now })?;
            }
        }
        Ok(ApplyOutcome::Applied)
    }

    /// Marks the job behind a dead-lettered job message as failed.
    pub fn apply_dead_letter(&self, payload: &[u8]) -> Result<ApplyOutcome> {
        match serde_json::from_slice::<JobMessage>(payload) {
            Ok(m) => self.fail_job(&m.job_id, "job could not be processed after repeated attempts".into()),
            Err(_) => Ok(ApplyOutcome::UnknownJob),
        }
    }

    /// Readable by any authenticated user; carries no image data.
    pub fn list_outbreaks(&self, token: &str, bbox: GeoRect, since_ms: u64) -> Result<Vec<OutbreakGroup>> {
        self.authenticate(token)?;
        let mut groups: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
        for r in self.repo.outbreaks()? {
            if r.observed_at_ms >= since_ms && bbox.contains(&r.geo) {
                let g = groups.entry(r.class_index).or_insert((0, 0.0, 0.0));
                g.0 += 1;
                g.1 += r.geo.latitude;
                g.2 += r.geo.longitude;
            }
        }
        groups
            .into_iter()
            .map(|(class, (count, lat, lon))| {
                Ok(OutbreakGroup {
                    class: index_to_slug(class)?.to_string(),
                    count,
                    centroid: GeoPoint { latitude: lat / count as f64, longitude: lon / count as f64 },
                })
            })
            .collect()
    }

    /// Handles at most one message from `results` and one from each
    /// dead-letter queue. Returns how many messages were settled.
    pub fn pump_once(&self, wait: Duration) -> Result<usize> {
        let mut handled = 0;
        if let Some(d) = self.queue.consume_blocking(RESULTS, "gateway", None, wait)? {
            match serde_json::from_slice::<ResultMessage>(&d.envelope.payload) {
                Ok(msg) => {
                    if let Err(e) = self.apply_result(&msg) {
                        self.queue.nack(&d.lease, true)?;
                        return Err(e);
                    }
                }
                Err(e) => tracing::warn!(error = %e, "dropping unreadable result message"),
            }
            self.queue.ack(&d.lease)?;
            handled += 1;
        }
        for kind in TaskKind::ALL {
            if let Some(d) = self.queue.consume(&dead_letter_name(kind.queue()), "gateway", None)? {
                if let Err(e) = self.apply_dead_letter(&d.envelope.payload) {
                    self.queue.nack(&d.lease, true)?;
                    return Err(e);
                }
                self.queue.ack(&d.lease)?;
                handled += 1;
            }
        }
        Ok(handled)
    }
}

/// Background thread feeding worker output into the gateway.
pub struct ResultPump {
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ResultPump {
    pub fn spawn(gateway: Arc<Gateway>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let join = std::thread::Builder::new()
            .name("result-pump".into())
            .spawn(move || {
                while !flag.load(Ordering::SeqCst) {
                    if let Err(e) = gateway.pump_once(Duration::from_millis(50)) {
                        tracing::warn!(error = %e, "result pump error");
                        std::thread::sleep(Duration::from_millis(50));
                    }
                }
            })
            .expect("spawn result pump");
        Self { stop, join: Some(join) }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ResultPump {
    fn drop(&mut self) {
        self.stop();
    }
}
