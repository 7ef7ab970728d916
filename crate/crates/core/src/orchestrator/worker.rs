use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender, TryRecvError};
use serde::{Deserialize, Serialize};

use crate::blobstore::BlobStore;
use crate::broker::{Delivery, MessageQueue};
use crate::error::{Error, Result};
use crate::inference::{detect, verify_detections, BackendRegistry, DetectParams, ImageInput, ModelBackend, VerifyParams};
use crate::messages::{JobMessage, ResultMessage, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub task_kind: TaskKind,
    pub backend_id: String,
    pub queue_in: String,
    pub queue_out: String,
    /// Classifier used when a detection job asks for verification.
    #[serde(default)]
    pub verifier_backend_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerState {
    Starting,
    Idle,
    Busy,
    Failed,
    Stopped,
}

impl WorkerState {
    pub fn is_live(self) -> bool {
        matches!(self, WorkerState::Starting | WorkerState::Idle | WorkerState::Busy)
    }
}

/// Everything a worker needs from the outside world.
#[derive(Clone)]
pub struct WorkerContext {
    pub queue: Arc<dyn MessageQueue>,
    pub blobs: BlobStore,
    pub registry: BackendRegistry,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Control {
    /// Finish the current job, then stop.
    Drain,
    /// Stop immediately, abandoning any lease. Used for fault injection and
    /// for dismissing unresponsive workers.
    Kill,
}

#[derive(Debug, Clone)]
pub(crate) struct Heartbeat {
    pub worker_id: u64,
    pub state: WorkerState,
    pub jobs_done: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct WorkerTiming {
    pub heartbeat_interval: Duration,
    pub lease: Option<Duration>,
}

/// Outcome of handling one delivery.
#[derive(Debug)]
pub enum JobOutcome {
    /// Result published; the delivery should be acked.
    Completed(ResultMessage),
    /// Payload unusable; requeue so the broker eventually dead-letters it.
    Malformed(String),
    /// The backend failed; requeue for another attempt.
    BackendFailed(Error),
}

pub struct JobRunner {
    spec: WorkerSpec,
    backend: Box<dyn ModelBackend>,
    verifier: Option<Box<dyn ModelBackend>>,
}

impl JobRunner {
    pub fn new(spec: WorkerSpec, registry: &BackendRegistry) -> Result<Self> {
        let backend = registry.instantiate(&spec.backend_id)?;
        let caps = backend.info().capabilities;
        let capable = match spec.task_kind {
            TaskKind::Classification => caps.classify,
            TaskKind::Detection => caps.detect,
        };
        if !capable {
            return Err(Error::Unsupported(format!("backend {} cannot run {} jobs", spec.backend_id, spec.task_kind)));
        }
        let verifier = match (&spec.verifier_backend_id, spec.task_kind) {
            (Some(id), TaskKind::Detection) => Some(registry.instantiate(id)?),
            _ => None,
        };
        Ok(Self { spec, backend, verifier })
    }

    pub fn backend_id(&self) -> &str {
        &self.backend.info().backend_id
    }

    pub fn parse(&self, payload: &[u8]) -> std::result::Result<JobMessage, String> {
        let job: JobMessage = serde_json::from_slice(payload).map_err(|e| format!("malformed job message: {e}"))?;
        if job.task_kind != self.spec.task_kind {
            return Err(format!("job {} is {} but this worker runs {}", job.job_id, job.task_kind, self.spec.task_kind));
        }
        Ok(job)
    }

    /// Runs inference for one job. Missing or undecodable images produce an
    /// error result rather than a retry, since retrying cannot help.
    pub fn run(&mut self, job: &JobMessage, blobs: &BlobStore) -> JobOutcome {
        let backend_id = self.backend_id().to_string();
        let bytes = match blobs.get(&job.image_digest) {
            Ok(b) => b,
            Err(e) => return JobOutcome::Completed(ResultMessage::failure(&job.job_id, &backend_id, e.to_string())),
        };
        let input = match ImageInput::from_bytes(&bytes) {
            Ok(i) => i,
            Err(e) => return JobOutcome::Completed(ResultMessage::failure(&job.job_id, &backend_id, e.to_string())),
        };
        let mut result = ResultMessage { processing: false, ..ResultMessage::progress(&job.job_id, &backend_id) };
        match job.task_kind {
            TaskKind::Classification => match self.backend.classify(&input) {
                Ok(c) => result.classification = Some(c),
                Err(e) => return JobOutcome::BackendFailed(e),
            },
            TaskKind::Detection => {
                let defaults = DetectParams::default();
                let params = DetectParams {
                    conf_threshold: job.conf_threshold.unwrap_or(defaults.conf_threshold),
                    nms_iou: job.nms_iou.unwrap_or(defaults.nms_iou),
                };
                if let Err(e) = params.validate() {
                    return JobOutcome::Malformed(e.to_string());
                }
                let mut dets = match detect(self.backend.as_mut(), &input, params) {
                    Ok(d) => d,
                    Err(e) => return JobOutcome::BackendFailed(e),
                };
                if job.verify {
                    let Some(verifier) = self.verifier.as_mut() else {
                        return JobOutcome::Completed(ResultMessage::failure(
                            &job.job_id,
                            &backend_id,
                            "verification requested but no verifier is configured",
                        ));
                    };
                    dets = match verify_detections(&input, &dets, verifier.as_mut(), VerifyParams::default()) {
                        Ok(d) => d,
                        Err(e) => return JobOutcome::BackendFailed(e),
                    };
                }
                result.detections = dets;
            }
        }
        JobOutcome::Completed(result)
    }
}

pub(crate) struct WorkerThread {
    pub control: Sender<Control>,
    pub killed: Arc<AtomicBool>,
    pub join: JoinHandle<()>,
}

impl WorkerThread {
    pub fn drain(&self) {
        let _ = self.control.send(Control::Drain);
    }

    pub fn kill(&self) {
        self.killed.store(true, Ordering::SeqCst);
        let _ = self.control.send(Control::Kill);
    }
}

pub(crate) fn spawn_worker(
    worker_id: u64,
    spec: WorkerSpec,
    ctx: WorkerContext,
    timing: WorkerTiming,
    heartbeats: Sender<Heartbeat>,
) -> WorkerThread {
    let (control_tx, control_rx) = crossbeam_channel::unbounded();
    let killed = Arc::new(AtomicBool::new(false));
    let pulse = Pulse::new(worker_id, heartbeats, killed.clone());
    let join = std::thread::Builder::new()
        .name(format!("worker-{worker_id}"))
        .spawn(move || {
            pulse.start_ticker(timing.heartbeat_interval);
            worker_main(worker_id, spec, ctx, timing, &pulse, control_rx);
            pulse.stop();
        })
        .expect("spawn worker thread");
    WorkerThread { control: control_tx, killed, join }
}

/// Heartbeat source. A companion thread reports the current state every
/// interval, so long jobs do not look like a dead worker. A killed worker
/// falls silent at once.
#[derive(Clone)]
struct Pulse {
    worker_id: u64,
    tx: Sender<Heartbeat>,
    state: Arc<AtomicU8>,
    jobs_done: Arc<AtomicU64>,
    running: Arc<AtomicBool>,
    killed: Arc<AtomicBool>,
}

const STATES: [WorkerState; 5] =
    [WorkerState::Starting, WorkerState::Idle, WorkerState::Busy, WorkerState::Failed, WorkerState::Stopped];

impl Pulse {
    fn new(worker_id: u64, tx: Sender<Heartbeat>, killed: Arc<AtomicBool>) -> Self {
        Self {
            worker_id,
            tx,
            state: Arc::new(AtomicU8::new(0)),
            jobs_done: Arc::new(AtomicU64::new(0)),
            running: Arc::new(AtomicBool::new(true)),
            killed,
        }
    }

    fn killed(&self) -> bool {
        self.killed.load(Ordering::SeqCst)
    }

    fn send(&self) {
        if self.killed() {
            return;
        }
        let state = STATES[usize::from(self.state.load(Ordering::SeqCst))];
        let _ = self.tx.send(Heartbeat { worker_id: self.worker_id, state, jobs_done: self.jobs_done.load(Ordering::SeqCst) });
    }

    /// Records a state change and reports it immediately.
    fn set(&self, state: WorkerState, jobs_done: u64) {
        let idx = STATES.iter().position(|s| *s == state).expect("known state");
        self.state.store(idx as u8, Ordering::SeqCst);
        self.jobs_done.store(jobs_done, Ordering::SeqCst);
        self.send();
    }

    fn start_ticker(&self, interval: Duration) {
        let pulse = self.clone();
        let slice = (interval / 4).clamp(Duration::from_millis(1), Duration::from_millis(100));
        std::thread::spawn(move || {
            let mut last = Instant::now();
            while pulse.running.load(Ordering::SeqCst) && !pulse.killed() {
                std::thread::sleep(slice);
                if last.elapsed() >= interval {
                    if pulse.running.load(Ordering::SeqCst) {
                        pulse.send();
                    }
                    last = Instant::now();
                }
            }
        });
    }

    fn stop(&self) {
        self.running.store(false, Ordering::SeqCst);
    }
}

enum Signal {
    None,
    Drain,
    Kill,
}

fn poll_control(rx: &Receiver<Control>, pulse: &Pulse) -> Signal {
    if pulse.killed() {
        return Signal::Kill;
    }
    match rx.try_recv() {
        Ok(Control::Kill) => Signal::Kill,
        Ok(Control::Drain) => Signal::Drain,
        Err(TryRecvError::Empty) => Signal::None,
        Err(TryRecvError::Disconnected) => Signal::Drain,
    }
}

fn worker_main(
    worker_id: u64,
    spec: WorkerSpec,
    ctx: WorkerContext,
    timing: WorkerTiming,
    pulse: &Pulse,
    control: Receiver<Control>,
) {
    let consumer_id = format!("worker-{worker_id}");
    let mut jobs_done = 0u64;
    let mut runner = match JobRunner::new(spec.clone(), &ctx.registry) {
        Ok(r) => r,
        Err(e) => {
            tracing::error!(worker_id, error = %e, "worker failed to load backend");
            pulse.set(WorkerState::Failed, 0);
            return;
        }
    };
    let poll = (timing.heartbeat_interval / 4).clamp(Duration::from_millis(5), Duration::from_millis(250));
    pulse.set(WorkerState::Idle, 0);
    loop {
        match poll_control(&control, pulse) {
            Signal::Kill => return,
            Signal::Drain => {
                pulse.set(WorkerState::Stopped, jobs_done);
                return;
            }
            Signal::None => {}
        }
        let delivery = match ctx.queue.consume_blocking(&spec.queue_in, &consumer_id, timing.lease, poll) {
            Ok(Some(d)) => d,
            Ok(None) => continue,
            Err(e) => {
                tracing::warn!(worker_id, error = %e, "consume failed");
                std::thread::sleep(poll);
                continue;
            }
        };
        pulse.set(WorkerState::Busy, jobs_done);
        match handle_delivery(&mut runner, &ctx, &spec, &delivery, &control, pulse) {
            Some(Signal::Kill) => return,
            Some(Signal::Drain) => {
                pulse.set(WorkerState::Stopped, jobs_done + 1);
                return;
            }
            _ => jobs_done += 1,
        }
        pulse.set(WorkerState::Idle, jobs_done);
    }
}

/// Returns `Some(Kill)` when the worker was killed mid-job and must vanish
/// without settling the delivery.
fn handle_delivery(
    runner: &mut JobRunner,
    ctx: &WorkerContext,
    spec: &WorkerSpec,
    delivery: &Delivery,
    control: &Receiver<Control>,
    pulse: &Pulse,
) -> Option<Signal> {
    let lease = &delivery.lease;
    let job = match runner.parse(&delivery.envelope.payload) {
        Ok(job) => job,
        Err(reason) => {
            tracing::warn!(message_id = lease.message_id, %reason, "rejecting job message");
            let _ = ctx.queue.nack(lease, true);
            return None;
        }
    };
    let progress = ResultMessage::progress(&job.job_id, runner.backend_id());
    let _ = ctx.queue.publish(&spec.queue_out, &progress.to_bytes());
    let outcome = runner.run(&job, &ctx.blobs);
    let mut pending_drain = false;
    match poll_control(control, pulse) {
        Signal::Kill => return Some(Signal::Kill),
        Signal::Drain => pending_drain = true,
        Signal::None => {}
    }
    match outcome {
        JobOutcome::Completed(result) => match ctx.queue.publish(&spec.queue_out, &result.to_bytes()) {
            Ok(_) => {
                if let Err(e) = ctx.queue.ack(lease) {
                    tracing::warn!(job_id = %job.job_id, error = %e, "ack failed; job may be redelivered");
                }
            }
            Err(e) => {
                tracing::warn!(job_id = %job.job_id, error = %e, "result publish failed");
                let _ = ctx.queue.nack(lease, true);
            }
        },
        JobOutcome::Malformed(reason) => {
            tracing::warn!(job_id = %job.job_id, %reason, "rejecting job message");
            let _ = ctx.queue.nack(lease, true);
        }
        JobOutcome::BackendFailed(e) => {
            tracing::warn!(job_id = %job.job_id, error = %e, "backend failed");
            let _ = ctx.queue.nack(lease, true);
        }
    }
    if pending_drain {
        Some(Signal::Drain)
    } else {
        None
    }
}
