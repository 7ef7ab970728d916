use std::collections::BTreeMap;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{select, Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::worker::{spawn_worker, Heartbeat, WorkerContext, WorkerSpec, WorkerState, WorkerThread, WorkerTiming};
use crate::error::{Error, Result};
use crate::messages::{TaskKind, RESULTS};

pub const DEFAULT_HEARTBEAT_INTERVAL: Duration = Duration::from_secs(2);
pub const DEFAULT_MISSED_HEARTBEATS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartPolicy {
    #[default]
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub size: usize,
    pub backend_id: String,
}

#[derive(Debug, Clone)]
pub struct MasterConfig {
    pub pools: BTreeMap<TaskKind, PoolConfig>,
    pub heartbeat_interval: Duration,
    pub missed_heartbeats_limit: u32,
    pub restart_policy: RestartPolicy,
    /// Lease requested per job; `None` uses the broker default.
    pub lease: Option<Duration>,
    pub verifier_backend_id: Option<String>,
    pub queue_out: String,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            pools: BTreeMap::new(),
            heartbeat_interval: DEFAULT_HEARTBEAT_INTERVAL,
            missed_heartbeats_limit: DEFAULT_MISSED_HEARTBEATS,
            restart_policy: RestartPolicy::Always,
            lease: None,
            verifier_backend_id: None,
            queue_out: RESULTS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerSnapshot {
    pub worker_id: u64,
    pub spec: WorkerSpec,
    pub state: WorkerState,
    pub draining: bool,
    pub jobs_done: u64,
}

enum Command {
    Scale { kind: TaskKind, n: usize, reply: Sender<usize> },
    SetBackend { kind: TaskKind, backend_id: String, reply: Sender<Vec<u64>> },
    SpawnExtra { kind: TaskKind, reply: Sender<u64> },
    Drain { worker_id: u64, reply: Sender<bool> },
    Kill { worker_id: u64, reply: Sender<bool> },
    Snapshot { reply: Sender<Vec<WorkerSnapshot>> },
    Shutdown { reply: Sender<()> },
}

struct WorkerEntry {
    spec: WorkerSpec,
    state: WorkerState,
    draining: bool,
    jobs_done: u64,
    last_heartbeat: Instant,
    thread: Option<WorkerThread>,
}

struct Supervisor {
    config: MasterConfig,
    ctx: WorkerContext,
    workers: BTreeMap<u64, WorkerEntry>,
    next_id: u64,
    heartbeat_tx: Sender<Heartbeat>,
}

impl Supervisor {
    fn spec_for(&self, kind: TaskKind) -> WorkerSpec {
        let pool = &self.config.pools[&kind];
        WorkerSpec {
            task_kind: kind,
            backend_id: pool.backend_id.clone(),
            queue_in: kind.queue().to_string(),
            queue_out: self.config.queue_out.clone(),
            verifier_backend_id: self.config.verifier_backend_id.clone(),
        }
    }

    fn spawn(&mut self, kind: TaskKind) -> u64 {
        let worker_id = self.next_id;
        self.next_id += 1;
        let spec = self.spec_for(kind);
        let timing = WorkerTiming { heartbeat_interval: self.config.heartbeat_interval, lease: self.config.lease };
        let thread = spawn_worker(worker_id, spec.clone(), self.ctx.clone(), timing, self.heartbeat_tx.clone());
        tracing::info!(worker_id, kind = %kind, backend = %spec.backend_id, "worker spawned");
        self.workers.insert(
            worker_id,
            WorkerEntry {
                spec,
                state: WorkerState::Starting,
                draining: false,
                jobs_done: 0,
                last_heartbeat: Instant::now(),
                thread: Some(thread),
            },
        );
        worker_id
    }

    fn active_ids(&self, kind: TaskKind) -> Vec<u64> {
        self.workers
            .iter()
            .filter(|(_, w)| w.spec.task_kind == kind && w.state.is_live() && !w.draining)
            .map(|(&id, _)| id)
            .collect()
    }

    fn drain(&mut self, worker_id: u64) -> bool {
        match self.workers.get_mut(&worker_id) {
            Some(w) if w.state.is_live() && !w.draining => {
                w.draining = true;
                if let Some(t) = &w.thread {
                    t.drain();
                }
                true
            }
            _ => false,
        }
    }

    fn scale(&mut self, kind: TaskKind, n: usize) -> usize {
        let active = self.active_ids(kind);
        if n > active.len() {
            for _ in active.len()..n {
                self.spawn(kind);
            }
        } else {
            // idle workers go first, newest before oldest
            let mut victims = active;
            victims.sort_by_key(|id| (self.workers[id].state == WorkerState::Busy, std::cmp::Reverse(*id)));
            let excess = victims.len() - n;
            for id in victims.into_iter().take(excess) {
                self.drain(id);
            }
        }
        self.config.pools.get_mut(&kind).expect("pool exists").size = n;
        n
    }

    fn on_heartbeat(&mut self, hb: Heartbeat) {
        let Some(w) = self.workers.get_mut(&hb.worker_id) else { return };
        if !w.state.is_live() {
            return;
        }
        w.last_heartbeat = Instant::now();
        w.state = hb.state;
        w.jobs_done = hb.jobs_done;
        if !hb.state.is_live() {
            if let Some(t) = w.thread.take() {
                let _ = t.join.join();
            }
            tracing::info!(worker_id = hb.worker_id, state = ?hb.state, "worker exited");
        }
    }

    fn check_liveness(&mut self) {
        let limit = self.config.heartbeat_interval * self.config.missed_heartbeats_limit;
        let overdue: Vec<u64> = self
            .workers
            .iter()
            .filter(|(_, w)| w.state.is_live() && w.last_heartbeat.elapsed() > limit)
            .map(|(&id, _)| id)
            .collect();
        for id in overdue {
            let w = self.workers.get_mut(&id).expect("listed");
            tracing::warn!(worker_id = id, "worker missed heartbeats; dismissing");
            w.state = WorkerState::Failed;
            if let Some(t) = w.thread.take() {
                t.kill();
            }
            let kind = w.spec.task_kind;
            let replace = !w.draining && self.config.restart_policy == RestartPolicy::Always;
            if replace && self.active_ids(kind).len() < self.config.pools[&kind].size {
                self.spawn(kind);
            }
        }
    }

    fn snapshot(&self) -> Vec<WorkerSnapshot> {
        self.workers
            .iter()
            .map(|(&worker_id, w)| WorkerSnapshot {
                worker_id,
                spec: w.spec.clone(),
                state: w.state,
                draining: w.draining,
                jobs_done: w.jobs_done,
            })
            .collect()
    }

    fn shutdown(&mut self) {
        let ids: Vec<u64> = self.workers.keys().copied().collect();
        for id in &ids {
            self.drain(*id);
        }
        for w in self.workers.values_mut() {
            if w.state.is_live() {
                if let Some(t) = w.thread.take() {
                    let _ = t.join.join();
                }
                w.state = WorkerState::Stopped;
            }
        }
    }

    fn run(mut self, commands: Receiver<Command>, heartbeats: Receiver<Heartbeat>) {
        let tick = (self.config.heartbeat_interval / 4).clamp(Duration::from_millis(5), Duration::from_millis(500));
        loop {
            select! {
                recv(commands) -> cmd => {
                    let Ok(cmd) = cmd else { self.shutdown(); return };
                    match cmd {
                        Command::Scale { kind, n, reply } => { let _ = reply.send(self.scale(kind, n)); }
                        Command::SetBackend { kind, backend_id, reply } => {
                            self.config.pools.get_mut(&kind).expect("pool exists").backend_id = backend_id.clone();
                            let stale: Vec<u64> = self
                                .active_ids(kind)
                                .into_iter()
                                .filter(|id| self.workers[id].spec.backend_id != backend_id)
                                .collect();
                            let _ = reply.send(stale);
                        }
                        Command::SpawnExtra { kind, reply } => { let _ = reply.send(self.spawn(kind)); }
                        Command::Drain { worker_id, reply } => { let _ = reply.send(self.drain(worker_id)); }
                        Command::Kill { worker_id, reply } => {
                            let found = self.workers.get(&worker_id).and_then(|w| w.thread.as_ref()).map(|t| t.kill());
                            let _ = reply.send(found.is_some());
                        }
                        Command::Snapshot { reply } => { let _ = reply.send(self.snapshot()); }
                        Command::Shutdown { reply } => {
                            self.shutdown();
                            let _ = reply.send(());
                            return;
                        }
                    }
                }
                recv(heartbeats) -> hb => {
                    if let Ok(hb) = hb {
                        self.on_heartbeat(hb);
                    }
                }
                default(tick) => {}
            }
            self.check_liveness();
        }
    }
}

/// Handle to the supervisory loop. Dropping it drains every worker.
pub struct Master {
    commands: Sender<Command>,
    join: Option<JoinHandle<()>>,
    ctx: WorkerContext,
    kinds: Vec<TaskKind>,
}

impl Master {
    /// Declares the platform queues, validates every pool's backend and only
    /// then spawns workers.
    pub fn start(config: MasterConfig, ctx: WorkerContext) -> Result<Self> {
        if config.missed_heartbeats_limit == 0 {
            return Err(Error::invalid("missed_heartbeats_limit must be at least 1"));
        }
        if config.heartbeat_interval.is_zero() {
            return Err(Error::invalid("heartbeat_interval must be positive"));
        }
        for queue in TaskKind::ALL.iter().map(|k| k.queue()).chain([config.queue_out.as_str()]) {
            ctx.queue.declare_queue(queue, true).map_err(|e| Error::Unavailable(format!("broker: {e}")))?;
        }
        for (kind, pool) in &config.pools {
            check_backend(&ctx, *kind, &pool.backend_id)?;
        }
        if let Some(v) = &config.verifier_backend_id {
            if !ctx.registry.info(v)?.capabilities.classify {
                return Err(Error::Unsupported(format!("verifier {v} cannot classify")));
            }
        }
        let (commands, command_rx) = crossbeam_channel::unbounded();
        let (heartbeat_tx, heartbeat_rx) = crossbeam_channel::unbounded();
        let mut supervisor =
            Supervisor { config: config.clone(), ctx: ctx.clone(), workers: BTreeMap::new(), next_id: 1, heartbeat_tx };
        for (kind, pool) in &config.pools {
            for _ in 0..pool.size {
                supervisor.spawn(*kind);
            }
        }
        let join = std::thread::Builder::new()
            .name("master".into())
            .spawn(move || supervisor.run(command_rx, heartbeat_rx))
            .map_err(Error::Io)?;
        let kinds = config.pools.keys().copied().collect();
        Ok(Self { commands, join: Some(join), ctx, kinds })
    }

    fn call<T>(&self, make: impl FnOnce(Sender<T>) -> Command) -> Result<T> {
        let (tx, rx) = crossbeam_channel::bounded(1);
        self.commands.send(make(tx)).map_err(|_| Error::Unavailable("master stopped".into()))?;
        rx.recv().map_err(|_| Error::Unavailable("master stopped".into()))
    }

    /// Grows or shrinks a pool. Shrinking drains workers, which finish their
    /// current job first.
    pub fn scale(&self, kind: TaskKind, n: i64) -> Result<usize> {
        let n = usize::try_from(n).map_err(|_| Error::invalid(format!("pool size {n} is negative")))?;
        self.check_pool(kind)?;
        self.call(|reply| Command::Scale { kind, n, reply })
    }

    /// Replaces every worker of `kind` with one running `backend_id`. Each
    /// replacement is started and idle before its predecessor is drained, so
    /// the pool never drops below its size.
    pub fn hot_swap(&self, kind: TaskKind, backend_id: &str, timeout: Duration) -> Result<()> {
        self.check_pool(kind)?;
        check_backend(&self.ctx, kind, backend_id)?;
        let deadline = Instant::now() + timeout;
        let stale = self.call(|reply| Command::SetBackend { kind, backend_id: backend_id.to_string(), reply })?;
        for old in stale {
            let fresh = self.call(|reply| Command::SpawnExtra { kind, reply })?;
            self.wait_until(deadline, |snap| {
                snap.iter().any(|w| w.worker_id == fresh && w.state != WorkerState::Starting)
            })?;
            self.call(|reply| Command::Drain { worker_id: old, reply })?;
            self.wait_until(deadline, |snap| snap.iter().any(|w| w.worker_id == old && !w.state.is_live()))?;
        }
        Ok(())
    }

    fn check_pool(&self, kind: TaskKind) -> Result<()> {
        if self.kinds.contains(&kind) {
            Ok(())
        } else {
            Err(Error::invalid(format!("no {kind} pool is configured")))
        }
    }

    /// Fault injection: the worker stops without settling its lease or
    /// saying goodbye, as if its process died.
    pub fn kill_worker(&self, worker_id: u64) -> Result<()> {
        if self.call(|reply| Command::Kill { worker_id, reply })? {
            Ok(())
        } else {
            Err(Error::not_found(format!("worker {worker_id}")))
        }
    }

    pub fn snapshot(&self) -> Result<Vec<WorkerSnapshot>> {
        self.call(|reply| Command::Snapshot { reply })
    }

    fn wait_until(&self, deadline: Instant, pred: impl Fn(&[WorkerSnapshot]) -> bool) -> Result<()> {
        loop {
            if pred(&self.snapshot()?) {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return Err(Error::Unavailable("timed out waiting for workers".into()));
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    /// Blocks until `pred` holds for the worker table or `timeout` passes.
    pub fn wait_for(&self, timeout: Duration, pred: impl Fn(&[WorkerSnapshot]) -> bool) -> Result<()> {
        self.wait_until(Instant::now() + timeout, pred)
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> Result<()> {
        let Some(join) = self.join.take() else { return Ok(()) };
        let (tx, rx) = crossbeam_channel::bounded(1);
        if self.commands.send(Command::Shutdown { reply: tx }).is_ok() {
            let _ = rx.recv();
        }
        join.join().map_err(|_| Error::Unavailable("master thread panicked".into()))
    }
}

impl Drop for Master {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn check_backend(ctx: &WorkerContext, kind: TaskKind, backend_id: &str) -> Result<()> {
    let caps = ctx.registry.info(backend_id)?.capabilities;
    let capable = match kind {
        TaskKind::Classification => caps.classify,
        TaskKind::Detection => caps.detect,
    };
    if capable {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("backend {backend_id} cannot run {kind} jobs")))
    }
}
