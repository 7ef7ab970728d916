//! Master/worker inference tier. A supervisory loop owns the worker table;
//! workers talk to it only through heartbeats and lifecycle commands.

mod master;
mod worker;

pub use master::{
    Master, MasterConfig, PoolConfig, RestartPolicy, WorkerSnapshot, DEFAULT_HEARTBEAT_INTERVAL,
    DEFAULT_MISSED_HEARTBEATS,
};
pub use worker::{JobOutcome, JobRunner, WorkerContext, WorkerSpec, WorkerState};
