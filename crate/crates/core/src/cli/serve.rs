use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::{BackendArgs, FileConfig, GatewayArgs, WorkerArgs};
use crate::blobstore::BlobStore;
use crate::broker::{Broker, BrokerConfig, RemoteBroker};
use crate::clock::system_clock;
use crate::error::{Error, Result};
use crate::gateway::{router, AppState, FileRepository, Gateway, GatewayConfig, ResultPump};
use crate::inference::{BackendRegistry, FixtureBackend, FixtureStore, HeuristicBackend, ModelBackend};
use crate::messages::TaskKind;
use crate::orchestrator::{Master, MasterConfig, PoolConfig, WorkerContext};
use crate::treatment::TreatmentKb;

/// Registry with `heuristic` always present and `fixture` when a store is
/// given.
pub fn build_registry(fixtures: Option<&Path>) -> Result<BackendRegistry> {
    let mut registry = BackendRegistry::new();
    let heuristic = HeuristicBackend::default();
    registry.register(heuristic.info().clone(), || Ok(Box::new(HeuristicBackend::default()) as Box<dyn ModelBackend>));
    if let Some(path) = fixtures {
        let store = Arc::new(FixtureStore::load(path)?);
        let backend = FixtureBackend::new("fixture", store.clone());
        registry.register(backend.info().clone(), move || {
            Ok(Box::new(FixtureBackend::new("fixture", store.clone())) as Box<dyn ModelBackend>)
        });
    }
    Ok(registry)
}

fn master_config(pools: &[(TaskKind, usize)], backend: &BackendArgs, heartbeat: Option<Duration>) -> MasterConfig {
    let mut config = MasterConfig {
        pools: BTreeMap::new(),
        verifier_backend_id: backend.verifier.clone(),
        ..MasterConfig::default()
    };
    if let Some(interval) = heartbeat {
        config.heartbeat_interval = interval;
    }
    for &(kind, size) in pools {
        if size > 0 {
            config.pools.insert(kind, PoolConfig { size, backend_id: backend.backend.clone() });
        }
    }
    config
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn shutdown_signal() {
    // An error here means no signal handler could be installed; run until killed.
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}

pub(super) fn gateway(args: GatewayArgs, file: FileConfig, out: &mut dyn Write) -> Result<()> {
    let config = file.gateway.unwrap_or_default().with_overrides(|k| std::env::var(k).ok())?;
    std::fs::create_dir_all(&config.data_dir)?;
    let broker = Broker::new(BrokerConfig {
        default_lease: config.broker_lease,
        max_deliveries: config.broker_max_deliveries,
        journal_path: Some(config.journal_path()),
    })?;
    let blobs = BlobStore::open(config.blob_dir())?;
    let gateway = Arc::new(Gateway::new(
        &config,
        Arc::new(FileRepository::open(config.repository_path())?),
        blobs.clone(),
        Arc::new(broker.clone()),
        Arc::new(TreatmentKb::bundled()),
        system_clock(),
    )?);
    let mut pump = ResultPump::spawn(gateway.clone());

    let pools = [
        (TaskKind::Classification, args.classification_workers),
        (TaskKind::Detection, args.detection_workers),
    ];
    let master = if pools.iter().any(|p| p.1 > 0) {
        let registry = build_registry(args.backend.fixtures.as_deref())?;
        let ctx = WorkerContext { queue: Arc::new(broker.clone()), blobs, registry };
        Some(Master::start(master_config(&pools, &args.backend, None), ctx)?)
    } else {
        None
    };

    let state = AppState {
        gateway,
        broker: Some(broker),
        broker_token: config.broker_token.clone(),
        max_upload_bytes: config.max_upload_bytes,
    };
    let served = runtime()?.block_on(serve_http(&config, state, out));
    pump.stop();
    if let Some(master) = master {
        master.shutdown()?;
    }
    served
}

async fn serve_http(config: &GatewayConfig, state: AppState, out: &mut dyn Write) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    writeln!(out, "listening on http://{}", listener.local_addr()?)?;
    out.flush()?;
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown_signal()).await?;
    Ok(())
}

pub(super) fn worker(args: WorkerArgs, out: &mut dyn Write) -> Result<()> {
    let kind: TaskKind = args.kind.parse()?;
    if args.count == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let registry = build_registry(args.backend.fixtures.as_deref())?;
    let queue = RemoteBroker::new(args.broker_url.clone(), args.broker_token.clone())?;
    let blobs = BlobStore::open(args.data_dir.join("blobs"))?;
    let ctx = WorkerContext { queue: Arc::new(queue), blobs, registry };
    let heartbeat = Duration::from_millis(args.heartbeat_ms.max(1));
    let master = Master::start(master_config(&[(kind, args.count)], &args.backend, Some(heartbeat)), ctx)?;
    writeln!(out, "{} {kind} worker(s) on {} via {}", args.count, args.backend.backend, args.broker_url)?;
    out.flush()?;
    runtime()?.block_on(shutdown_signal());
    master.shutdown()
}
