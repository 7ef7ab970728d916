#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use paddy_core::blobstore::BlobStore;
use paddy_core::broker::{Broker, BrokerConfig, MessageQueue};
use paddy_core::geometry::NormalizedBox;
use paddy_core::inference::{
    BackendInfo, BackendRegistry, Capabilities, FixtureBackend, FixtureDetection, FixtureStore,
};
use paddy_core::messages::{ResultMessage, RESULTS};
use paddy_core::orchestrator::WorkerContext;
use paddy_core::raster::RasterImage;

/// A small PNG that differs for every seed.
pub fn png(seed: u32) -> Vec<u8> {
    let img = RasterImage::from_fn(16, 12, |x, y| {
        [(seed % 251) as u8, (seed / 251 % 251) as u8, ((x * 7 + y * 3) % 256) as u8]
    })
    .unwrap();
    img.encode_png().unwrap()
}

pub fn one_hot(class: usize) -> Vec<f64> {
    let mut p = vec![0.0; 13];
    p[class] = 1.0;
    p
}

/// Fixture world: `n` images, each with a classification and one detection
/// of detection class `i % 12`.
pub fn fixture_store(images: &[Vec<u8>]) -> FixtureStore {
    let mut store = FixtureStore::default();
    for (i, bytes) in images.iter().enumerate() {
        let digest = paddy_core::inference::digest_hex(bytes);
        store.insert_classification(digest.clone(), one_hot(i % 13));
        store.insert_detections(
            digest,
            vec![FixtureDetection { class: i % 12, conf: 0.9, bbox: NormalizedBox::new(0.5, 0.5, 0.4, 0.4).unwrap() }],
        );
    }
    store
}

pub fn fixture_info(id: &str, caps: Capabilities) -> BackendInfo {
    BackendInfo { backend_id: id.into(), version: "fixture-1".into(), capabilities: caps, input_side: 256 }
}

pub fn register_fixture(registry: &mut BackendRegistry, id: &str, store: Arc<FixtureStore>, caps: Capabilities, delay: Duration) {
    let owned = id.to_string();
    registry.register(fixture_info(id, caps), move || {
        Ok(Box::new(FixtureBackend::new(owned.clone(), store.clone()).with_capabilities(caps).with_delay(delay)) as Box<_>)
    });
}

pub const BOTH: Capabilities = Capabilities { classify: true, detect: true };

pub struct World {
    pub broker: Broker,
    pub blobs: BlobStore,
    pub registry: BackendRegistry,
    pub images: Vec<Vec<u8>>,
    pub dir: tempfile::TempDir,
}

impl World {
    pub fn new(n_images: u32, delay: Duration) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let blobs = BlobStore::open(dir.path().join("blobs")).unwrap();
        let images: Vec<Vec<u8>> = (0..n_images).map(png).collect();
        for img in &images {
            blobs.put(img).unwrap();
        }
        let store = Arc::new(fixture_store(&images));
        let mut registry = BackendRegistry::new();
        register_fixture(&mut registry, "fixture-a", store.clone(), BOTH, delay);
        register_fixture(&mut registry, "fixture-b", store.clone(), BOTH, delay);
        register_fixture(&mut registry, "classify-only", store, Capabilities { classify: true, detect: false }, delay);
        let broker = Broker::new(BrokerConfig::default()).unwrap();
        Self { broker, blobs, registry, images, dir }
    }

    pub fn ctx(&self) -> WorkerContext {
        WorkerContext { queue: Arc::new(self.broker.clone()), blobs: self.blobs.clone(), registry: self.registry.clone() }
    }
}

/// Drains final (non-progress) result messages until `want` arrive or the
/// timeout passes.
pub fn collect_results(queue: &dyn MessageQueue, want: usize, timeout: Duration) -> Vec<ResultMessage> {
    let deadline = Instant::now() + timeout;
    let mut out = Vec::new();
    while out.len() < want && Instant::now() < deadline {
        if let Some(d) = queue.consume_blocking(RESULTS, "test", None, Duration::from_millis(20)).unwrap() {
            let msg: ResultMessage = serde_json::from_slice(&d.envelope.payload).unwrap();
            queue.ack(&d.lease).unwrap();
            if !msg.processing {
                out.push(msg);
            }
        }
    }
    out
}

pub mod gw {
    use std::sync::Arc;

    use paddy_core::blobstore::BlobStore;
    use paddy_core::broker::{Broker, BrokerConfig};
    use paddy_core::clock::ManualClock;
    use paddy_core::gateway::{FileRepository, Gateway, GatewayConfig};
    use paddy_core::treatment::TreatmentKb;

    pub struct GatewayWorld {
        pub gateway: Arc<Gateway>,
        pub broker: Broker,
        pub clock: ManualClock,
        pub config: GatewayConfig,
        pub dir: tempfile::TempDir,
    }

    pub fn gateway_world(config: GatewayConfig) -> GatewayWorld {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(1_700_000_000_000);
        let broker = Broker::new(BrokerConfig::default()).unwrap();
        let gateway = Gateway::new(
            &config,
            Arc::new(FileRepository::in_memory()),
            BlobStore::open(dir.path().join("blobs")).unwrap(),
            Arc::new(broker.clone()),
            Arc::new(TreatmentKb::bundled()),
            Arc::new(clock.clone()),
        )
        .unwrap();
        GatewayWorld { gateway: Arc::new(gateway), broker, clock, config, dir }
    }

    /// Registers and logs in; returns the bearer token.
    pub fn user(world: &GatewayWorld, name: &str) -> String {
        world.gateway.register(name, "password123").unwrap();
        world.gateway.login(name, "password123").unwrap().token
    }
}
