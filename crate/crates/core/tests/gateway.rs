mod common;

use std::collections::BTreeSet;

use common::gw::{gateway_world, user};
use common::{one_hot, png};
use paddy_core::broker::MessageQueue;
use paddy_core::clock::Clock;
use paddy_core::gateway::{ApplyOutcome, GatewayConfig, JobOptions, JobStatus};
use paddy_core::geometry::{GeoPoint, GeoRect, NormalizedBox};
use paddy_core::inference::{digest_hex, ClassificationResult, Detection};
use paddy_core::messages::{JobMessage, ResultMessage, TaskKind};
use paddy_core::taxonomy::{class_index, detection_index};
use paddy_core::Error;
use proptest::prelude::*;

fn det(slug: &str) -> Detection {
    Detection::new(detection_index(slug).unwrap(), 0.8, NormalizedBox::new(0.5, 0.5, 0.2, 0.2).unwrap()).unwrap()
}

fn done(job_id: &str, detections: Vec<Detection>, classification: Option<ClassificationResult>) -> ResultMessage {
    ResultMessage {
        job_id: job_id.into(),
        backend_id: "fixture-a".into(),
        detections,
        classification,
        error: None,
        processing: false,
    }
}

#[test]
fn register_login_round_trip() {
    let w = gateway_world(GatewayConfig::default());
    let token = user(&w, "farmer_one");
    assert!(w.gateway.authenticate(&token).is_ok());
    assert!(matches!(w.gateway.login("farmer_one", "wrong-password"), Err(Error::Unauthorized)));
    assert!(matches!(w.gateway.login("nobody", "password123"), Err(Error::Unauthorized)));
    assert!(matches!(w.gateway.register("farmer_one", "password456"), Err(Error::Conflict(_))));
    assert!(matches!(w.gateway.register("x", "password456"), Err(Error::InvalidInput(_))));
    assert!(matches!(w.gateway.register("farmer_two", "short"), Err(Error::InvalidInput(_))));
}

#[test]
fn tokens_expire_after_ttl() {
    let w = gateway_world(GatewayConfig::default());
    let token = user(&w, "farmer_one");
    w.clock.advance_ms(24 * 3600 * 1000);
    assert!(matches!(w.gateway.authenticate(&token), Err(Error::Unauthorized)));
}

#[test]
fn uploads_are_content_addressed() {
    let w = gateway_world(GatewayConfig { max_upload_bytes: 4096, ..GatewayConfig::default() });
    let token = user(&w, "farmer_one");
    let bytes = png(7);
    let a = w.gateway.upload_image(&token, &bytes, None).unwrap();
    let b = w.gateway.upload_image(&token, &bytes, None).unwrap();
    assert_ne!(a.upload_id, b.upload_id);
    assert_eq!(a.digest, digest_hex(&bytes));
    assert_eq!(w.gateway.blobs().count().unwrap(), 1);
    assert!(matches!(w.gateway.upload_image(&token, b"hello, not an image", None), Err(Error::UnsupportedMedia(_))));
    assert!(matches!(w.gateway.upload_image(&token, &vec![0u8; 5000], None), Err(Error::PayloadTooLarge { .. })));
    assert!(matches!(w.gateway.upload_image("bogus", &bytes, None), Err(Error::Unauthorized)));
}

#[test]
fn create_job_publishes_schema_message() {
    let w = gateway_world(GatewayConfig::default());
    let alice = user(&w, "alice");
    let bob = user(&w, "bob");
    let up = w.gateway.upload_image(&alice, &png(1), None).unwrap();
    let opts = JobOptions { conf_threshold: Some(0.4), nms_iou: None };
    let job = w.gateway.create_job(&alice, &up.upload_id, TaskKind::Detection, true, opts).unwrap();
    assert_eq!(job.status, JobStatus::Queued);
    let d = w.broker.consume(TaskKind::Detection.queue(), "t", None).unwrap().unwrap();
    let msg: JobMessage = serde_json::from_slice(&d.envelope.payload).unwrap();
    assert_eq!(msg.job_id, job.job_id);
    assert_eq!(msg.image_digest, up.digest);
    assert!(msg.verify);
    assert_eq!(msg.conf_threshold, Some(0.4));
    assert!(matches!(
        w.gateway.create_job(&bob, &up.upload_id, TaskKind::Detection, false, JobOptions::default()),
        Err(Error::Forbidden)
    ));
    assert!(matches!(
        w.gateway.create_job(&alice, "missing", TaskKind::Detection, false, JobOptions::default()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn result_application_is_idempotent_and_monotone() {
    let w = gateway_world(GatewayConfig::default());
    let t = user(&w, "alice");
    let up = w.gateway.upload_image(&t, &png(1), None).unwrap();
    let job = w.gateway.create_job(&t, &up.upload_id, TaskKind::Detection, false, JobOptions::default()).unwrap();
    assert!(matches!(w.gateway.get_result(&t, &job.job_id), Err(Error::Conflict(m)) if m.contains("queued")));
    let progress = ResultMessage::progress(&job.job_id, "fixture-a");
    assert_eq!(w.gateway.apply_result(&progress).unwrap(), ApplyOutcome::Applied);
    assert_eq!(w.gateway.job_status(&t, &job.job_id).unwrap().status, JobStatus::Processing);
    let msg = done(&job.job_id, vec![det("blast"), det("tungro"), det("blast")], None);
    assert_eq!(w.gateway.apply_result(&msg).unwrap(), ApplyOutcome::Applied);
    assert_eq!(w.gateway.apply_result(&msg).unwrap(), ApplyOutcome::Duplicate);
    // a late progress notice or a different result cannot move the job back
    assert_eq!(w.gateway.apply_result(&progress).unwrap(), ApplyOutcome::Duplicate);
    let other = done(&job.job_id, vec![det("hispa")], None);
    assert_eq!(w.gateway.apply_result(&other).unwrap(), ApplyOutcome::Duplicate);
    let failure = ResultMessage::failure(&job.job_id, "fixture-a", "boom");
    assert_eq!(w.gateway.apply_result(&failure).unwrap(), ApplyOutcome::Duplicate);
    let job_now = w.gateway.job_status(&t, &job.job_id).unwrap();
    assert_eq!(job_now.status, JobStatus::Done);
    assert_eq!(job_now.result_ref.as_deref(), Some(job.job_id.as_str()));
    let result = w.gateway.get_result(&t, &job.job_id).unwrap();
    assert_eq!(result.detections.len(), 3);
    let slugs: Vec<&str> = result.treatments.iter().map(|e| e.slug.as_str()).collect();
    assert_eq!(slugs, ["blast", "tungro"]);
    assert_eq!(w.gateway.apply_result(&done("nope", vec![], None)).unwrap(), ApplyOutcome::UnknownJob);
}

#[test]
fn normal_classification_gets_healthy_entry() {
    let w = gateway_world(GatewayConfig::default());
    let t = user(&w, "alice");
    let up = w.gateway.upload_image(&t, &png(1), Some(GeoPoint::new(10.0, 20.0).unwrap())).unwrap();
    let job = w.gateway.create_job(&t, &up.upload_id, TaskKind::Classification, false, JobOptions::default()).unwrap();
    let c = ClassificationResult::new(one_hot(class_index("normal").unwrap())).unwrap();
    w.gateway.apply_result(&done(&job.job_id, vec![], Some(c))).unwrap();
    let result = w.gateway.get_result(&t, &job.job_id).unwrap();
    assert_eq!(result.treatments.len(), 1);
    assert_eq!(result.treatments[0].slug, "normal");
    assert!(result.treatments[0].actions.is_empty());
    let all = GeoRect::new(-90.0, -180.0, 90.0, 180.0).unwrap();
    assert!(w.gateway.list_outbreaks(&t, all, 0).unwrap().is_empty());
}

#[test]
fn worker_error_and_dead_letter_fail_the_job() {
    let w = gateway_world(GatewayConfig::default());
    let t = user(&w, "alice");
    let up = w.gateway.upload_image(&t, &png(1), None).unwrap();
    let a = w.gateway.create_job(&t, &up.upload_id, TaskKind::Detection, false, JobOptions::default()).unwrap();
    let b = w.gateway.create_job(&t, &up.upload_id, TaskKind::Detection, false, JobOptions::default()).unwrap();
    w.gateway.apply_result(&ResultMessage::failure(&a.job_id, "fx", "image missing")).unwrap();
    let failed = w.gateway.job_status(&t, &a.job_id).unwrap();
    assert_eq!(failed.status, JobStatus::Failed);
    assert!(failed.result_ref.is_none());
    // push b's message through five failed deliveries
    let queue = TaskKind::Detection.queue();
    let mut seen = 0;
    while let Some(d) = w.broker.consume(queue, "t", None).unwrap() {
        let m: JobMessage = serde_json::from_slice(&d.envelope.payload).unwrap();
        if m.job_id == b.job_id {
            seen += 1;
            w.broker.nack(&d.lease, true).unwrap();
        } else {
            w.broker.ack(&d.lease).unwrap();
        }
    }
    assert_eq!(seen, 5);
    while w.gateway.pump_once(std::time::Duration::from_millis(1)).unwrap() > 0 {}
    assert_eq!(w.gateway.job_status(&t, &b.job_id).unwrap().status, JobStatus::Failed);
}

#[test]
fn outbreak_aggregation_matches_manual_centroid() {
    let w = gateway_world(GatewayConfig::default());
    let t = user(&w, "alice");
    let points = [(10.0, 100.0), (11.0, 101.0), (12.5, 99.0)];
    let start = w.clock.now_ms();
    for (i, (lat, lon)) in points.iter().enumerate() {
        let up = w.gateway.upload_image(&t, &png(i as u32), Some(GeoPoint::new(*lat, *lon).unwrap())).unwrap();
        let job = w.gateway.create_job(&t, &up.upload_id, TaskKind::Detection, false, JobOptions::default()).unwrap();
        w.gateway.apply_result(&done(&job.job_id, vec![det("blast"), det("blast")], None)).unwrap();
        w.clock.advance_ms(1000);
    }
    // an untagged upload never produces a report
    let up = w.gateway.upload_image(&t, &png(99), None).unwrap();
    let job = w.gateway.create_job(&t, &up.upload_id, TaskKind::Detection, false, JobOptions::default()).unwrap();
    w.gateway.apply_result(&done(&job.job_id, vec![det("blast")], None)).unwrap();

    let bbox = GeoRect::new(10.0, 99.0, 12.5, 101.0).unwrap();
    let groups = w.gateway.list_outbreaks(&t, bbox, start).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].class, "blast");
    assert_eq!(groups[0].count, 3);
    let (lat, lon) = points.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / 3.0, acc.1 + p.1 / 3.0));
    assert!((groups[0].centroid.latitude - lat).abs() < 1e-9);
    assert!((groups[0].centroid.longitude - lon).abs() < 1e-9);
    assert!(w.gateway.list_outbreaks(&t, bbox, w.clock.now_ms() + 1).unwrap().is_empty());
    let later = w.gateway.list_outbreaks(&t, bbox, start + 1000).unwrap();
    assert_eq!(later[0].count, 2);
    // another user sees the same aggregate
    let bob = user(&w, "bob");
    assert_eq!(w.gateway.list_outbreaks(&bob, bbox, 0).unwrap(), groups);
    assert!(GeoRect::new(12.0, 0.0, 10.0, 1.0).is_err());
}

#[derive(Debug, Clone)]
enum Op {
    Upload(usize),
    Job(usize, usize),
    Status(usize, usize),
    Result(usize, usize),
    Finish(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..2usize).prop_map(Op::Upload),
        (0..2usize, 0..8usize).prop_map(|(u, i)| Op::Job(u, i)),
        (0..2usize, 0..8usize).prop_map(|(u, i)| Op::Status(u, i)),
        (0..2usize, 0..8usize).prop_map(|(u, i)| Op::Result(u, i)),
        (0..8usize).prop_map(Op::Finish),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn users_never_see_each_others_records(ops in prop::collection::vec(op(), 1..40)) {
        let w = gateway_world(GatewayConfig::default());
        let tokens = [user(&w, "alice"), user(&w, "bob")];
        let mut uploads: Vec<(usize, String)> = Vec::new();
        let mut jobs: Vec<(usize, String)> = Vec::new();
        for (n, op) in ops.into_iter().enumerate() {
            match op {
                Op::Upload(u) => {
                    let r = w.gateway.upload_image(&tokens[u], &png(n as u32), None).unwrap();
                    uploads.push((u, r.upload_id));
                }
                Op::Job(u, i) if !uploads.is_empty() => {
                    let (owner, id) = &uploads[i % uploads.len()];
                    let r = w.gateway.create_job(&tokens[u], id, TaskKind::Detection, false, JobOptions::default());
                    if *owner == u {
                        jobs.push((u, r.unwrap().job_id));
                    } else {
                        prop_assert!(matches!(r, Err(Error::Forbidden)));
                    }
                }
                Op::Status(u, i) if !jobs.is_empty() => {
                    let (owner, id) = &jobs[i % jobs.len()];
                    let r = w.gateway.job_status(&tokens[u], id);
                    prop_assert_eq!(r.is_ok(), *owner == u);
                    if *owner != u {
                        prop_assert!(matches!(r, Err(Error::Forbidden)));
                    }
                }
                Op::Result(u, i) if !jobs.is_empty() => {
                    let (owner, id) = &jobs[i % jobs.len()];
                    let r = w.gateway.get_result(&tokens[u], id);
                    if *owner != u {
                        prop_assert!(matches!(r, Err(Error::Forbidden)));
                    }
                }
                Op::Finish(i) if !jobs.is_empty() => {
                    let (_, id) = &jobs[i % jobs.len()];
                    w.gateway.apply_result(&done(id, vec![det("hispa")], None)).unwrap();
                }
                _ => {}
            }
        }
        let owned: BTreeSet<&String> = jobs.iter().filter(|(o, _)| *o == 0).map(|(_, id)| id).collect();
        for (_, id) in &jobs {
            prop_assert_eq!(w.gateway.job_status(&tokens[0], id).is_ok(), owned.contains(id));
        }
    }
}
