mod common;

use std::path::Path;
use std::process::{Command, Output};

use paddy_core::metrics::EvalReport;
use paddy_core::taxonomy::CLASSES;

fn paddy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paddy")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = paddy(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Ten images across two classes, each with one annotated box.
fn small_dataset(root: &Path) -> std::path::PathBuf {
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut manifest = String::from("id,path,split,class_slug\n");
    for i in 0..10u32 {
        std::fs::write(images.join(format!("img{i}.png")), common::png(i)).unwrap();
        std::fs::write(images.join(format!("img{i}.txt")), format!("{} 0.500000 0.500000 0.400000 0.300000\n", i % 12)).unwrap();
        let slug = if i % 2 == 0 { "blast" } else { "hispa" };
        manifest.push_str(&format!("img{i},images/img{i}.png,,{slug}\n"));
    }
    let path = root.join("manifest.csv");
    std::fs::write(&path, manifest).unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn dataset_stats_counts_class_directories() {
    let dir = tempfile::tempdir().unwrap();
    for (slug, n) in [("tungro", 3), ("blast", 2), ("weeds", 1)] {
        let d = dir.path().join(slug);
        std::fs::create_dir_all(&d).unwrap();
        for i in 0..n {
            std::fs::write(d.join(format!("{i}.png")), common::png(i)).unwrap();
        }
        std::fs::write(d.join("notes.md"), "x").unwrap();
    }
    let text = ok(&["dataset", "stats", p(dir.path())]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("blast") && lines[0].ends_with(" 2"));
    assert!(lines[1].starts_with("tungro") && lines[1].ends_with(" 3"));
    assert!(lines[2].starts_with("total") && lines[2].ends_with(" 5"));
    assert_eq!(lines[3], "unrecognized directory: weeds");

    let json: serde_json::Value = serde_json::from_str(&ok(&["--json", "dataset", "stats", p(dir.path())])).unwrap();
    assert_eq!(json["total"], 5);
}

#[test]
fn split_then_augment_is_leak_free_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());

    let refused = paddy(&["dataset", "augment", "--manifest", p(&manifest), "--out-dir", p(&dir.path().join("aug0"))]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("refused"));

    ok(&["--seed", "7", "dataset", "split", "--manifest", p(&manifest), "--ratio", "0.5"]);
    let rows = paddy_core::augment::read_manifest(&manifest).unwrap();
    let train: Vec<_> = rows.iter().filter(|r| r.split == Some(paddy_core::augment::Split::Train)).collect();
    assert_eq!(train.len(), 5);

    let args = |out: &str| {
        vec!["--seed".to_string(), "11".into(), "dataset".into(), "augment".into(), "--manifest".into(), p(&manifest).into(), "--out-dir".into(), out.to_string(), "--multiplier".into(), "3".into()]
    };
    let a = dir.path().join("aug_a");
    let b = dir.path().join("aug_b");
    for out in [&a, &b] {
        let owned = args(p(out));
        ok(&owned.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let out_rows = paddy_core::augment::read_manifest(a.join("manifest.csv")).unwrap();
    assert_eq!(out_rows.len(), 15);
    let train_ids: Vec<&str> = train.iter().map(|r| r.id.as_str()).collect();
    assert!(out_rows.iter().all(|r| train_ids.contains(&r.source.as_deref().unwrap())));
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
}

#[test]
fn augment_multiplier_three_over_ten_train_items() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let text = std::fs::read_to_string(&manifest).unwrap().replace(",,", ",train,");
    std::fs::write(&manifest, text).unwrap();
    let out = dir.path().join("aug");
    ok(&["dataset", "augment", "--manifest", p(&manifest), "--out-dir", p(&out), "--multiplier", "3"]);
    assert_eq!(paddy_core::augment::read_manifest(out.join("manifest.csv")).unwrap().len(), 30);
}

#[test]
fn config_file_seed_drives_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let text = std::fs::read_to_string(&manifest).unwrap().replace(",,", ",train,");
    std::fs::write(&manifest, text).unwrap();
    let cfg = dir.path().join("paddy.toml");
    std::fs::write(&cfg, "[augment]\nseed = 5\nhflip_probability = 1.0\n").unwrap();
    let from_file = dir.path().join("f");
    let from_flag = dir.path().join("g");
    ok(&["--config", p(&cfg), "dataset", "augment", "--manifest", p(&manifest), "--out-dir", p(&from_file)]);
    ok(&["--config", p(&cfg), "--seed", "5", "dataset", "augment", "--manifest", p(&manifest), "--out-dir", p(&from_flag)]);
    assert_eq!(read_dir_bytes(&from_file), read_dir_bytes(&from_flag));

    std::fs::write(&cfg, "[augment]\nrotation_range = 3\n").unwrap();
    let bad = paddy(&["--config", p(&cfg), "dataset", "stats", p(dir.path())]);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("paddy.toml:2:"));
}

/// Published per-class (box precision, mAP50) pairs in percent, one per
/// detection class in canonical order.
const PUBLISHED: [(f64, f64); 12] = [
    (72.8, 50.9),
    (87.4, 89.1),
    (71.2, 78.6),
    (73.4, 75.3),
    (84.0, 66.4),
    (77.6, 55.4),
    (68.4, 67.3),
    (35.4, 21.9),
    (84.8, 76.2),
    (75.0, 82.4),
    (76.2, 83.8),
    (77.5, 80.6),
];

/// Per class: 1000 ground-truth boxes, `10 * map50` of them detected exactly
/// at high confidence, then enough low-confidence false positives in an
/// empty image to bring box precision to the target. AP equals the recall
/// reached by the true positives.
fn engineered_detection_dirs(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let preds = root.join("preds");
    let gts = root.join("gts");
    std::fs::create_dir_all(&preds).unwrap();
    std::fs::create_dir_all(&gts).unwrap();
    let cell = 1.0 / 32.0;
    for (class, &(precision, map)) in PUBLISHED.iter().enumerate() {
        let tp = (map * 10.0).round() as usize;
        let fp = (tp as f64 * (100.0 - precision) / precision).round() as usize;
        let mut gt_text = String::new();
        let mut pred_text = String::new();
        for i in 0..1000 {
            let cx = cell * ((i % 32) as f64 + 0.5);
            let cy = cell * ((i / 32) as f64 + 0.5);
            gt_text.push_str(&format!("{class} {cx:.6} {cy:.6} 0.020000 0.020000\n"));
            if i < tp {
                pred_text.push_str(&format!("{class} 0.900000 {cx:.6} {cy:.6} 0.020000 0.020000\n"));
            }
        }
        std::fs::write(gts.join(format!("c{class}.txt")), gt_text).unwrap();
        std::fs::write(preds.join(format!("c{class}.txt")), pred_text).unwrap();
        let fp_text: String = (0..fp)
            .map(|i| {
                let cx = cell * ((i % 32) as f64 + 0.5);
                let cy = cell * ((i / 32) as f64 + 0.5);
                format!("{class} 0.100000 {cx:.6} {cy:.6} 0.020000 0.020000\n")
            })
            .collect();
        std::fs::write(preds.join(format!("c{class}_fp.txt")), fp_text).unwrap();
    }
    (preds, gts)
}

#[test]
fn engineered_detection_fixtures_reproduce_published_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let (preds, gts) = engineered_detection_dirs(dir.path());
    let text = ok(&["eval", "detect", "--preds", p(&preds), "--gts", p(&gts)]);
    let all = text.lines().find(|l| l.trim_start().starts_with("all")).expect("all row");
    let values: Vec<f64> = all.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values[0], 73.6, "{text}");
    assert_eq!(values[2], 69.0, "{text}");

    let json = ok(&["--json", "eval", "detect", "--preds", p(&preds), "--gts", p(&gts)]);
    let report = EvalReport::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
    for (class, &(precision, map)) in PUBLISHED.iter().enumerate() {
        let row = report.row(CLASSES.iter().filter(|c| c.slug != "normal").nth(class).unwrap().slug).unwrap();
        assert!((row.values[0] - precision).abs() <= 0.1, "{row:?}");
        assert!((row.values[2] - map).abs() <= 0.05, "{row:?}");
    }
}

#[test]
fn detection_predictions_equal_to_truth_score_100() {
    let dir = tempfile::tempdir().unwrap();
    let (preds, gts) = (dir.path().join("p"), dir.path().join("g"));
    std::fs::create_dir_all(&preds).unwrap();
    std::fs::create_dir_all(&gts).unwrap();
    for i in 0..4 {
        std::fs::write(gts.join(format!("{i}.txt")), format!("{i} 0.300000 0.400000 0.200000 0.200000\n")).unwrap();
        std::fs::write(preds.join(format!("{i}.txt")), format!("{i} 0.800000 0.300000 0.400000 0.200000 0.200000\n")).unwrap();
    }
    let json = ok(&["--json", "eval", "detect", "--preds", p(&preds), "--gts", p(&gts)]);
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let report = EvalReport::from_json(&value).unwrap();
    assert_eq!(report.all.values, vec![100.0, 100.0, 100.0]);
    assert_eq!(report.to_json(), value);
}

#[test]
fn classification_eval_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.csv");
    let labels = dir.path().join("labels.csv");
    let mut pred_text = String::from("id");
    for c in 0..13 {
        pred_text.push_str(&format!(",prob_{c}"));
    }
    pred_text.push('\n');
    let mut label_text = String::from("id,class\n");
    for i in 0..13 {
        let probs: Vec<String> = (0..13).map(|c| if c == i { "1".into() } else { "0".into() }).collect();
        pred_text.push_str(&format!("x{i},{}\n", probs.join(",")));
        let label = if i % 2 == 0 { CLASSES[i].slug.to_string() } else { i.to_string() };
        label_text.push_str(&format!("x{i},{label}\n"));
    }
    std::fs::write(&preds, &pred_text).unwrap();
    std::fs::write(&labels, &label_text).unwrap();
    let json = ok(&["--json", "eval", "classify", "--preds", p(&preds), "--labels", p(&labels)]);
    let report = EvalReport::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(report.all.values, vec![100.0, 100.0, 100.0]);
    assert_eq!(report.summary_value("accuracy"), Some(100.0));
    assert_eq!(report.summary_value("cross_entropy_loss"), Some(0.0));

    std::fs::write(&preds, pred_text.replace("x3,0,0,0,1", "x3,0,0,0,oops")).unwrap();
    let bad = paddy(&["eval", "classify", "--preds", p(&preds), "--labels", p(&labels)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("preds.csv:5:5"), "{}", String::from_utf8_lossy(&bad.stderr));
}

#[test]
fn fixtures_make_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("imgs");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::write(images.join("a.png"), common::png(1)).unwrap();
    std::fs::write(images.join("b.png"), common::png(2)).unwrap();
    let spec = dir.path().join("spec.json");
    let probs: Vec<f64> = common::one_hot(4);
    std::fs::write(
        &spec,
        serde_json::json!({
            "a.png": { "probs": probs },
            "b.png": { "detections": [{ "class": 3, "conf": 0.7, "box": { "cx": 0.5, "cy": 0.5, "w": 0.2, "h": 0.2 } }] }
        })
        .to_string(),
    )
    .unwrap();
    let (one, two) = (dir.path().join("one.json"), dir.path().join("two.json"));
    ok(&["fixtures", "make", "--images", p(&images), "--spec", p(&spec), "--out", p(&one)]);
    ok(&["fixtures", "make", "--images", p(&images), "--spec", p(&spec), "--out", p(&two)]);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&two).unwrap());
    let store = paddy_core::inference::FixtureStore::load(&one).unwrap();
    let digest = paddy_core::inference::digest_hex(&common::png(1));
    assert_eq!(store.classifications[&digest].probs, probs);

    let mut short = vec![0.0; 13];
    short[0] = 0.9;
    std::fs::write(&spec, serde_json::json!({ "a.png": { "probs": short } }).to_string()).unwrap();
    let bad = paddy(&["fixtures", "make", "--images", p(&images), "--spec", p(&spec), "--out", p(&one)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("invalid input"));
}
