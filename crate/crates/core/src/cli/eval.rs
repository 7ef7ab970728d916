use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use super::EvalCmd;
use crate::augment::{parse_annotations, parse_predictions};
use crate::error::{Error, Result};
use crate::metrics::{
    classification_report, confusion, cross_entropy, detection_report, EvalReport, GroundTruth, ImageDetections,
    ProbMatrix, ScoredBox,
};
use crate::taxonomy::{self, NUM_CLASSES};

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, column, message: message.into() }
}

fn read_records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        parse_err(path, line, 1, e.to_string())
    })?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        out.push((line, record));
    }
    Ok(out)
}

/// Reads `id,prob_0..prob_12` predictions and `id,class` labels (slug or
/// index) and joins them on id in prediction order.
pub fn read_classification_inputs(preds: &Path, labels: &Path) -> Result<(ProbMatrix, Vec<usize>)> {
    let mut label_of: HashMap<String, usize> = HashMap::new();
    for (line, rec) in read_records(labels)? {
        if rec.len() != 2 {
            return Err(parse_err(labels, line, 1, format!("expected 2 fields, found {}", rec.len())));
        }
        let raw = &rec[1];
        let class = match raw.parse::<usize>() {
            Ok(i) if i < NUM_CLASSES => i,
            Ok(i) => return Err(parse_err(labels, line, 2, format!("class index {i} out of range"))),
            Err(_) => taxonomy::class_index(raw).map_err(|e| parse_err(labels, line, 2, e.to_string()))?,
        };
        if label_of.insert(rec[0].to_string(), class).is_some() {
            return Err(parse_err(labels, line, 1, format!("duplicate id {:?}", &rec[0])));
        }
    }
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (line, rec) in read_records(preds)? {
        if rec.len() != NUM_CLASSES + 1 {
            return Err(parse_err(preds, line, 1, format!("expected {} fields, found {}", NUM_CLASSES + 1, rec.len())));
        }
        let probs = (1..rec.len())
            .map(|i| {
                rec[i].parse::<f64>().map_err(|e| parse_err(preds, line, i + 1, format!("{:?}: {e}", &rec[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let Some(&class) = label_of.get(&rec[0]) else {
            return Err(parse_err(preds, line, 1, format!("no label for id {:?}", &rec[0])));
        };
        rows.push(probs);
        truth.push(class);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no predictions", preds.display())));
    }
    Ok((ProbMatrix::from_rows(&rows)?, truth))
}

/// Per-class precision/recall/F1 with accuracy, macro F1 and the mean
/// cross-entropy loss in the summary.
pub fn eval_classify(preds: &Path, labels: &Path) -> Result<EvalReport> {
    let (probs, truth) = read_classification_inputs(preds, labels)?;
    let cm = confusion(&probs.argmax(), &truth, NUM_CLASSES)?;
    let mut report = classification_report(&cm)?;
    report.push_summary("cross_entropy_loss", cross_entropy(&probs, &truth)?);
    Ok(report)
}

fn txt_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut stems = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem() {
                stems.insert(stem.to_string_lossy().into_owned());
            }
        }
    }
    Ok(stems)
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Pairs `<stem>.txt` files across the two directories. A stem present on
/// one side only counts as an image with no boxes on the other.
pub fn read_detection_dirs(preds: &Path, gts: &Path) -> Result<Vec<ImageDetections>> {
    let mut stems = txt_stems(preds)?;
    stems.extend(txt_stems(gts)?);
    let mut images = Vec::with_capacity(stems.len());
    for stem in stems {
        let file = format!("{stem}.txt");
        let mut image = ImageDetections::default();
        let p = preds.join(&file);
        if let Some(text) = read_optional(&p)? {
            image.predictions = parse_predictions(&text, &p.display().to_string())?
                .into_iter()
                .map(|b| ScoredBox { class_index: b.class_index, confidence: b.confidence, rect: b.bbox.to_rect() })
                .collect();
        }
        let g = gts.join(&file);
        if let Some(text) = read_optional(&g)? {
            image.ground_truth = parse_annotations(&text, &g.display().to_string())?
                .into_iter()
                .map(|b| GroundTruth { class_index: b.class_index, rect: b.bbox.to_rect() })
                .collect();
        }
        images.push(image);
    }
    Ok(images)
}

pub fn eval_detect(preds: &Path, gts: &Path) -> Result<EvalReport> {
    detection_report(&read_detection_dirs(preds, gts)?)
}

pub(super) fn run(cmd: EvalCmd, json: bool, out: &mut dyn Write) -> Result<()> {
    let report = match cmd {
        EvalCmd::Classify { preds, labels } => eval_classify(&preds, &labels)?,
        EvalCmd::Detect { preds, gts } => eval_detect(&preds, &gts)?,
    };
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report.to_json())?)?;
    } else {
        write!(out, "{}", report.render_text())?;
    }
    Ok(())
}
