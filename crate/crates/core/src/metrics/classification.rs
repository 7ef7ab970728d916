use serde::{Deserialize, Serialize};

use super::report::{EvalReport, ReportColumn};
use super::ratio;
use crate::error::{Error, Result};
use crate::taxonomy::{self, NUM_CLASSES};

/// Lower bound applied to the true-class probability inside the logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Row-major `N x C` matrix of predicted class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::invalid("probability matrix needs at least one class"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "probability matrix has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        for (i, row) in data.chunks(cols).enumerate() {
            validate_distribution(row).map_err(|e| Error::invalid(format!("row {i}: {e}")))?;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged probability rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows).map(|i| argmax(self.row(i))).collect()
    }
}

/// Checks entries lie in `[0, 1]` and sum to one within 1e-6.
pub(crate) fn validate_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}, expected 1"));
    }
    Ok(())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

/// Mean negative log-likelihood of the true class (one-hot targets).
pub fn cross_entropy(probs: &ProbMatrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows but {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("cross-entropy of an empty batch"));
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= probs.cols() {
            return Err(Error::invalid(format!("label {label} out of range for row {i}")));
        }
        total -= probs.row(i)[label].max(PROB_CLAMP).ln();
    }
    Ok(total / labels.len() as f64)
}

/// `C x C` counts; entry `(t, p)` is the number of instances of true class
/// `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { classes, counts: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// One-vs-rest counts for `class`.
    pub fn binary_counts(&self, class: usize) -> BinaryCounts {
        let tp = self.get(class, class);
        let row: u64 = (0..self.classes).map(|p| self.get(class, p)).sum();
        let col: u64 = (0..self.classes).map(|t| self.get(t, class)).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        BinaryCounts { tp, fp, fn_, tn: self.total() - tp - fp - fn_ }
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (i, (&p, &t)) in preds.iter().zip(labels).enumerate() {
        if p >= classes || t >= classes {
            return Err(Error::invalid(format!("instance {i}: class out of range 0..{classes}")));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio((self.tp + self.tn) as f64, self.total() as f64)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        ratio(2.0 * p * r, p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class_index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let per_class: Vec<ClassScores> = (0..cm.classes())
        .map(|c| {
            let b = cm.binary_counts(c);
            ClassScores {
                class_index: c,
                precision: b.precision(),
                recall: b.recall(),
                f1: b.f1(),
                support: b.tp + b.fn_,
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / per_class.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: cm.trace() as f64 / n as f64,
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        per_class,
    })
}

pub(crate) fn class_label(index: usize, classes: usize) -> String {
    if classes == NUM_CLASSES {
        taxonomy::CLASSES[index].slug.to_string()
    } else {
        format!("class_{index}")
    }
}

/// Per-class precision/recall/F1 rows, a macro "all" row, and overall
/// accuracy in the summary.
pub fn classification_report(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let m = classification_metrics(cm)?;
    let rows = m
        .per_class
        .iter()
        .map(|s| (class_label(s.class_index, cm.classes()), vec![s.precision, s.recall, s.f1]))
        .collect();
    let mut report = EvalReport::from_fractions(
        "Classification results",
        vec![
            ReportColumn::new("precision", "Precision"),
            ReportColumn::new("recall", "Recall"),
            ReportColumn::new("f1", "F1"),
        ],
        rows,
    );
    report.push_summary("accuracy", m.accuracy);
    report.push_summary("macro_f1", m.macro_f1);
    Ok(report)
}
