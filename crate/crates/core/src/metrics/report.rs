use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const ALL_LABEL: &str = "all";

/// Rounds a fraction to a percentage with one decimal place.
pub fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportColumn {
    /// Key used in JSON output.
    pub key: String,
    /// Header used in text output.
    pub header: String,
}

impl ReportColumn {
    pub fn new(key: impl Into<String>, header: impl Into<String>) -> Self {
        Self { key: key.into(), header: header.into() }
    }
}

/// One table row; values are percentages rounded to one decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub values: Vec<f64>,
}

/// Per-class table with a macro-averaged "all" row.
///
/// The "all" row is the unweighted mean of the unrounded per-class values,
/// rounded only for display.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub title: String,
    pub columns: Vec<ReportColumn>,
    pub rows: Vec<ReportRow>,
    pub all: ReportRow,
    /// Scalar results (accuracy, loss, ...), stored as rounded percentages
    /// except for keys ending in `_loss`.
    pub summary: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl EvalReport {
    /// Builds a report from per-class fractions in `[0, 1]`.
    pub fn from_fractions(
        title: impl Into<String>,
        columns: Vec<ReportColumn>,
        rows: Vec<(String, Vec<f64>)>,
    ) -> Self {
        let width = columns.len();
        let mut sums = vec![0.0; width];
        for (_, values) in &rows {
            assert_eq!(values.len(), width, "row width must match column count");
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v;
            }
        }
        let n = rows.len().max(1) as f64;
        let all = ReportRow {
            label: ALL_LABEL.to_string(),
            values: sums.iter().map(|s| round_percent(s / n)).collect(),
        };
        let rows = rows
            .into_iter()
            .map(|(label, values)| ReportRow {
                label,
                values: values.into_iter().map(round_percent).collect(),
            })
            .collect();
        Self {
            title: title.into(),
            columns,
            rows,
            all,
            summary: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_summary(&mut self, key: &str, fraction: f64) {
        let value = if key.ends_with("_loss") {
            (fraction * 1e5).round() / 1e5
        } else {
            round_percent(fraction)
        };
        self.summary.push((key.to_string(), value));
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        if label == ALL_LABEL {
            return Some(&self.all);
        }
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn column_index(&self, key: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.key == key)
    }

    /// Aligned plain-text table with the "all" row first.
    pub fn render_text(&self) -> String {
        let label_width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain([5, ALL_LABEL.len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = write!(out, "{:<label_width$}", "Class");
        for c in &self.columns {
            let _ = write!(out, "  {:>w$}", c.header, w = c.header.len().max(6));
        }
        out.push('\n');
        for row in std::iter::once(&self.all).chain(&self.rows) {
            let _ = write!(out, "{:<label_width$}", row.label);
            for (c, v) in self.columns.iter().zip(&row.values) {
                let _ = write!(out, "  {:>w$.1}", v, w = c.header.len().max(6));
            }
            out.push('\n');
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "{k}: {v}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    /// JSON object with `rows` as `{class, <column keys>...}` objects and the
    /// "all" row last.
    pub fn to_json(&self) -> Value {
        let row_json = |row: &ReportRow| {
            let mut obj = Map::new();
            obj.insert("class".into(), Value::from(row.label.clone()));
            for (c, v) in self.columns.iter().zip(&row.values) {
                obj.insert(c.key.clone(), Value::from(*v));
            }
            Value::Object(obj)
        };
        let rows: Vec<Value> = self.rows.iter().chain([&self.all]).map(row_json).collect();
        let columns: Vec<Value> = self
            .columns
            .iter()
            .map(|c| serde_json::json!({"key": c.key, "header": c.header}))
            .collect();
        let summary: Map<String, Value> =
            self.summary.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        serde_json::json!({
            "title": self.title,
            "columns": columns,
            "rows": rows,
            "summary": summary,
            "notes": self.notes,
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::invalid(format!("report json: {what}"));
        let title = value["title"].as_str().ok_or_else(|| bad("missing title"))?.to_string();
        let columns = value["columns"]
            .as_array()
            .ok_or_else(|| bad("missing columns"))?
            .iter()
            .map(|c| {
                Ok(ReportColumn::new(
                    c["key"].as_str().ok_or_else(|| bad("column key"))?,
                    c["header"].as_str().ok_or_else(|| bad("column header"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = value["rows"]
            .as_array()
            .ok_or_else(|| bad("missing rows"))?
            .iter()
            .map(|r| {
                let label = r["class"].as_str().ok_or_else(|| bad("row class"))?.to_string();
                let values = columns
                    .iter()
                    .map(|c| r[&c.key].as_f64().ok_or_else(|| bad("row value")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ReportRow { label, values })
            })
            .collect::<Result<Vec<_>>>()?;
        let all = rows.pop().filter(|r| r.label == ALL_LABEL).ok_or_else(|| bad("trailing all row"))?;
        let summary = value["summary"]
            .as_object()
            .map(|m| m.iter().filter_map(|(k, v)| v.as_f64().map(|v| (k.clone(), v))).collect())
            .unwrap_or_default();
        let notes = value["notes"]
            .as_array()
            .map(|a| a.iter().filter_map(|n| n.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        Ok(Self { title, columns, rows, all, summary, notes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        let mut r = EvalReport::from_fractions(
            "t",
            vec![ReportColumn::new("a", "A"), ReportColumn::new("b", "B")],
            vec![("x".into(), vec![0.5, 0.25]), ("y".into(), vec![1.0, 0.0])],
        );
        r.push_summary("accuracy", 0.7);
        r.notes.push("hello".into());
        r
    }

    #[test]
    fn all_row_is_macro_mean() {
        let r = sample();
        assert_eq!(r.all.values, vec![75.0, 12.5]);
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let text = serde_json::to_string(&r.to_json()).unwrap();
        let back = EvalReport::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn text_has_all_first() {
        let text = sample().render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[2].starts_with("all"));
        assert!(text.contains("75.0"));
    }
}
