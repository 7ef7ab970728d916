//! Annotation text format: one box per line, `class_index cx cy w h`, with
//! normalized coordinates written to six decimals. Prediction files add a
//! confidence column: `class_index confidence cx cy w h`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NormalizedBox;
use crate::taxonomy::NUM_DETECTION_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub class_index: usize,
    pub bbox: NormalizedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBox {
    pub class_index: usize,
    pub confidence: f64,
    pub bbox: NormalizedBox,
}

struct Fields<'a> {
    path: &'a str,
    line_no: usize,
    items: Vec<(usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn split(path: &'a str, line_no: usize, line: &'a str) -> Self {
        let mut items = Vec::new();
        let mut rest = line;
        let mut offset = 0;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let tail = &rest[start..];
            let len = tail.find(char::is_whitespace).unwrap_or(tail.len());
            items.push((offset + start + 1, &tail[..len]));
            offset += start + len;
            rest = &tail[len..];
        }
        Self { path, line_no, items }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line_no,
            column,
            message: message.into(),
        }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.items.len() != n {
            let col = self.items.get(n).map_or(1, |i| i.0);
            return Err(self.err(col, format!("expected {n} fields, found {}", self.items.len())));
        }
        Ok(())
    }

    fn class(&self, i: usize) -> Result<usize> {
        let (col, text) = self.items[i];
        let v: usize = text.parse().map_err(|_| self.err(col, format!("invalid class index {text:?}")))?;
        if v >= NUM_DETECTION_CLASSES {
            return Err(self.err(col, format!("class index {v} outside 0..{NUM_DETECTION_CLASSES}")));
        }
        Ok(v)
    }

    fn number(&self, i: usize) -> Result<f64> {
        let (col, text) = self.items[i];
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(col, format!("invalid number {text:?}")))
    }

    fn bbox(&self, first: usize) -> Result<NormalizedBox> {
        let v = [self.number(first)?, self.number(first + 1)?, self.number(first + 2)?, self.number(first + 3)?];
        NormalizedBox::new(v[0], v[1], v[2], v[3])
            .map_err(|_| self.err(self.items[first].0, format!("invalid box {v:?}")))
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

pub fn parse_annotations(text: &str, path: &str) -> Result<Vec<AnnotatedBox>> {
    content_lines(text)
        .map(|(n, line)| {
            let f = Fields::split(path, n, line);
            f.expect_len(5)?;
            Ok(AnnotatedBox { class_index: f.class(0)?, bbox: f.bbox(1)? })
        })
        .collect()
}

pub fn parse_predictions(text: &str, path: &str) -> Result<Vec<PredictedBox>> {
    content_lines(text)
        .map(|(n, line)| {
            let f = Fields::split(path, n, line);
            f.expect_len(6)?;
            let confidence = f.number(1)?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(f.err(f.items[1].0, "confidence outside [0, 1]"));
            }
            Ok(PredictedBox { class_index: f.class(0)?, confidence, bbox: f.bbox(2)? })
        })
        .collect()
}

pub fn format_annotations(boxes: &[AnnotatedBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", b.class_index, b.bbox.cx, b.bbox.cy, b.bbox.w, b.bbox.h);
    }
    out
}

pub fn format_predictions(boxes: &[PredictedBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            b.class_index, b.confidence, b.bbox.cx, b.bbox.cy, b.bbox.w, b.bbox.h
        );
    }
    out
}
