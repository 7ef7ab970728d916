//! Dataset manifest CSV: `id,path,split` plus optional `class_slug` and
//! `source` (the id an augmented item was derived from).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub class_slug: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<ManifestRow> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = record.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            column: 1,
            message,
        };
        if !seen.insert(row.id.clone()) {
            return Err(parse_err(format!("duplicate id {:?}", row.id)));
        }
        if let Some(slug) = &row.class_slug {
            taxonomy::class_index(slug).map_err(|e| parse_err(e.to_string()))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = e
        .position()
        .map_or((0, 0), |p| (p.line() as usize, 1));
    Error::Parse {
        path: path.display().to_string(),
        line,
        column,
        message: e.to_string(),
    }
}
