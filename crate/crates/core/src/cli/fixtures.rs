use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inference::{digest_hex, FixtureDetection, FixtureStore};

/// Canned outputs for one image file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpecEntry {
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub detections: Option<Vec<FixtureDetection>>,
}

/// JSON object keyed by image file name, relative to the images directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct FixtureSpec(pub BTreeMap<String, FixtureSpecEntry>);

impl FixtureSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Hashes every listed image and attaches its canned outputs. The result is
/// validated before it is returned.
pub fn make_fixtures(images: &Path, spec: &FixtureSpec) -> Result<FixtureStore> {
    let mut store = FixtureStore::default();
    for (name, entry) in &spec.0 {
        let bytes = std::fs::read(images.join(name))
            .map_err(|e| Error::not_found(format!("{}: {e}", images.join(name).display())))?;
        let digest = digest_hex(&bytes);
        if entry.probs.is_none() && entry.detections.is_none() {
            return Err(Error::invalid(format!("{name}: entry has neither probs nor detections")));
        }
        if let Some(probs) = &entry.probs {
            store.insert_classification(digest.clone(), probs.clone());
        }
        if let Some(dets) = &entry.detections {
            store.insert_detections(digest, dets.clone());
        }
    }
    store.validate()?;
    Ok(store)
}
