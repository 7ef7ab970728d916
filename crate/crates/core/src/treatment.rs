//! Treatment knowledge base: class slug -> summary and recommended actions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{self, NUM_CLASSES};

const BUNDLED: &str = include_str!("../data/treatments.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentEntry {
    pub class_index: usize,
    pub slug: String,
    pub summary: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    slug: String,
    summary: String,
    actions: Vec<String>,
}

/// Immutable after load; indexed by classification class index.
#[derive(Debug, Clone)]
pub struct TreatmentKb {
    entries: Vec<TreatmentEntry>,
}

impl TreatmentKb {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled treatment file is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<RawEntry> = serde_json::from_str(text)?;
        let mut slots: Vec<Option<TreatmentEntry>> = vec![None; NUM_CLASSES];
        for entry in raw {
            let idx = taxonomy::class_index(&entry.slug)
                .map_err(|_| Error::invalid(format!("treatment for unknown slug {:?}", entry.slug)))?;
            if slots[idx].is_some() {
                return Err(Error::invalid(format!("duplicate treatment for {:?}", entry.slug)));
            }
            if taxonomy::is_normal(idx) {
                if !entry.actions.is_empty() {
                    return Err(Error::invalid("the normal class must have no actions"));
                }
            } else if entry.actions.is_empty() {
                return Err(Error::invalid(format!("{:?} has no actions", entry.slug)));
            }
            slots[idx] = Some(TreatmentEntry {
                class_index: idx,
                slug: entry.slug,
                summary: entry.summary,
                actions: entry.actions,
            });
        }
        let entries = slots
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                e.ok_or_else(|| {
                    Error::invalid(format!("missing treatment for {}", taxonomy::CLASSES[i].slug))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn treatment_for(&self, class_index: usize) -> Result<&TreatmentEntry> {
        self.entries
            .get(class_index)
            .ok_or_else(|| Error::not_found(format!("class index {class_index} out of range")))
    }

    pub fn by_slug(&self, slug: &str) -> Result<&TreatmentEntry> {
        self.treatment_for(taxonomy::class_index(slug)?)
    }
}

impl Default for TreatmentKb {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_kb_satisfies_invariants() {
        let kb = TreatmentKb::bundled();
        for c in &taxonomy::CLASSES {
            let entry = kb.treatment_for(c.index).unwrap();
            assert_eq!(entry.slug, c.slug);
            if taxonomy::is_normal(c.index) {
                assert!(entry.actions.is_empty());
            } else {
                assert!(!entry.actions.is_empty(), "{}", c.slug);
            }
        }
    }

    #[test]
    fn out_of_range_is_not_found() {
        let kb = TreatmentKb::bundled();
        assert!(matches!(kb.treatment_for(13), Err(Error::NotFound(_))));
    }

    #[test]
    fn rejects_incomplete_file() {
        let err = TreatmentKb::from_json(r#"[{"slug":"blast","summary":"x","actions":["a"]}]"#);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
