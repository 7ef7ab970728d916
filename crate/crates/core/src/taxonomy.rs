//! Canonical 13-class paddy disease taxonomy.
//!
//! Classification uses all 13 classes in lexicographic slug order. Detection
//! uses the 12 disease classes only (the healthy class has no boxes), also in
//! lexicographic order, so detection index `i` maps to classification index
//! `i` below `normal` and `i + 1` above it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 13;
pub const NUM_DETECTION_CLASSES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathogenKind {
    Fungal,
    Bacterial,
    Viral,
    Pest,
    None,
}

impl fmt::Display for PathogenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PathogenKind::Fungal => "fungal",
            PathogenKind::Bacterial => "bacterial",
            PathogenKind::Viral => "viral",
            PathogenKind::Pest => "pest",
            PathogenKind::None => "none",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiseaseClass {
    pub index: usize,
    pub slug: &'static str,
    pub display_name: &'static str,
    pub pathogen_kind: PathogenKind,
}

pub const NORMAL_SLUG: &str = "normal";

/// The taxonomy in canonical order. Indices are positions in this table.
pub static CLASSES: [DiseaseClass; NUM_CLASSES] = [
    class(0, "bacterial_leaf_blight", "Bacterial leaf blight", PathogenKind::Bacterial),
    class(1, "bacterial_leaf_streak", "Bacterial leaf streak", PathogenKind::Bacterial),
    class(2, "bacterial_panicle_blight", "Bacterial panicle blight", PathogenKind::Bacterial),
    class(3, "black_stem_borer", "Black stem borer", PathogenKind::Pest),
    class(4, "blast", "Blast", PathogenKind::Fungal),
    class(5, "brown_spot", "Brown spot", PathogenKind::Fungal),
    class(6, "downy_mildew", "Downy mildew", PathogenKind::Fungal),
    class(7, "hispa", "Hispa", PathogenKind::Pest),
    class(8, "leaf_roller", "Leaf roller", PathogenKind::Pest),
    class(9, "normal", "Normal (healthy)", PathogenKind::None),
    class(10, "tungro", "Tungro", PathogenKind::Viral),
    class(11, "white_stem_borer", "White stem borer", PathogenKind::Pest),
    class(12, "yellow_stem_borer", "Yellow stem borer", PathogenKind::Pest),
];

const fn class(
    index: usize,
    slug: &'static str,
    display_name: &'static str,
    pathogen_kind: PathogenKind,
) -> DiseaseClass {
    DiseaseClass {
        index,
        slug,
        display_name,
        pathogen_kind,
    }
}

const NORMAL_INDEX: usize = 9;

pub fn class_index(slug: &str) -> Result<usize> {
    CLASSES
        .iter()
        .position(|c| c.slug == slug)
        .ok_or_else(|| Error::not_found(format!("unknown class slug {slug:?}")))
}

pub fn index_to_slug(index: usize) -> Result<&'static str> {
    disease_class(index).map(|c| c.slug)
}

pub fn disease_class(index: usize) -> Result<&'static DiseaseClass> {
    CLASSES
        .get(index)
        .ok_or_else(|| Error::not_found(format!("class index {index} out of range")))
}

pub fn pathogen_kind(index: usize) -> Result<PathogenKind> {
    disease_class(index).map(|c| c.pathogen_kind)
}

pub fn normal_index() -> usize {
    NORMAL_INDEX
}

pub fn is_normal(index: usize) -> bool {
    index == NORMAL_INDEX
}

/// Maps a 12-class detection index onto the 13-class classification index
/// carrying the same slug.
pub fn detection_to_class(detection_index: usize) -> Result<usize> {
    if detection_index >= NUM_DETECTION_CLASSES {
        return Err(Error::not_found(format!(
            "detection class index {detection_index} out of range"
        )));
    }
    Ok(if detection_index < NORMAL_INDEX {
        detection_index
    } else {
        detection_index + 1
    })
}

/// Inverse of [`detection_to_class`]; `normal` has no detection index.
pub fn class_to_detection(class_index: usize) -> Option<usize> {
    match class_index {
        i if i < NORMAL_INDEX => Some(i),
        NORMAL_INDEX => None,
        i if i < NUM_CLASSES => Some(i - 1),
        _ => None,
    }
}

pub fn detection_slug(detection_index: usize) -> Result<&'static str> {
    detection_to_class(detection_index).and_then(index_to_slug)
}

pub fn detection_index(slug: &str) -> Result<usize> {
    let idx = class_index(slug)?;
    class_to_detection(idx)
        .ok_or_else(|| Error::not_found(format!("{slug:?} is not a detection class")))
}
