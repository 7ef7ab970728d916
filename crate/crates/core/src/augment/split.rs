use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded shuffle followed by a `round(ratio * N)` train prefix.
pub fn split_dataset(items: &[String], ratio: f64, seed: u64) -> Result<SplitManifest> {
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty item list"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let unique: HashSet<&String> = items.iter().collect();
    if unique.len() != items.len() {
        return Err(Error::invalid("item ids must be unique"));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * items.len() as f64).round() as usize;
    let test = shuffled.split_off(n_train);
    Ok(SplitManifest { train: shuffled, test, seed, ratio })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationJob {
    pub source_id: String,
    pub variant: usize,
    pub draw_index: u64,
}

impl AugmentationJob {
    pub fn output_id(&self) -> String {
        format!("{}_aug{}", self.source_id, self.variant)
    }
}

/// One job per `(train item, variant)`. Test items never appear.
pub fn plan_augmentation(split: &SplitManifest, multiplier: usize) -> Result<Vec<AugmentationJob>> {
    if multiplier == 0 {
        return Err(Error::invalid("multiplier must be at least 1"));
    }
    Ok(split
        .train
        .iter()
        .enumerate()
        .flat_map(|(i, id)| {
            (0..multiplier).map(move |variant| AugmentationJob {
                source_id: id.clone(),
                variant,
                draw_index: (i * multiplier + variant) as u64,
            })
        })
        .collect())
}
