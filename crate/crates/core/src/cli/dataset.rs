use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{DatasetCmd, FileConfig, GlobalOpts};
use crate::augment::{
    apply_transform, format_annotations, parse_annotations, plan_augmentation, random_transform, read_manifest,
    split_dataset, write_manifest, AnnotatedImage, AugmentConfig, ManifestRow, Split, SplitManifest,
};
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::taxonomy;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassCount {
    pub class: String,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub classes: Vec<ClassCount>,
    pub total: usize,
    /// Subdirectories whose names are not class slugs.
    pub unrecognized: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AugmentSummary {
    pub train_items: usize,
    pub written: usize,
    pub manifest: PathBuf,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Counts images in a directory-per-class tree. Rows follow canonical class
/// order and only include classes that have a directory.
pub fn dataset_stats(dir: &Path) -> Result<DatasetStats> {
    let mut found: HashMap<usize, usize> = HashMap::new();
    let mut unrecognized = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let Ok(index) = taxonomy::class_index(&name) else {
            unrecognized.push(name);
            continue;
        };
        let mut n = 0;
        for file in std::fs::read_dir(entry.path())? {
            let file = file?;
            if file.file_type()?.is_file() && is_image(&file.path()) {
                n += 1;
            }
        }
        found.insert(index, n);
    }
    unrecognized.sort();
    let classes: Vec<ClassCount> = taxonomy::CLASSES
        .iter()
        .enumerate()
        .filter_map(|(i, c)| found.get(&i).map(|&images| ClassCount { class: c.slug.to_string(), images }))
        .collect();
    let total = classes.iter().map(|c| c.images).sum();
    Ok(DatasetStats { classes, total, unrecognized })
}

/// Returns the rows with every split assigned by a seeded shuffle.
pub fn split_manifest(rows: &[ManifestRow], ratio: f64, seed: u64) -> Result<Vec<ManifestRow>> {
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let split = split_dataset(&ids, ratio, seed)?;
    let train: std::collections::HashSet<&String> = split.train.iter().collect();
    Ok(rows
        .iter()
        .map(|r| ManifestRow {
            split: Some(if train.contains(&r.id) { Split::Train } else { Split::Test }),
            ..r.clone()
        })
        .collect())
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes `multiplier` variants of every train item to `out_dir` along with
/// their transformed annotations and an `out_dir/manifest.csv` listing them.
/// Annotation files sit next to their image with a `.txt` extension; images
/// without one are augmented with no boxes.
pub fn augment_dataset(
    manifest: &Path,
    out_dir: &Path,
    multiplier: usize,
    config: &AugmentConfig,
) -> Result<AugmentSummary> {
    config.validate()?;
    let rows = read_manifest(manifest)?;
    if let Some(row) = rows.iter().find(|r| r.split.is_none()) {
        return Err(Error::Refused(format!(
            "item {:?} has no split; run `dataset split` before augmenting",
            row.id
        )));
    }
    let plan = SplitManifest {
        train: rows.iter().filter(|r| r.split == Some(Split::Train)).map(|r| r.id.clone()).collect(),
        test: rows.iter().filter(|r| r.split == Some(Split::Test)).map(|r| r.id.clone()).collect(),
        seed: config.seed,
        ratio: 0.0,
    };
    let jobs = plan_augmentation(&plan, multiplier)?;
    let by_id: HashMap<&str, &ManifestRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let base = manifest.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;

    let mut out_rows = Vec::with_capacity(jobs.len());
    let mut loaded: Option<(String, AnnotatedImage, bool)> = None;
    for job in &jobs {
        let row = by_id[job.source_id.as_str()];
        if loaded.as_ref().is_none_or(|(id, _, _)| *id != row.id) {
            let image_path = resolve(base, &row.path);
            let image = RasterImage::decode(&std::fs::read(&image_path)?)?;
            let ann_path = image_path.with_extension("txt");
            let (boxes, has_ann) = match std::fs::read_to_string(&ann_path) {
                Ok(text) => (parse_annotations(&text, &ann_path.display().to_string())?, true),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => (Vec::new(), false),
                Err(e) => return Err(e.into()),
            };
            loaded = Some((row.id.clone(), AnnotatedImage { image, boxes }, has_ann));
        }
        let (_, source, has_ann) = loaded.as_ref().expect("source loaded");
        let spec = random_transform(config, job.draw_index)?;
        let out = apply_transform(source, &spec, config.min_visibility)?;
        let id = job.output_id();
        let file = format!("{id}.png");
        std::fs::write(out_dir.join(&file), out.image.encode_png()?)?;
        if *has_ann {
            std::fs::write(out_dir.join(format!("{id}.txt")), format_annotations(&out.boxes))?;
        }
        out_rows.push(ManifestRow {
            id,
            path: file,
            split: Some(Split::Train),
            class_slug: row.class_slug.clone(),
            source: Some(row.id.clone()),
        });
    }
    let out_manifest = out_dir.join("manifest.csv");
    write_manifest(&out_manifest, &out_rows)?;
    Ok(AugmentSummary { train_items: plan.train.len(), written: out_rows.len(), manifest: out_manifest })
}

pub(super) fn run(cmd: DatasetCmd, opts: &GlobalOpts, config: FileConfig, out: &mut dyn Write) -> Result<()> {
    match cmd {
        DatasetCmd::Stats { dir } => {
            let stats = dataset_stats(&dir)?;
            if opts.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
                return Ok(());
            }
            let width = stats.classes.iter().map(|c| c.class.len()).max().unwrap_or(5).max(5);
            for c in &stats.classes {
                writeln!(out, "{:<width$}  {:>6}", c.class, c.images)?;
            }
            writeln!(out, "{:<width$}  {:>6}", "total", stats.total)?;
            for name in &stats.unrecognized {
                writeln!(out, "unrecognized directory: {name}")?;
            }
        }
        DatasetCmd::Split { manifest, ratio, out: dest } => {
            let seed = opts.seed.unwrap_or(0);
            let rows = split_manifest(&read_manifest(&manifest)?, ratio, seed)?;
            let dest = dest.unwrap_or(manifest);
            write_manifest(&dest, &rows)?;
            let train = rows.iter().filter(|r| r.split == Some(Split::Train)).count();
            let test = rows.len() - train;
            if opts.json {
                writeln!(out, "{}", serde_json::json!({ "manifest": dest, "train": train, "test": test, "seed": seed }))?;
            } else {
                writeln!(out, "train {train}  test {test}  (seed {seed}) -> {}", dest.display())?;
            }
        }
        DatasetCmd::Augment { manifest, out_dir, multiplier } => {
            let mut cfg = config.augment.unwrap_or_default();
            if let Some(seed) = opts.seed {
                cfg.seed = seed;
            }
            let summary = augment_dataset(&manifest, &out_dir, multiplier, &cfg)?;
            if opts.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
            } else {
                writeln!(
                    out,
                    "wrote {} items from {} train items -> {}",
                    summary.written,
                    summary.train_items,
                    summary.manifest.display()
                )?;
            }
        }
    }
    Ok(())
}
