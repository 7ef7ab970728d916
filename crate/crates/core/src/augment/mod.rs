//! Data preparation: train/test splitting, label-preserving augmentation with
//! bounding-box transformation, model-input preprocessing, and the annotation
//! and manifest file formats.

mod annotation;
mod manifest;
mod preprocess;
mod split;
mod transform;

pub use annotation::{
    format_annotations, format_predictions, parse_annotations, parse_predictions, AnnotatedBox,
    PredictedBox,
};
pub use manifest::{read_manifest, write_manifest, ManifestRow, Split};
pub use preprocess::{preprocess, Tensor, IMAGENET_MEAN, IMAGENET_STD, SUPPORTED_SIDES};
pub use split::{plan_augmentation, split_dataset, AugmentationJob, SplitManifest};
pub use transform::{
    apply_transform, random_transform, transform_box, AffineMap, AnnotatedImage, AugmentConfig,
    BoxOutcome, TransformSpec, DEFAULT_MIN_VISIBILITY,
};
