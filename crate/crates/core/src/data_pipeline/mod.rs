//! Annotation parsing, crop/resize into the network frame, augmentation and
//! dataset manifests.

mod augment;
mod crop;
mod image;
mod manifest;
mod parse;

pub use augment::{augment, augment_with, AugmentConfig, AugmentParams};
pub use crop::{
    crop_and_resize, crop_box, landmarks_to_original, CropOptions, CropRecord, DEFAULT_CROP_SIZE, DEFAULT_MARGIN,
};
pub use image::{load_image, save_png, Image};
pub use manifest::{
    load_annotations, load_manifest, load_samples, parse_manifest, write_manifest, Annotation, AnnotationReader,
    Manifest, ManifestEntry, Split,
};
pub use parse::{parse_cat, parse_csv_landmarks, parse_pts, write_csv_landmarks, write_pts, CsvSchema};

use crate::shape_model::LandmarkSet;

/// A network-ready training or test example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `out_size x out_size`, values in `[0, 1]`.
    pub image: Image,
    /// Crop frame.
    pub landmarks: LandmarkSet,
    pub crop: CropRecord,
}
