//! Point-distribution model: corpus alignment, PCA, reconstruction and the
//! on-disk container.

mod align;
mod io;
mod landmarks;
mod pca;

pub use align::{align_corpus, Alignment};
pub use io::{
    fingerprint, from_container_str, load_model, save_model, to_container_string, SHAPE_MODEL_FORMAT,
    SHAPE_MODEL_VERSION,
};
pub use landmarks::{BoundingBox, Frame, LandmarkSet, Point};
pub use pca::{
    apply_eigenvalue_scaling, compute_pca, compute_pca_unit, ModeScaling, ScalingReport, ShapeModel,
    DEGENERATE_RATIO,
};

/// Aligns a corpus and fits a scaled PCA model in one step. Crop-frame
/// shapes are first shifted so the crop center becomes the origin.
pub fn build_shape_model(
    corpus: &[LandmarkSet],
    alignment: Alignment,
    num_modes: usize,
    crop_size: u32,
) -> crate::Result<ShapeModel> {
    let half = crop_size as f64 / 2.0;
    let centered: Vec<LandmarkSet> = corpus
        .iter()
        .map(|s| match s.frame {
            Frame::Crop => s.crop_to_canonical(Point::new(half, half)),
            _ => s.clone(),
        })
        .collect();
    let aligned = align_corpus(&centered, &alignment)?;
    compute_pca(&aligned, num_modes, alignment, crop_size)
}
