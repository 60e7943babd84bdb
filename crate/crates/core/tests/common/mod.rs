#![allow(dead_code)]

use pdmnet_core::pca_layer::GlobalTransform;
use pdmnet_core::shape_model::{compute_pca, Alignment, Frame, LandmarkSet, ShapeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full-rank PCA model of `n` random shapes with `l` landmarks, centered
/// near the origin with a few pixels of spread per coordinate.
pub fn random_model(seed: u64, l: usize, p: usize) -> ShapeModel {
    let mut r = rng(seed);
    let base: Vec<f64> = (0..2 * l).map(|_| r.random_range(-40.0..40.0)).collect();
    let n = 2 * l + 8;
    let corpus: Vec<LandmarkSet> = (0..n)
        .map(|_| {
            let v: Vec<f64> = base.iter().map(|b| b + r.random_range(-5.0..5.0)).collect();
            LandmarkSet::from_flat(&v, Frame::Canonical)
        })
        .collect();
    compute_pca(&corpus, p, Alignment::None, 224).unwrap()
}

pub fn random_transform(r: &mut ChaCha8Rng) -> GlobalTransform {
    GlobalTransform::new(
        r.random_range(0.5..1.5),
        r.random_range(-3.0..3.0),
        r.random_range(0.0..224.0),
        r.random_range(0.0..224.0),
    )
}

pub fn random_weights(r: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| r.random_range(-3.0..3.0)).collect()
}

/// Small synthetic landmark task: 80 px canvases cropped to 64 px, with a
/// shape model fitted to the crop-frame annotations.
pub fn small_task(n: usize, seed: u64, num_modes: usize) -> (Vec<pdmnet_core::data_pipeline::Sample>, std::sync::Arc<ShapeModel>) {
    use pdmnet_core::data_pipeline::CropOptions;
    use pdmnet_core::shape_model::build_shape_model;
    use pdmnet_core::synth_data::{generate_dataset, SynthSpec};
    let spec = SynthSpec {
        num_samples: n,
        num_landmarks: 8,
        mode_amplitudes: vec![4.0, 2.0],
        image_size: 80,
        radius: 20.0,
        max_translation: 3.0,
        seed,
        ..SynthSpec::default()
    };
    let ds = generate_dataset(&spec, pdmnet_core::Exec::Sequential).unwrap();
    let opts = CropOptions {
        out_size: 64,
        ..CropOptions::default()
    };
    let samples = ds.cropped_samples(&opts, pdmnet_core::Exec::Sequential).unwrap();
    let corpus: Vec<LandmarkSet> = samples.iter().map(|s| s.landmarks.clone()).collect();
    let model = build_shape_model(&corpus, Alignment::None, num_modes, 64).unwrap();
    (samples, std::sync::Arc::new(model))
}
