mod common;

use std::sync::Arc;

use common::{random_model, random_transform, random_weights, rng};
use pdmnet_core::pca_layer::{GlobalTransform, ParamVector, PcaLayer};
use pdmnet_core::shape_model::{Frame, LandmarkSet};
use proptest::prelude::*;
use rand::Rng;

fn objective(layer: &PcaLayer, raw: &[f64], coef: &[f64]) -> f64 {
    let params = ParamVector::from_raw(raw, layer.num_params()).unwrap();
    let out = layer.forward_one(&params).unwrap().to_flat();
    out.iter().zip(coef).map(|(a, b)| a * b).sum()
}

#[test]
fn analytic_gradients_match_central_differences_over_100_seeds() {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let l = r.random_range(3..12);
        let p = r.random_range(1..=2 * l);
        let layer = PcaLayer::new(Arc::new(random_model(seed, l, p)), p).unwrap();
        let params = ParamVector::new(random_weights(&mut r, p), random_transform(&mut r));
        let coef: Vec<f64> = (0..2 * l).map(|_| r.random_range(-1.0..1.0)).collect();
        let grad_set = LandmarkSet::from_flat(&coef, Frame::Crop);
        let analytic = layer.backward_one(&params, &grad_set).unwrap().to_raw();
        let raw = params.to_raw();
        let eps = 1e-5;
        for k in 0..raw.len() {
            let mut up = raw.clone();
            let mut dn = raw.clone();
            up[k] += eps;
            dn[k] -= eps;
            let fd = (objective(&layer, &up, &coef) - objective(&layer, &dn, &coef)) / (2.0 * eps);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn zero_weights_and_identity_give_the_mean() {
    let model = random_model(3, 10, 6);
    let layer = PcaLayer::new(Arc::new(model.clone()), 6).unwrap();
    let out = layer.forward_one(&ParamVector::new(vec![0.0; 6], GlobalTransform::IDENTITY)).unwrap();
    assert_eq!(out.to_flat(), model.mean_shape);
}

#[test]
fn batch_equals_per_item() {
    let mut r = rng(9);
    let layer = PcaLayer::new(Arc::new(random_model(9, 8, 5)), 5).unwrap();
    let batch: Vec<ParamVector> = (0..8).map(|_| ParamVector::new(random_weights(&mut r, 5), random_transform(&mut r))).collect();
    let out = layer.forward(&batch).unwrap();
    for (b, o) in batch.iter().zip(&out) {
        assert_eq!(&layer.forward_one(b).unwrap(), o);
    }
}

#[test]
fn model_constants_are_untouched_by_forward_and_backward() {
    let model = Arc::new(random_model(4, 6, 4));
    let before = (*model).clone();
    let layer = PcaLayer::new(model.clone(), 4).unwrap();
    let mut r = rng(4);
    for _ in 0..2 {
        let pv = ParamVector::new(random_weights(&mut r, 4), random_transform(&mut r));
        let out = layer.forward_one(&pv).unwrap();
        layer.backward_one(&pv, &out).unwrap();
    }
    assert_eq!(*model, before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transform_equivariance(seed in 0u64..1_000_000) {
        let mut r = rng(seed);
        let layer = PcaLayer::new(Arc::new(random_model(seed % 17, 7, 5)), 5).unwrap();
        let w = random_weights(&mut r, 5);
        let t = random_transform(&mut r);
        let direct = layer.forward_one(&ParamVector::new(w.clone(), t)).unwrap();
        let local = layer.forward_one(&ParamVector::new(w, GlobalTransform::IDENTITY)).unwrap();
        let moved = t.apply_set(&local, Frame::Crop);
        for (a, b) in direct.points.iter().zip(&moved.points) {
            prop_assert!(a.dist(*b) < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn linear_in_weights(seed in 0u64..1_000_000) {
        let mut r = rng(seed);
        let layer = PcaLayer::new(Arc::new(random_model(seed % 13, 6, 4)), 4).unwrap();
        let t = random_transform(&mut r);
        let f = |w: Vec<f64>| layer.forward_one(&ParamVector::new(w, t)).unwrap().to_flat();
        let w1 = random_weights(&mut r, 4);
        let w2 = random_weights(&mut r, 4);
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let (f0, f1, f2, f12) = (f(vec![0.0; 4]), f(w1), f(w2), f(sum));
        for k in 0..f0.len() {
            prop_assert!(((f12[k] - f0[k]) - ((f1[k] - f0[k]) + (f2[k] - f0[k]))).abs() < 1e-9);
        }
    }
}
