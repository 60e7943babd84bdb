mod common;

use common::{random_model, rng};
use pdmnet_core::serial::{format_hex_f64, parse_hex_f64};
use pdmnet_core::shape_model::{
    align_corpus, compute_pca, from_container_str, to_container_string, Alignment, Frame, LandmarkSet, Point,
};
use pdmnet_core::synth_data::{generate_shapes, SynthSpec};
use pdmnet_core::Exec;
use proptest::prelude::*;
use rand::Rng;

fn synth_corpus(n: usize, seed: u64) -> (SynthSpec, Vec<LandmarkSet>) {
    let spec = SynthSpec {
        num_samples: n,
        num_landmarks: 12,
        mode_amplitudes: vec![8.0, 6.0, 5.0, 3.0, 2.0],
        image_size: 200,
        radius: 40.0,
        max_translation: 0.0,
        seed,
        ..SynthSpec::default()
    };
    let shapes = generate_shapes(&spec, Exec::Parallel).unwrap();
    (spec, shapes.into_iter().map(|s| s.landmarks).collect())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn anchor_alignment_is_invariant_to_input_rotation() {
    let (spec, corpus) = synth_corpus(200, 1);
    let alignment = spec.anchor_alignment();
    let mut r = rng(11);
    let angle = r.random_range(-3.0..3.0);
    let rotated: Vec<LandmarkSet> = corpus.iter().map(|s| s.rotated_about(s.centroid(), angle)).collect();
    let a = compute_pca(&align_corpus(&corpus, &alignment).unwrap(), 10, alignment.clone(), 200).unwrap();
    let b = compute_pca(&align_corpus(&rotated, &alignment).unwrap(), 10, alignment, 200).unwrap();
    for (x, y) in a.mean_shape.iter().zip(&b.mean_shape) {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
    }
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!(rel(*x, *y) < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn eigenvalues_sum_to_total_variance() {
    let (_, corpus) = synth_corpus(120, 2);
    let aligned = align_corpus(&corpus, &Alignment::procrustes()).unwrap();
    let d = 24;
    let model = compute_pca(&aligned, d, Alignment::procrustes(), 200).unwrap();
    let n = aligned.len() as f64;
    let rows: Vec<Vec<f64>> = aligned.iter().map(LandmarkSet::to_flat).collect();
    let mut total = 0.0;
    for c in 0..d {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        total += rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    }
    let sum: f64 = model.eigenvalues.iter().sum();
    assert!(rel(sum, total) < 1e-8, "{sum} vs {total}");
}

#[test]
fn reconstruction_error_never_grows_with_more_modes() {
    let (spec, corpus) = synth_corpus(150, 3);
    let alignment = spec.anchor_alignment();
    let aligned = align_corpus(&corpus, &alignment).unwrap();
    let full = compute_pca(&aligned, 24, alignment, 200).unwrap();
    let mut last = f64::INFINITY;
    for p in 0..=24 {
        let m = full.truncated(p).unwrap();
        let err: f64 = aligned
            .iter()
            .map(|s| {
                let w = m.project(s).unwrap();
                let rec = m.reconstruct_flat(&w).unwrap();
                rec.iter().zip(s.to_flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        assert!(err <= last * (1.0 + 1e-12) + 1e-12, "p = {p}: {err} > {last}");
        last = err;
    }
    assert!(last < 1e-12 * aligned.len() as f64 * 1e4);
}

#[test]
fn project_then_reconstruct_is_identity_at_full_rank() {
    let model = random_model(5, 9, 18);
    let mut r = rng(5);
    for _ in 0..50 {
        let w: Vec<f64> = (0..18).map(|_| r.random_range(-3.0..3.0)).collect();
        let shape = model.reconstruct(&w).unwrap();
        let back = model.reconstruct(&model.project(&shape).unwrap()).unwrap();
        for (a, b) in shape.points.iter().zip(&back.points) {
            assert!(a.dist(*b) <= 1e-6 * a.dist(Point::new(0.0, 0.0)).max(1.0));
        }
    }
}

#[test]
fn degenerate_and_inconsistent_corpora_are_rejected() {
    let tri = LandmarkSet::from_flat(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0], Frame::Canonical);
    let quad = LandmarkSet::from_flat(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], Frame::Canonical);
    assert!(align_corpus(&[tri.clone(), quad], &Alignment::procrustes()).is_err());
    let overlapping = Alignment::Anchors {
        first: vec![0, 1],
        second: vec![1, 2],
    };
    assert!(align_corpus(&[tri.clone(), tri.clone()], &overlapping).is_err());
    assert!(compute_pca(&[tri.clone(), tri], 3, Alignment::None, 8).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn container_round_trip_is_bit_exact(seed in 0u64..10_000, l in 3usize..10) {
        let p = (seed as usize % (2 * l)) + 1;
        let model = random_model(seed, l, p);
        let text = to_container_string(&model);
        let back = from_container_str(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(to_container_string(&back), text);
    }

    #[test]
    fn hex_floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(parse_hex_f64(&format_hex_f64(v)).unwrap().to_bits(), bits);
    }
}
