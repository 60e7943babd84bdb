//! Synthetic landmark corpora with known generative structure.
//!
//! Every sample is a regular L-gon deformed along `k` fixed orthonormal
//! modes (weights drawn from `N(0, amplitude^2)`), moved by a random
//! similarity transform and rendered as a shaded polygon on a textured
//! background, with a small dark dot on every vertex. The fill shading
//! follows the shape's own orientation, so rotation is recoverable from the
//! image even for symmetric polygons.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data_pipeline::{
    crop_and_resize, save_png, write_csv_landmarks, write_manifest, Annotation, CropOptions, CropRecord, CsvSchema, Image,
    Manifest, ManifestEntry, Sample, Split,
};
use crate::error::{Error, Result};
use crate::eval_metrics::normalized_p2p_error;
use crate::exec::{derive_seed, Exec};
use crate::pca_layer::GlobalTransform;
use crate::shape_model::{Alignment, Frame, LandmarkSet, ModeScaling, Point, ShapeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_samples: usize,
    pub num_landmarks: usize,
    /// Standard deviation (pixels, along the unit mode vector) of each mode;
    /// its length is the mode count.
    pub mode_amplitudes: Vec<f64>,
    /// Isotropic Gaussian jitter added to the stored landmarks (pixels).
    pub landmark_noise: f64,
    /// Gaussian intensity noise added to the rendered image.
    pub pixel_noise: f64,
    /// Side length of the square canvas.
    pub image_size: usize,
    /// Circumradius of the base polygon (pixels).
    pub radius: f64,
    pub scale_range: (f64, f64),
    pub max_rotation_deg: f64,
    /// Maximum offset of the shape center from the canvas center (pixels).
    pub max_translation: f64,
    pub channels: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_samples: 2000,
            num_landmarks: 16,
            mode_amplitudes: vec![10.0; 10],
            landmark_noise: 0.0,
            pixel_noise: 0.02,
            image_size: 160,
            radius: 40.0,
            scale_range: (0.85, 1.15),
            max_rotation_deg: 30.0,
            max_translation: 10.0,
            channels: 1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn num_modes(&self) -> usize {
        self.mode_amplitudes.len()
    }

    /// Four dimensions of the landmark space are taken by the similarity
    /// directions of the base polygon, so at most `2L - 4` modes exist.
    pub fn validate(&self) -> Result<()> {
        let l = self.num_landmarks;
        if l < LandmarkSet::MIN_POINTS {
            return Err(Error::Config(format!("need at least {} landmarks", LandmarkSet::MIN_POINTS)));
        }
        if self.num_modes() > 2 * l - 4 {
            return Err(Error::Config(format!(
                "{} modes requested, at most 2L - 4 = {} are available",
                self.num_modes(),
                2 * l - 4
            )));
        }
        if self.mode_amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config("mode amplitudes must be finite and non-negative".into()));
        }
        if self.image_size == 0 || !(self.radius > 0.0) || !(self.scale_range.0 <= self.scale_range.1) {
            return Err(Error::Config("invalid canvas, radius or scale range".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("unsupported channel count {}", self.channels)));
        }
        Ok(())
    }

    /// Landmark groups on the left and right of the base polygon, for
    /// anchor alignment.
    /// The generating model without generating any samples.
    pub fn true_model(&self) -> Result<ShapeModel> {
        self.validate()?;
        let modes = generate_modes(self.num_landmarks, self.num_modes(), self.seed);
        Ok(self.true_model_with(regular_polygon(self.num_landmarks, self.radius), &modes))
    }

    fn true_model_with(&self, base_shape: Vec<f64>, modes: &[f64]) -> ShapeModel {
        let d = 2 * self.num_landmarks;
        let amps = &self.mode_amplitudes;
        let eigenvectors = modes
            .chunks_exact(d)
            .zip(amps)
            .flat_map(|(m, a)| m.iter().map(move |v| v * a))
            .collect();
        ShapeModel {
            num_landmarks: self.num_landmarks,
            mean_shape: base_shape,
            eigenvectors,
            eigenvalues: amps.iter().map(|a| a * a).collect(),
            scaling: ModeScaling::SqrtEigenvalue,
            alignment: Alignment::None,
            crop_size: self.image_size as u32,
            corpus_meta: format!("synthetic generator, seed {}", self.seed),
        }
    }

    pub fn anchor_alignment(&self) -> Alignment {
        let l = self.num_landmarks;
        let around = |c: usize| -> Vec<usize> {
            if l >= 8 {
                vec![(c + l - 1) % l, c % l, (c + 1) % l]
            } else {
                vec![c % l]
            }
        };
        Alignment::Anchors {
            first: around(l / 2),
            second: around(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub image: Image,
    /// Canvas pixels.
    pub landmarks: LandmarkSet,
    /// True shape weights in standard-deviation units.
    pub weights: Vec<f64>,
    /// True transform from the canonical frame (origin at the shape center)
    /// to the canvas.
    pub transform: GlobalTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    /// Base polygon, centered on the origin, interleaved.
    pub base_shape: Vec<f64>,
    /// Unit-norm mode vectors, row-major `k x 2L`.
    pub modes: Vec<f64>,
    pub samples: Vec<SynthSample>,
}

fn regular_polygon(l: usize, radius: f64) -> Vec<f64> {
    (0..l)
        .flat_map(|i| {
            let a = TAU * i as f64 / l as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes `v` against `basis`; `None` if nothing is left.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..2 {
        for b in basis {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let n = dot(&v, &v).sqrt();
    (n > 1e-8).then(|| v.into_iter().map(|x| x / n).collect())
}

/// `k` orthonormal, smooth deformation modes of the regular L-gon, all
/// orthogonal to its translations, rotation and scaling, mixed by `seed`.
pub fn generate_modes(num_landmarks: usize, k: usize, seed: u64) -> Vec<f64> {
    let l = num_landmarks;
    let d = 2 * l;
    let base = regular_polygon(l, 1.0);
    let mut similarity = Vec::new();
    let tx: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let ty: Vec<f64> = (0..d).map(|i| if i % 2 == 1 { 1.0 } else { 0.0 }).collect();
    let rot: Vec<f64> = base.chunks_exact(2).flat_map(|c| [-c[1], c[0]]).collect();
    for v in [tx, ty, base.clone(), rot] {
        if let Some(u) = orthonormalize(v, &similarity) {
            similarity.push(u);
        }
    }

    // Low-frequency radial/tangential fields, then random fill.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for j in 1..=l / 2 {
        for (radial, phase) in [(true, 0.0), (true, 0.25), (false, 0.0), (false, 0.25)] {
            let field: Vec<f64> = (0..l)
                .flat_map(|i| {
                    let a = TAU * i as f64 / l as f64;
                    let amp = (j as f64 * a + phase * TAU).cos();
                    let (ux, uy) = if radial { (a.cos(), a.sin()) } else { (-a.sin(), a.cos()) };
                    [amp * ux, amp * uy]
                })
                .collect();
            candidates.push(field);
        }
    }
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut all = similarity.clone();
    let want = (k + 4).min(d - similarity.len());
    let push = |v: Vec<f64>, pool: &mut Vec<Vec<f64>>, all: &mut Vec<Vec<f64>>| {
        if pool.len() < want {
            if let Some(u) = orthonormalize(v, all) {
                all.push(u.clone());
                pool.push(u);
            }
        }
    };
    for c in candidates {
        push(c, &mut pool, &mut all);
    }
    while pool.len() < want {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        push(v, &mut pool, &mut all);
    }

    // Random orthonormal combinations of the pool.
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(k);
    while modes.len() < k {
        let mut v = vec![0.0; d];
        for b in &pool {
            let c: f64 = StandardNormal.sample(&mut rng);
            v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        if let Some(u) = orthonormalize(v, &modes) {
            modes.push(u);
        }
    }
    modes.concat()
}

impl SynthDataset {
    /// The generating model: base polygon as mean, `amplitude * mode` as the
    /// scaled eigenvectors.
    pub fn true_model(&self) -> ShapeModel {
        self.spec.true_model_with(self.base_shape.clone(), &self.modes)
    }

    /// Untransformed local shapes (canonical frame, no noise).
    pub fn local_shapes(&self) -> Vec<LandmarkSet> {
        let model = self.true_model();
        self.samples
            .iter()
            .map(|s| model.reconstruct(&s.weights).expect("weights match modes"))
            .collect()
    }

    /// Samples with the whole canvas as the crop.
    pub fn canvas_samples(&self) -> Vec<Sample> {
        self.samples
            .iter()
            .map(|s| Sample {
                id: s.id.clone(),
                image: s.image.clone(),
                landmarks: LandmarkSet {
                    points: s.landmarks.points.clone(),
                    frame: Frame::Crop,
                },
                crop: CropRecord::identity(&s.id, s.image.width, s.image.height),
            })
            .collect()
    }

    /// Samples cropped around their landmarks exactly as files on disk would
    /// be by the manifest loader.
    pub fn cropped_samples(&self, opts: &CropOptions, exec: Exec) -> Result<Vec<Sample>> {
        exec.map(self.samples.len(), |i| {
            let s = &self.samples[i];
            let (image, landmarks, crop) = crop_and_resize(&s.id, &s.image, &s.landmarks, opts)?;
            Ok(Sample {
                id: s.id.clone(),
                image,
                landmarks,
                crop,
            })
        })
        .into_iter()
        .collect()
    }

    /// Writes `images/*.png`, `landmarks.csv`, `manifest.txt` and
    /// `generator.json` under `dir`. The last `test_fraction` of the samples
    /// form the test split.
    pub fn write(&self, dir: &Path, test_fraction: f64) -> Result<()> {
        let n = self.samples.len();
        let n_test = ((n as f64) * test_fraction).round() as usize;
        let csv_path = dir.join("landmarks.csv");
        let mut entries = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (i, s) in self.samples.iter().enumerate() {
            let image_path = dir.join("images").join(format!("{}.png", s.id));
            save_png(&s.image, &image_path)?;
            rows.push((s.id.clone(), s.landmarks.clone()));
            entries.push(ManifestEntry {
                split: if i >= n - n_test { Split::Test } else { Split::Train },
                image: image_path,
                annotation: Annotation::CsvRow {
                    path: csv_path.clone(),
                    id: s.id.clone(),
                },
            });
        }
        crate::write_atomic(&csv_path, write_csv_landmarks(&rows, &CsvSchema::default())?.as_bytes())?;
        let manifest = write_manifest(&Manifest { entries }, dir);
        crate::write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())?;
        let meta = serde_json::json!({
            "spec": self.spec,
            "anchors": self.spec.anchor_alignment(),
            "base_shape": crate::serial::hex_array(&self.base_shape),
            "modes": crate::serial::hex_array(&self.modes),
            "samples": self.samples.iter().map(|s| serde_json::json!({
                "id": s.id,
                "weights": s.weights,
                "transform": s.transform,
            })).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&meta).expect("json") + "\n";
        crate::write_atomic(&dir.join("generator.json"), text.as_bytes())
    }
}

/// Draws the whole dataset; each sample uses its own seed stream, so the
/// result does not depend on `exec`.
pub fn generate_dataset(spec: &SynthSpec, exec: Exec) -> Result<SynthDataset> {
    spec.validate()?;
    let base = regular_polygon(spec.num_landmarks, spec.radius);
    let modes = generate_modes(spec.num_landmarks, spec.num_modes(), spec.seed);
    let samples = exec
        .map(spec.num_samples, |i| generate_sample(spec, &base, &modes, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        spec: spec.clone(),
        base_shape: base,
        modes,
        samples,
    })
}

const MAX_REDRAWS: usize = 100;

/// Geometry of one sample, without the rendered image.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthShape {
    /// Canvas pixels, including landmark noise.
    pub landmarks: LandmarkSet,
    pub weights: Vec<f64>,
    pub transform: GlobalTransform,
}

/// Draws only the annotations of every sample. Identical to the geometry
/// of [`generate_dataset`] with the same spec, at a fraction of the cost.
pub fn generate_shapes(spec: &SynthSpec, exec: Exec) -> Result<Vec<SynthShape>> {
    spec.validate()?;
    let base = regular_polygon(spec.num_landmarks, spec.radius);
    let modes = generate_modes(spec.num_landmarks, spec.num_modes(), spec.seed);
    exec.map(spec.num_samples, |i| {
        let mut rng = sample_rng(spec, i);
        draw_shape(spec, &base, &modes, i, &mut rng).map(|(shape, _)| shape)
    })
    .into_iter()
    .collect()
}

fn sample_rng(spec: &SynthSpec, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index as u64))
}

/// Returns the shape and its noise-free outline for rendering.
fn draw_shape(spec: &SynthSpec, base: &[f64], modes: &[f64], index: usize, rng: &mut ChaCha8Rng) -> Result<(SynthShape, LandmarkSet)> {
    let d = base.len();
    let size = spec.image_size as f64;
    let center = size / 2.0;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    for _ in 0..MAX_REDRAWS {
        let weights: Vec<f64> = (0..spec.num_modes()).map(|_| normal(rng)).collect();
        let mut local = base.to_vec();
        for (k, w) in weights.iter().enumerate() {
            let a = spec.mode_amplitudes[k] * w;
            for (x, m) in local.iter_mut().zip(&modes[k * d..(k + 1) * d]) {
                *x += a * m;
            }
        }
        let sym = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let (s0, s1) = spec.scale_range;
        let scale = if s1 > s0 { rng.random_range(s0..=s1) } else { s0 };
        let theta = sym(rng, spec.max_rotation_deg.to_radians());
        let tx = center + sym(rng, spec.max_translation);
        let ty = center + sym(rng, spec.max_translation);
        let transform = GlobalTransform::new(scale, theta, tx, ty);
        let outline = transform.apply_set(&LandmarkSet::from_flat(&local, Frame::Canonical), Frame::Original);
        let mut landmarks = outline.clone();
        if spec.landmark_noise > 0.0 {
            for p in &mut landmarks.points {
                p.x += spec.landmark_noise * normal(rng);
                p.y += spec.landmark_noise * normal(rng);
            }
        }
        let inside = landmarks.points.iter().all(|p| p.x >= 1.0 && p.y >= 1.0 && p.x <= size - 1.0 && p.y <= size - 1.0);
        if inside {
            let shape = SynthShape {
                landmarks,
                weights,
                transform,
            };
            return Ok((shape, outline));
        }
    }
    Err(Error::Config(format!(
        "sample {index}: shape left the canvas in {MAX_REDRAWS} draws; reduce amplitudes or transform ranges"
    )))
}

fn generate_sample(spec: &SynthSpec, base: &[f64], modes: &[f64], index: usize) -> Result<SynthSample> {
    let mut rng = sample_rng(spec, index);
    let (shape, outline) = draw_shape(spec, base, modes, index, &mut rng)?;
    let image = render(spec, &outline, &shape.transform, &mut rng);
    Ok(SynthSample {
        id: format!("synth{index:06}"),
        image,
        landmarks: shape.landmarks,
        weights: shape.weights,
        transform: shape.transform,
    })
}

/// Signed distance to the polygon boundary: negative inside.
fn signed_distance(poly: &[Point], p: Point) -> f64 {
    let mut inside = false;
    let mut best = f64::INFINITY;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 { (((p.x - a.x) * ex + (p.y - a.y) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min(p.dist(Point::new(a.x + t * ex, a.y + t * ey)));
    }
    if inside {
        -best
    } else {
        best
    }
}

/// Width (pixels) of the dark dot drawn on every vertex.
const MARKER_SIGMA: f64 = 1.2;

fn render(spec: &SynthSpec, shape: &LandmarkSet, transform: &GlobalTransform, rng: &mut ChaCha8Rng) -> Image {
    let n = spec.image_size;
    let mut img = Image::new(n, n, spec.channels);
    let phase: (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let freq = TAU / (n as f64 / 6.0);
    let (sin, cos) = transform.theta.sin_cos();
    let reach = spec.radius * transform.scale.abs().max(1e-6);
    let poly = &shape.points;
    let noise = spec.pixel_noise;
    for i in 0..n {
        for j in 0..n {
            let p = Point::new(j as f64 + 0.5, i as f64 + 0.5);
            let background = 0.15 + 0.05 * (freq * p.x + phase.0).sin() * (freq * p.y + phase.1).cos();
            let sd = signed_distance(poly, p);
            // shape-aligned shading: brighter towards the local +x side
            let (dx, dy) = (p.x - transform.tx, p.y - transform.ty);
            let u = (cos * dx + sin * dy) / reach;
            let fill = (0.6 + 0.25 * u).clamp(0.3, 0.9);
            let edge = 0.25 * (-(sd.abs()) / 1.5).exp();
            let coverage = 1.0 / (1.0 + (sd / 0.5).exp());
            let near = poly.iter().map(|v| (v.x - p.x).powi(2) + (v.y - p.y).powi(2)).fold(f64::INFINITY, f64::min);
            let marker = 1.0 - 0.7 * (-near / (2.0 * MARKER_SIGMA * MARKER_SIGMA)).exp();
            let base = (background * (1.0 - coverage) + fill * coverage + edge) * marker;
            for c in 0..spec.channels {
                let tint = if spec.channels == 3 { 0.9 + 0.1 * c as f64 } else { 1.0 };
                let eps: f64 = if noise > 0.0 { { let z: f64 = StandardNormal.sample(&mut *rng); noise * z } } else { 0.0 };
                img.data[(c * n + i) * n + j] = (base * tint + eps).clamp(0.0, 1.0) as f32;
            }
        }
    }
    img
}

/// Mean normalized error of the corpus-mean predictor placed by a
/// translation-only least-squares fit (centroid matching) on each set.
pub fn baseline_mean_shape_error(sets: &[LandmarkSet]) -> Result<f64> {
    let Some(first) = sets.first() else {
        return Err(Error::EmptyDataset("baseline needs at least one landmark set".into()));
    };
    let d = 2 * first.len();
    let mut mean = vec![0.0; d];
    for s in sets {
        if s.len() != first.len() {
            return Err(Error::CorpusConsistency("landmark counts differ".into()));
        }
        for (m, v) in mean.iter_mut().zip(s.to_flat()) {
            *m += v / sets.len() as f64;
        }
    }
    let mean = LandmarkSet::from_flat(&mean, first.frame);
    let mc = mean.centroid();
    let mut total = 0.0;
    for s in sets {
        let c = s.centroid();
        let placed = mean.map_points(s.frame, |p| Point::new(p.x - mc.x + c.x, p.y - mc.y + c.y));
        total += normalized_p2p_error(&placed, s)?;
    }
    Ok(total / sets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca_layer::{ParamVector, PcaLayer};
    use std::sync::Arc;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_samples: 12,
            num_landmarks: 12,
            mode_amplitudes: vec![6.0, 4.0, 2.0],
            image_size: 64,
            radius: 16.0,
            max_translation: 4.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn modes_are_orthonormal_and_free_of_similarity_motion() {
        let l = 12;
        let m = generate_modes(l, 8, 3);
        let d = 2 * l;
        let base = regular_polygon(l, 1.0);
        let rot: Vec<f64> = base.chunks_exact(2).flat_map(|c| [-c[1], c[0]]).collect();
        for i in 0..8 {
            for j in 0..8 {
                let v = dot(&m[i * d..(i + 1) * d], &m[j * d..(j + 1) * d]);
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            let mi = &m[i * d..(i + 1) * d];
            assert!(dot(mi, &base).abs() < 1e-10);
            assert!(dot(mi, &rot).abs() < 1e-10);
            assert!(mi.iter().step_by(2).sum::<f64>().abs() < 1e-10);
        }
        assert_eq!(generate_modes(l, 8, 3), m);
        assert_ne!(generate_modes(l, 8, 4), m);
    }

    #[test]
    fn zero_amplitude_identity_transform_gives_base_polygon() {
        let spec = SynthSpec {
            mode_amplitudes: vec![0.0; 3],
            scale_range: (1.0, 1.0),
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            ..small_spec()
        };
        let ds = generate_dataset(&spec, Exec::Sequential).unwrap();
        let c = spec.image_size as f64 / 2.0;
        for s in &ds.samples {
            for (p, b) in s.landmarks.points.iter().zip(ds.base_shape.chunks_exact(2)) {
                assert!(p.dist(Point::new(b[0] + c, b[1] + c)) < 1e-12);
            }
        }
        let sets: Vec<LandmarkSet> = ds.samples.iter().map(|s| s.landmarks.clone()).collect();
        assert!(baseline_mean_shape_error(&sets).unwrap() < 1e-12);
    }

    #[test]
    fn opposite_weights_mirror_about_the_mean() {
        let ds = generate_dataset(&small_spec(), Exec::Sequential).unwrap();
        let model = ds.true_model();
        let plus = model.reconstruct(&[1.5]).unwrap().to_flat();
        let minus = model.reconstruct(&[-1.5]).unwrap().to_flat();
        for ((a, b), m) in plus.iter().zip(&minus).zip(&model.mean_shape) {
            assert!((a + b - 2.0 * m).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_independent_of_execution() {
        let a = generate_dataset(&small_spec(), Exec::Sequential).unwrap();
        let b = generate_dataset(&small_spec(), Exec::Parallel).unwrap();
        assert_eq!(a, b);
        for s in &a.samples {
            assert!(s.image.in_unit_range());
        }
    }

    #[test]
    fn stored_landmarks_match_the_true_model() {
        let ds = generate_dataset(&small_spec(), Exec::Sequential).unwrap();
        let layer = PcaLayer::new(Arc::new(ds.true_model()), 3).unwrap();
        for s in &ds.samples {
            let out = layer.forward_one(&ParamVector::new(s.weights.clone(), s.transform)).unwrap();
            for (p, q) in out.points.iter().zip(&s.landmarks.points) {
                assert!(p.dist(*q) < 1e-9);
            }
        }
    }

    #[test]
    fn render_encodes_the_shape() {
        let ds = generate_dataset(&small_spec(), Exec::Sequential).unwrap();
        let s = &ds.samples[0];
        let c = s.landmarks.centroid();
        let inside = s.image.get(0, c.x as usize, c.y as usize);
        let corner = s.image.get(0, 0, 0);
        assert!(inside > corner + 0.2, "inside {inside} corner {corner}");
    }

    #[test]
    fn baseline_grows_with_amplitude() {
        let spec = SynthSpec {
            scale_range: (1.0, 1.0),
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            num_samples: 40,
            ..small_spec()
        };
        let sets = |amp: f64| {
            let spec = SynthSpec {
                mode_amplitudes: spec.mode_amplitudes.iter().map(|a| a * amp).collect(),
                ..spec.clone()
            };
            let ds = generate_dataset(&spec, Exec::Sequential).unwrap();
            ds.samples.iter().map(|s| s.landmarks.clone()).collect::<Vec<_>>()
        };
        let e1 = baseline_mean_shape_error(&sets(1.0)).unwrap();
        let e2 = baseline_mean_shape_error(&sets(2.0)).unwrap();
        assert!(e2 > e1 && e1 > 0.0);
        assert!(baseline_mean_shape_error(&[]).is_err());
    }

    #[test]
    fn shapes_match_full_generation() {
        let spec = SynthSpec {
            landmark_noise: 0.5,
            ..small_spec()
        };
        let ds = generate_dataset(&spec, Exec::Sequential).unwrap();
        let shapes = generate_shapes(&spec, Exec::Parallel).unwrap();
        for (a, b) in ds.samples.iter().zip(&shapes) {
            assert_eq!(a.landmarks, b.landmarks);
            assert_eq!(a.weights, b.weights);
        }
    }

    #[test]
    fn rejects_too_many_modes() {
        let spec = SynthSpec {
            num_landmarks: 4,
            mode_amplitudes: vec![1.0; 5],
            ..small_spec()
        };
        assert!(generate_dataset(&spec, Exec::Sequential).is_err());
    }
}
