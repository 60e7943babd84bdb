//! Training-time augmentation: rotation about the crop center plus optional
//! scale and translation jitter. Landmarks are mapped analytically; only the
//! image is interpolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::Sample;
use crate::error::{Error, Result};
use crate::shape_model::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    /// Relative scale range: factor drawn from `[1 - j, 1 + j]`.
    pub scale_jitter: f64,
    /// Translation range as a fraction of the crop size.
    pub translate_jitter: f64,
    /// How far (pixels) landmarks may leave the crop before rejection.
    pub outside_tolerance: f64,
    pub max_attempts: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 30.0,
            scale_jitter: 0.1,
            translate_jitter: 0.05,
            outside_tolerance: 0.0,
            max_attempts: 10,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            max_rotation_deg: 0.0,
            scale_jitter: 0.0,
            translate_jitter: 0.0,
            ..AugmentConfig::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.max_rotation_deg == 0.0 && self.scale_jitter == 0.0 && self.translate_jitter == 0.0
    }
}

/// One concrete augmentation: `p' = c + scale * R(theta) (p - c) + (tx, ty)`
/// with `c` the crop center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub theta: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AugmentParams {
    pub fn draw(cfg: &AugmentConfig, size: f64, rng: &mut impl Rng) -> Self {
        let sym = |rng: &mut dyn rand::RngCore, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        AugmentParams {
            theta: sym(rng, cfg.max_rotation_deg.to_radians()),
            scale: 1.0 + sym(rng, cfg.scale_jitter),
            tx: sym(rng, cfg.translate_jitter * size),
            ty: sym(rng, cfg.translate_jitter * size),
        }
    }

    fn forward(&self, c: Point, p: Point) -> Point {
        let (s, co) = self.theta.sin_cos();
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        Point::new(
            c.x + self.scale * (co * dx - s * dy) + self.tx,
            c.y + self.scale * (s * dx + co * dy) + self.ty,
        )
    }

    fn inverse(&self, c: Point, q: Point) -> Point {
        let (s, co) = self.theta.sin_cos();
        let (dx, dy) = ((q.x - c.x - self.tx) / self.scale, (q.y - c.y - self.ty) / self.scale);
        Point::new(c.x + co * dx + s * dy, c.y - s * dx + co * dy)
    }
}

/// Applies `params` to the sample. Pixels mapped from outside the source
/// are zero.
pub fn augment_with(sample: &Sample, params: &AugmentParams) -> Sample {
    let img = &sample.image;
    let c = Point::new(img.width as f64 / 2.0, img.height as f64 / 2.0);
    let mut out = Image::new(img.width, img.height, img.channels);
    for ch in 0..img.channels {
        for i in 0..img.height {
            for j in 0..img.width {
                let src = params.inverse(c, Point::new(j as f64 + 0.5, i as f64 + 0.5));
                out.data[(ch * img.height + i) * img.width + j] = img.sample_inside(ch, src.x, src.y).unwrap_or(0.0);
            }
        }
    }
    Sample {
        id: sample.id.clone(),
        image: out,
        landmarks: sample.landmarks.map_points(sample.landmarks.frame, |p| params.forward(c, p)),
        crop: sample.crop.clone(),
    }
}

/// Random augmentation, deterministic in `seed`. Draws that push a landmark
/// outside the crop (beyond the tolerance) are rejected and redrawn up to
/// `max_attempts` times.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, seed: u64) -> Result<Sample> {
    if cfg.is_identity() {
        return Ok(sample.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (sample.image.width as f64, sample.image.height as f64);
    let tol = cfg.outside_tolerance;
    let c = Point::new(w / 2.0, h / 2.0);
    for _ in 0..cfg.max_attempts.max(1) {
        let params = AugmentParams::draw(cfg, w.min(h), &mut rng);
        let inside = sample.landmarks.points.iter().all(|&p| {
            let q = params.forward(c, p);
            q.x >= -tol && q.y >= -tol && q.x <= w + tol && q.y <= h + tol
        });
        if inside {
            return Ok(augment_with(sample, &params));
        }
    }
    Err(Error::AugmentRejected(format!(
        "sample {}: landmarks left the crop in {} attempts",
        sample.id, cfg.max_attempts
    )))
}
