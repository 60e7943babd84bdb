use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};
use crate::shape_model::{Frame, LandmarkSet, Point};

/// Default crop boundary, as a fraction of the landmark extent per side.
pub const DEFAULT_MARGIN: f64 = 0.2;
pub const DEFAULT_CROP_SIZE: usize = 224;

/// Axis-aligned mapping between source-image pixels and the resized crop:
/// `crop = (orig - origin) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub source_id: String,
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
    pub out_width: usize,
    pub out_height: usize,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl CropRecord {
    pub fn new(source_id: impl Into<String>, x0: f64, y0: f64, width: f64, height: f64, out: (usize, usize)) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::DegenerateExtent(format!("crop box {width}x{height} is empty")));
        }
        Ok(CropRecord {
            source_id: source_id.into(),
            x0,
            y0,
            width,
            height,
            out_width: out.0,
            out_height: out.1,
            scale_x: out.0 as f64 / width,
            scale_y: out.1 as f64 / height,
        })
    }

    /// The whole `width x height` image, unscaled.
    pub fn identity(source_id: impl Into<String>, width: usize, height: usize) -> Self {
        CropRecord::new(source_id, 0.0, 0.0, width as f64, height as f64, (width, height)).expect("positive extent")
    }

    pub fn to_crop(&self, p: Point) -> Point {
        Point::new((p.x - self.x0) * self.scale_x, (p.y - self.y0) * self.scale_y)
    }

    pub fn to_original(&self, p: Point) -> Point {
        Point::new(p.x / self.scale_x + self.x0, p.y / self.scale_y + self.y0)
    }

    pub fn landmarks_to_crop(&self, set: &LandmarkSet) -> LandmarkSet {
        set.map_points(Frame::Crop, |p| self.to_crop(p))
    }

    pub fn center(&self) -> Point {
        Point::new(self.out_width as f64 / 2.0, self.out_height as f64 / 2.0)
    }
}

/// Exact inverse of the crop mapping.
pub fn landmarks_to_original(crop: &CropRecord, landmarks: &LandmarkSet) -> LandmarkSet {
    landmarks.map_points(Frame::Original, |p| crop.to_original(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropOptions {
    /// Boundary added on each side, as a fraction of the landmark width/height.
    pub margin: f64,
    pub out_size: usize,
    /// Accept landmarks that fall outside the source image.
    pub allow_outside: bool,
}

impl Default for CropOptions {
    fn default() -> Self {
        CropOptions {
            margin: DEFAULT_MARGIN,
            out_size: DEFAULT_CROP_SIZE,
            allow_outside: true,
        }
    }
}

/// Crop box around `landmarks` expanded by the margin and clipped to the
/// image.
pub fn crop_box(image: &Image, landmarks: &LandmarkSet, opts: &CropOptions) -> Result<(f64, f64, f64, f64)> {
    let b = landmarks.bounding_box();
    if !(b.width > 0.0 && b.height > 0.0) {
        return Err(Error::DegenerateExtent(format!(
            "landmark bounding box {}x{} has zero extent",
            b.width, b.height
        )));
    }
    let (w, h) = (image.width as f64, image.height as f64);
    if !opts.allow_outside && (b.x0 < 0.0 || b.y0 < 0.0 || b.x0 + b.width > w || b.y0 + b.height > h) {
        return Err(Error::Shape("landmarks extend outside the image".into()));
    }
    let x0 = (b.x0 - opts.margin * b.width).max(0.0);
    let y0 = (b.y0 - opts.margin * b.height).max(0.0);
    let x1 = (b.x0 + b.width * (1.0 + opts.margin)).min(w);
    let y1 = (b.y0 + b.height * (1.0 + opts.margin)).min(h);
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::DegenerateExtent("crop box lies outside the image".into()));
    }
    Ok((x0, y0, x1 - x0, y1 - y0))
}

/// Bilinear resample of the crop box into an `out_size` square; aspect ratio
/// is not preserved.
pub fn crop_and_resize(
    source_id: &str,
    image: &Image,
    landmarks: &LandmarkSet,
    opts: &CropOptions,
) -> Result<(Image, LandmarkSet, CropRecord)> {
    let (x0, y0, bw, bh) = crop_box(image, landmarks, opts)?;
    let crop = CropRecord::new(source_id, x0, y0, bw, bh, (opts.out_size, opts.out_size))?;
    let mut out = Image::new(opts.out_size, opts.out_size, image.channels);
    for c in 0..image.channels {
        let plane = out.plane_mut(c);
        for i in 0..opts.out_size {
            for j in 0..opts.out_size {
                let src = crop.to_original(Point::new(j as f64 + 0.5, i as f64 + 0.5));
                plane[i * opts.out_size + j] = image.sample_clamped(c, src.x, src.y);
            }
        }
    }
    let mapped = crop.landmarks_to_crop(landmarks);
    Ok((out, mapped, crop))
}
