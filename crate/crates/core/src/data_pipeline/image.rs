use std::path::Path;

use crate::error::{Error, Result};

/// Planar `C x H x W` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates where pixel `(i, j)`
    /// covers `[j, j+1) x [i, i+1)`. Coordinates outside the image clamp to
    /// the border.
    pub fn sample_clamped(&self, c: usize, x: f64, y: f64) -> f32 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        self.bilinear(c, fx, fy)
    }

    /// Like [`Image::sample_clamped`] but returns `None` outside the image.
    pub fn sample_inside(&self, c: usize, x: f64, y: f64) -> Option<f32> {
        if x < 0.0 || y < 0.0 || x > self.width as f64 || y > self.height as f64 {
            return None;
        }
        Some(self.sample_clamped(c, x, y))
    }

    fn bilinear(&self, c: usize, fx: f64, fy: f64) -> f32 {
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = (fx - x0 as f64) as f32;
        let ay = (fy - y0 as f64) as f32;
        let top = self.get(c, x0, y0) * (1.0 - ax) + self.get(c, x1, y0) * ax;
        let bottom = self.get(c, x0, y1) * (1.0 - ax) + self.get(c, x1, y1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Decodes PNG/JPEG (8- or 16-bit) into `channels` planes (1 = luma, 3 = RGB).
pub fn load_image(path: &Path, channels: usize) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Image::new(w, h, channels);
    match channels {
        1 => {
            let luma = img.to_luma32f();
            out.data.copy_from_slice(luma.as_raw());
        }
        3 => {
            let rgb = img.to_rgb32f();
            for (i, px) in rgb.as_raw().chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out.data[c * w * h + i] = px[c];
                }
            }
        }
        n => return Err(Error::Config(format!("unsupported channel count {n}"))),
    }
    out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(out)
}

/// Writes an 8-bit PNG (grayscale or RGB).
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let n = img.width * img.height;
    let (w, h) = (img.width as u32, img.height as u32);
    let buf: Vec<u8> = match img.channels {
        1 => img.data.iter().map(|&v| to_u8(v)).collect(),
        3 => (0..n).flat_map(|i| (0..3).map(move |c| (c, i))).map(|(c, i)| to_u8(img.data[c * n + i])).collect(),
        c => return Err(Error::Config(format!("cannot save {c}-channel image"))),
    };
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    image::save_buffer(path, &buf, w, h, color).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers() {
        let mut img = Image::new(2, 1, 1);
        img.data = vec![0.0, 1.0];
        assert_eq!(img.sample_clamped(0, 0.5, 0.5), 0.0);
        assert_eq!(img.sample_clamped(0, 1.5, 0.5), 1.0);
        assert_eq!(img.sample_clamped(0, 1.0, 0.5), 0.5);
        assert_eq!(img.sample_clamped(0, -3.0, 0.5), 0.0);
        assert!(img.sample_inside(0, 2.5, 0.5).is_none());
    }

    #[test]
    fn png_round_trip_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3] {
            let mut img = Image::new(5, 4, channels);
            for (i, v) in img.data.iter_mut().enumerate() {
                *v = (i % 256) as f32 / 255.0;
            }
            let path = dir.path().join(format!("img{channels}.png"));
            save_png(&img, &path).unwrap();
            let back = load_image(&path, channels).unwrap();
            for (a, b) in back.data.iter().zip(&img.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sixteen_bit_png_is_scaled_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path, 1).unwrap();
        assert_eq!(img.data, vec![0.0, 1.0]);
    }
}
