use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// Row-major RGB image with channel values in `[0, 1]`. Row 0 is the top row.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl TextureImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape("image must be non-empty".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::NonFinite(format!("channel value {} at {i} outside [0, 1]", data[i])));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend(f(r, c).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Replaces the values, clamping each into `[0, 1]`.
    pub fn set_clamped(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::Shape(format!("{} values for {} channels", values.len(), self.data.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("texture value {i}")));
        }
        for (d, v) in self.data.iter_mut().zip(values) {
            *d = v.clamp(0.0, 1.0);
        }
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Image(other),
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.pixels().flat_map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
        Self::new(w as usize, h as usize, data)
    }

    /// 8-bit PNG, values rounded to the nearest level.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::blob::ensure_parent(path)?;
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            let c = &self.data[3 * i..3 * i + 3];
            *px = Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]);
        }
        img.save(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
    }

    /// Root-mean-square channel difference.
    pub fn rms_diff(&self, other: &TextureImage) -> f64 {
        let n = self.data.len().max(1) as f64;
        (self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Tiles equally sized images left to right, top to bottom.
pub fn contact_sheet(images: &[TextureImage], columns: usize) -> Result<TextureImage> {
    let first = images.first().ok_or_else(|| Error::Shape("no images for contact sheet".into()))?;
    let (w, h) = (first.width, first.height);
    if images.iter().any(|i| i.width != w || i.height != h) {
        return Err(Error::Shape("contact sheet images differ in size".into()));
    }
    let cols = columns.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    Ok(TextureImage::from_fn(cols * w, rows * h, |r, c| {
        let idx = (r / h) * cols + c / w;
        images.get(idx).map_or([1.0; 3], |img| img.pixel(r % h, c % w))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let img = TextureImage::from_fn(5, 3, |r, c| [r as f64 / 255.0 * 40.0, c as f64 * 51.0 / 255.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        img.save_png(&path).unwrap();
        let back = TextureImage::load_png(&path).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(TextureImage::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(TextureImage::new(1, 1, vec![0.0, 0.5]).is_err());
    }
}
