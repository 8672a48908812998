//! Hypercolumn features. The built-in extractor is a fixed filter bank over an
//! image pyramid: per level the RGB values, two Gaussian blurs of them and four
//! oriented luminance derivatives, bilinearly upsampled to the input size.
//! Every stage is linear in the image, so the backward pass needs no forward
//! state.

use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};
use crate::render::TextureImage;
use crate::seed::Rng;

/// Channels produced per pyramid level.
pub const LEVEL_CHANNELS: usize = 13;
pub const MIN_SAMPLE_BUDGET: usize = 64;
const BLUR_SIGMAS: [f64; 2] = [1.0, 2.0];
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
const ANGLES_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Feature vectors at sampled pixels, row-major `k x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    vectors: Vec<f64>,
    k: usize,
    d: usize,
    /// `(row, col)` of each sample.
    pixels: Vec<[usize; 2]>,
    /// Source image `(width, height)`.
    image_size: (usize, usize),
}

impl FeatureStack {
    pub fn new(vectors: Vec<f64>, d: usize, pixels: Vec<[usize; 2]>, image_size: (usize, usize)) -> Result<Self> {
        let k = pixels.len();
        if k == 0 || d == 0 {
            return Err(Error::Shape("feature stack needs k >= 1 and d >= 1".into()));
        }
        if vectors.len() != k * d {
            return Err(Error::Shape(format!("{} values for {k} x {d} features", vectors.len())));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature value".into()));
        }
        Ok(Self {
            vectors,
            k,
            d,
            pixels,
            image_size,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn pixels(&self) -> &[[usize; 2]] {
        &self.pixels
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    pub fn save(&self, manifest: &Path) -> Result<()> {
        let h = FeatureHeader {
            format: "feature-stack".into(),
            version: 1,
            k: self.k,
            d: self.d,
            width: self.image_size.0,
            height: self.image_size.1,
            pixels: self.pixels.clone(),
            blob: blob::blob_file_name(manifest),
        };
        blob::write_json(manifest, &h)?;
        blob::write_f64s(&blob::blob_path(manifest), &self.vectors)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let h: FeatureHeader = blob::read_json(manifest)?;
        if h.format != "feature-stack" || h.pixels.len() != h.k {
            return Err(Error::Format(format!("{}: not a consistent feature-stack header", manifest.display())));
        }
        let data = blob::read_f64s(&blob::resolve_sibling(manifest, &h.blob), h.k * h.d)?;
        Self::new(data, h.d, h.pixels, (h.width, h.height))
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    format: String,
    version: u32,
    k: usize,
    d: usize,
    width: usize,
    height: usize,
    pixels: Vec<[usize; 2]>,
    blob: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorMode {
    Builtin,
    /// Style features read from a saved stack; rendered views still use the
    /// built-in bank.
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSpec {
    pub mode: ExtractorMode,
    pub levels: usize,
    pub k_max: usize,
    pub seed: u64,
    pub external_features: Option<PathBuf>,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            mode: ExtractorMode::Builtin,
            levels: 3,
            k_max: 1024,
            seed: 0,
            external_features: None,
        }
    }
}

impl ExtractorSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.k_max < MIN_SAMPLE_BUDGET {
            v.push(format!("extractor.k_max must be >= {MIN_SAMPLE_BUDGET}, got {}", self.k_max));
        }
        if self.levels == 0 {
            v.push("extractor.levels must be >= 1".into());
        }
        if self.mode == ExtractorMode::External && self.external_features.is_none() {
            v.push("extractor.external_features is required in external mode".into());
        }
        v
    }

    pub fn filter_bank(&self) -> FilterBank {
        FilterBank::new(self.levels)
    }
}

/// Source of per-pixel features with an adjoint for backpropagation.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;

    fn extract(&self, image: &TextureImage, pixels: &[[usize; 2]]) -> Result<FeatureStack>;

    /// Image gradient (interleaved RGB) given the gradient of every feature value.
    fn backward(&self, image: &TextureImage, pixels: &[[usize; 2]], grad: &[f64]) -> Result<Vec<f64>>;
}

/// `min(pixels, k_max)` distinct pixels drawn uniformly, in raster order.
pub fn sample_pixels(width: usize, height: usize, k_max: usize, rng: &mut Rng) -> Vec<[usize; 2]> {
    let n = width * height;
    let mut idx = index::sample(rng, n, k_max.min(n)).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| [i / width, i % width]).collect()
}

/// Channel-major planes.
#[derive(Clone, Debug)]
struct Planes {
    w: usize,
    h: usize,
    c: usize,
    data: Vec<f64>,
}

impl Planes {
    fn zeros(w: usize, h: usize, c: usize) -> Self {
        Self {
            w,
            h,
            c,
            data: vec![0.0; w * h * c],
        }
    }

    fn plane(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.w * self.h..(ch + 1) * self.w * self.h]
    }

    fn plane_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.w * self.h;
        &mut self.data[ch * n..(ch + 1) * n]
    }

    fn from_image(img: &TextureImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut p = Self::zeros(w, h, 3);
        for (i, px) in img.data().chunks(3).enumerate() {
            for ch in 0..3 {
                p.data[ch * w * h + i] = px[ch];
            }
        }
        p
    }

    fn to_interleaved(&self) -> Vec<f64> {
        let n = self.w * self.h;
        let mut out = vec![0.0; 3 * n];
        for i in 0..n {
            for ch in 0..3 {
                out[3 * i + ch] = self.data[ch * n + i];
            }
        }
        out
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn clamp_idx(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Clamp-to-edge 1D convolution along rows (`horizontal`) or columns.
fn convolve(src: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool, dst: &mut [f64]) {
    let r = (kernel.len() / 2) as i64;
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (t, kv) in kernel.iter().enumerate() {
                let off = t as i64 - r;
                let (rr, cc) = if horizontal {
                    (row, clamp_idx(col as i64 + off, w))
                } else {
                    (clamp_idx(row as i64 + off, h), col)
                };
                acc += kv * src[rr * w + cc];
            }
            dst[row * w + col] += acc;
        }
    }
}

/// Transpose of [`convolve`].
fn convolve_adjoint(grad_out: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool, grad_in: &mut [f64]) {
    let r = (kernel.len() / 2) as i64;
    for row in 0..h {
        for col in 0..w {
            let g = grad_out[row * w + col];
            if g == 0.0 {
                continue;
            }
            for (t, kv) in kernel.iter().enumerate() {
                let off = t as i64 - r;
                let (rr, cc) = if horizontal {
                    (row, clamp_idx(col as i64 + off, w))
                } else {
                    (clamp_idx(row as i64 + off, h), col)
                };
                grad_in[rr * w + cc] += kv * g;
            }
        }
    }
}

/// 2x box downsample; odd trailing rows and columns repeat the edge.
fn downsample(p: &Planes) -> Planes {
    let (w, h) = (p.w.div_ceil(2), p.h.div_ceil(2));
    let mut out = Planes::zeros(w, h, p.c);
    for ch in 0..p.c {
        let src = p.plane(ch);
        let dst = out.plane_mut(ch);
        for r in 0..h {
            for c in 0..w {
                let (r0, r1) = (2 * r, (2 * r + 1).min(p.h - 1));
                let (c0, c1) = (2 * c, (2 * c + 1).min(p.w - 1));
                dst[r * w + c] =
                    0.25 * (src[r0 * p.w + c0] + src[r0 * p.w + c1] + src[r1 * p.w + c0] + src[r1 * p.w + c1]);
            }
        }
    }
    out
}

fn downsample_adjoint(grad: &Planes, fine_w: usize, fine_h: usize) -> Planes {
    let mut out = Planes::zeros(fine_w, fine_h, grad.c);
    for ch in 0..grad.c {
        let g = grad.plane(ch);
        let dst = out.plane_mut(ch);
        for r in 0..grad.h {
            for c in 0..grad.w {
                let v = 0.25 * g[r * grad.w + c];
                let (r0, r1) = (2 * r, (2 * r + 1).min(fine_h - 1));
                let (c0, c1) = (2 * c, (2 * c + 1).min(fine_w - 1));
                dst[r0 * fine_w + c0] += v;
                dst[r0 * fine_w + c1] += v;
                dst[r1 * fine_w + c0] += v;
                dst[r1 * fine_w + c1] += v;
            }
        }
    }
    out
}

/// Bilinear weights of coarse-grid texels for full-resolution pixel `(row, col)`
/// with half-pixel aligned centers and clamp-to-edge addressing.
fn upsample_taps(row: usize, col: usize, full: (usize, usize), coarse: (usize, usize)) -> [(usize, f64); 4] {
    let (fw, fh) = full;
    let (cw, ch) = coarse;
    let x = (col as f64 + 0.5) * cw as f64 / fw as f64 - 0.5;
    let y = (row as f64 + 0.5) * ch as f64 / fh as f64 - 0.5;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let cx = |v: f64| v.clamp(0.0, (cw - 1) as f64) as usize;
    let cy = |v: f64| v.clamp(0.0, (ch - 1) as f64) as usize;
    let (a, b, c, d) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
    [
        (c * cw + a, (1.0 - fy) * (1.0 - fx)),
        (c * cw + b, (1.0 - fy) * fx),
        (d * cw + a, fy * (1.0 - fx)),
        (d * cw + b, fy * fx),
    ]
}

/// Built-in pyramid filter bank.
#[derive(Clone, Debug)]
pub struct FilterBank {
    levels: usize,
    kernels: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn new(levels: usize) -> Self {
        Self {
            levels: levels.max(1),
            kernels: BLUR_SIGMAS.iter().map(|&s| gaussian_kernel(s)).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// The 13 channel maps of one pyramid level from its RGB planes.
    fn level_maps(&self, rgb: &Planes) -> Planes {
        let (w, h) = (rgb.w, rgb.h);
        let mut out = Planes::zeros(w, h, LEVEL_CHANNELS);
        let mut tmp = vec![0.0; w * h];
        for ch in 0..3 {
            out.plane_mut(ch).copy_from_slice(rgb.plane(ch));
            for (b, kernel) in self.kernels.iter().enumerate() {
                tmp.iter_mut().for_each(|v| *v = 0.0);
                convolve(rgb.plane(ch), w, h, kernel, true, &mut tmp);
                convolve(&tmp, w, h, kernel, false, out.plane_mut(3 + 3 * b + ch));
            }
        }
        let lum: Vec<f64> = (0..w * h)
            .map(|i| (0..3).map(|ch| LUMA[ch] * rgb.plane(ch)[i]).sum())
            .collect();
        for (a, angle) in ANGLES_DEG.iter().enumerate() {
            let (s, c) = angle.to_radians().sin_cos();
            let dst = out.plane_mut(9 + a);
            for r in 0..h {
                for col in 0..w {
                    let dx = 0.5 * (lum[r * w + clamp_idx(col as i64 + 1, w)] - lum[r * w + clamp_idx(col as i64 - 1, w)]);
                    let dy = 0.5 * (lum[clamp_idx(r as i64 + 1, h) * w + col] - lum[clamp_idx(r as i64 - 1, h) * w + col]);
                    dst[r * w + col] = c * dx + s * dy;
                }
            }
        }
        out
    }

    fn level_maps_adjoint(&self, grad: &Planes) -> Planes {
        let (w, h) = (grad.w, grad.h);
        let mut out = Planes::zeros(w, h, 3);
        let mut tmp = vec![0.0; w * h];
        let mut glum = vec![0.0; w * h];
        for (a, angle) in ANGLES_DEG.iter().enumerate() {
            let (s, c) = angle.to_radians().sin_cos();
            let g = grad.plane(9 + a);
            for r in 0..h {
                for col in 0..w {
                    let v = g[r * w + col];
                    if v == 0.0 {
                        continue;
                    }
                    glum[r * w + clamp_idx(col as i64 + 1, w)] += 0.5 * c * v;
                    glum[r * w + clamp_idx(col as i64 - 1, w)] -= 0.5 * c * v;
                    glum[clamp_idx(r as i64 + 1, h) * w + col] += 0.5 * s * v;
                    glum[clamp_idx(r as i64 - 1, h) * w + col] -= 0.5 * s * v;
                }
            }
        }
        for ch in 0..3 {
            let mut acc = grad.plane(ch).to_vec();
            for (b, kernel) in self.kernels.iter().enumerate() {
                tmp.iter_mut().for_each(|v| *v = 0.0);
                convolve_adjoint(grad.plane(3 + 3 * b + ch), w, h, kernel, false, &mut tmp);
                convolve_adjoint(&tmp, w, h, kernel, true, &mut acc);
            }
            for (o, (a, l)) in out.plane_mut(ch).iter_mut().zip(acc.iter().zip(&glum)) {
                *o = a + LUMA[ch] * l;
            }
        }
        out
    }

    fn pyramid(&self, image: &TextureImage) -> Vec<Planes> {
        let mut rgb = Planes::from_image(image);
        let mut maps = Vec::with_capacity(self.levels);
        for l in 0..self.levels {
            if l > 0 {
                rgb = downsample(&rgb);
            }
            maps.push(self.level_maps(&rgb));
        }
        maps
    }

    fn check_pixels(image: &TextureImage, pixels: &[[usize; 2]]) -> Result<()> {
        if let Some(p) = pixels.iter().find(|p| p[0] >= image.height() || p[1] >= image.width()) {
            return Err(Error::Shape(format!(
                "pixel {p:?} outside {}x{} image",
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }
}

impl FeatureExtractor for FilterBank {
    fn dim(&self) -> usize {
        LEVEL_CHANNELS * self.levels
    }

    fn extract(&self, image: &TextureImage, pixels: &[[usize; 2]]) -> Result<FeatureStack> {
        Self::check_pixels(image, pixels)?;
        let full = (image.width(), image.height());
        let maps = self.pyramid(image);
        let d = self.dim();
        let mut vectors = vec![0.0; pixels.len() * d];
        for (i, p) in pixels.iter().enumerate() {
            let out = &mut vectors[i * d..(i + 1) * d];
            for (l, m) in maps.iter().enumerate() {
                let taps = upsample_taps(p[0], p[1], full, (m.w, m.h));
                for ch in 0..LEVEL_CHANNELS {
                    let plane = m.plane(ch);
                    out[l * LEVEL_CHANNELS + ch] = taps.iter().map(|&(t, wgt)| wgt * plane[t]).sum();
                }
            }
        }
        FeatureStack::new(vectors, d, pixels.to_vec(), full)
    }

    fn backward(&self, image: &TextureImage, pixels: &[[usize; 2]], grad: &[f64]) -> Result<Vec<f64>> {
        Self::check_pixels(image, pixels)?;
        let d = self.dim();
        if grad.len() != pixels.len() * d {
            return Err(Error::Shape(format!("{} feature gradients for {} x {d}", grad.len(), pixels.len())));
        }
        let full = (image.width(), image.height());
        let mut sizes = vec![full];
        for _ in 1..self.levels {
            let (w, h) = *sizes.last().expect("non-empty");
            sizes.push((w.div_ceil(2), h.div_ceil(2)));
        }
        let mut rgb_grad: Option<Planes> = None;
        for l in (0..self.levels).rev() {
            let (w, h) = sizes[l];
            let mut gm = Planes::zeros(w, h, LEVEL_CHANNELS);
            for (i, p) in pixels.iter().enumerate() {
                let taps = upsample_taps(p[0], p[1], full, (w, h));
                for ch in 0..LEVEL_CHANNELS {
                    let g = grad[i * d + l * LEVEL_CHANNELS + ch];
                    if g == 0.0 {
                        continue;
                    }
                    let plane = gm.plane_mut(ch);
                    for &(t, wgt) in &taps {
                        plane[t] += wgt * g;
                    }
                }
            }
            let mut g_rgb = self.level_maps_adjoint(&gm);
            if let Some(coarser) = rgb_grad.take() {
                let up = downsample_adjoint(&coarser, w, h);
                for (a, b) in g_rgb.data.iter_mut().zip(up.data) {
                    *a += b;
                }
            }
            rgb_grad = Some(g_rgb);
        }
        Ok(rgb_grad.expect("at least one level").to_interleaved())
    }
}
