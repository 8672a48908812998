//! 68-point facial landmark sets, CSV I/O and three-anchor affine alignment.
//!
//! Indexing follows the iBUG-68 convention: jaw 0..=16, brows 17..=26,
//! nose 27..=35, eyes 36..=47, mouth 48..=67.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;
/// Length of a flattened landmark vector `(x0, y0, x1, y1, ...)`.
pub const LANDMARK_DIM: usize = 2 * NUM_LANDMARKS;

pub const LEFT_EYE: Range<usize> = 36..42;
pub const RIGHT_EYE: Range<usize> = 42..48;
pub const MOUTH: Range<usize> = 48..68;

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: [[f64; 2]; NUM_LANDMARKS],
}

impl LandmarkSet {
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::InvalidLandmarks(format!(
                "expected {NUM_LANDMARKS} points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidLandmarks(format!("point {i} is not finite")));
        }
        let mut out = [[0.0; 2]; NUM_LANDMARKS];
        out.copy_from_slice(points);
        Ok(Self { points: out })
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != LANDMARK_DIM {
            return Err(Error::InvalidLandmarks(format!(
                "expected {LANDMARK_DIM} coordinates, got {}",
                values.len()
            )));
        }
        let pts: Vec<[f64; 2]> = values.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Self::new(&pts)
    }

    pub fn points(&self) -> &[[f64; 2]; NUM_LANDMARKS] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let pts: Vec<[f64; 2]> = self.points.iter().map(|&p| f(p)).collect();
        Self::new(&pts)
    }

    fn range_mean(&self, range: Range<usize>) -> [f64; 2] {
        let n = range.len() as f64;
        let mut acc = [0.0; 2];
        for p in &self.points[range] {
            acc[0] += p[0];
            acc[1] += p[1];
        }
        [acc[0] / n, acc[1] / n]
    }

    /// Alignment anchors: left-eye center, right-eye center, mouth center.
    pub fn anchors(&self) -> [[f64; 2]; 3] {
        [
            self.range_mean(LEFT_EYE),
            self.range_mean(RIGHT_EYE),
            self.range_mean(MOUTH),
        ]
    }

    pub fn centroid(&self) -> [f64; 2] {
        self.range_mean(0..NUM_LANDMARKS)
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let mut pts = Vec::with_capacity(NUM_LANDMARKS);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let mut fields = line.split(',');
            let (Some(x), Some(y), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!("expected `x,y`, got `{line}`")));
            };
            let x: f64 = x
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad x coordinate `{}`", x.trim())))?;
            let y: f64 = y
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad y coordinate `{}`", y.trim())))?;
            pts.push([x, y]);
        }
        Self::new(&pts).map_err(|e| match e {
            Error::InvalidLandmarks(m) => Error::InvalidLandmarks(format!("{origin}: {m}")),
            other => other,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(NUM_LANDMARKS * 24);
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p[0], p[1]);
        }
        out
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::blob::ensure_parent(path)?;
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Per-coordinate linear interpolation `(1 - t) * self + t * other`,
    /// clamped onto the segment so the result never leaves it through rounding.
    pub fn lerp(&self, other: &LandmarkSet, t: f64) -> Result<Self> {
        let mut pts = [[0.0; 2]; NUM_LANDMARKS];
        for (i, out) in pts.iter_mut().enumerate() {
            for c in 0..2 {
                let a = self.points[i][c];
                let b = other.points[i][c];
                let v = (1.0 - t) * a + t * b;
                out[c] = v.clamp(a.min(b), a.max(b));
            }
        }
        Self::new(&pts)
    }
}

/// Loads every `*.csv` file of a directory, sorted by file name.
pub fn load_csv_dir(dir: &Path) -> Result<Vec<(String, LandmarkSet)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            LandmarkSet::load_csv(&p).map(|ls| (name, ls))
        })
        .collect()
}

pub fn save_csv_dir(dir: &Path, sets: &[(String, LandmarkSet)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, ls) in sets {
        ls.save_csv(&dir.join(name))?;
    }
    Ok(())
}

/// 2x3 affine map `p -> A p + t`, stored row-major as `[[a00, a01, t0], [a10, a11, t1]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentTransform {
    pub matrix: [[f64; 3]; 2],
}

impl AlignmentTransform {
    pub const IDENTITY: Self = Self {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(matrix: [[f64; 3]; 2]) -> Result<Self> {
        let t = Self { matrix };
        if !matrix.iter().flatten().all(|v| v.is_finite()) || t.det().abs() <= 1e-12 {
            return Err(Error::DegenerateAnchors(format!(
                "linear block is singular (det = {:e})",
                t.det()
            )));
        }
        Ok(t)
    }

    pub fn det(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.matrix[0][2], self.matrix[1][2]]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn apply_set(&self, ls: &LandmarkSet) -> Result<LandmarkSet> {
        ls.map(|p| self.apply(p))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AlignmentTransform) -> AlignmentTransform {
        let a = &self.matrix;
        let b = &other.matrix;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AlignmentTransform { matrix: m }
    }

    pub fn inverse(&self) -> Result<AlignmentTransform> {
        let d = self.det();
        if d.abs() <= 1e-12 {
            return Err(Error::DegenerateAnchors(format!(
                "transform is not invertible (det = {d:e})"
            )));
        }
        let m = &self.matrix;
        let (a, b, c, e) = (m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d);
        let tx = -(a * m[0][2] + b * m[1][2]);
        let ty = -(c * m[0][2] + e * m[1][2]);
        Ok(AlignmentTransform {
            matrix: [[a, b, tx], [c, e, ty]],
        })
    }
}

/// Solves for the affine map taking the three `src` anchors onto `dst`.
pub fn affine_from_anchors(src: &[[f64; 2]; 3], dst: &[[f64; 2]; 3]) -> Result<AlignmentTransform> {
    // Rows [x y 1]; solve M * [a b c]^T = d for each output coordinate.
    let m = [
        [src[0][0], src[0][1], 1.0],
        [src[1][0], src[1][1], 1.0],
        [src[2][0], src[2][1], 1.0],
    ];
    let det = det3(&m);
    let spread = src
        .iter()
        .flat_map(|p| src.iter().map(move |q| (p[0] - q[0]).abs().max((p[1] - q[1]).abs())))
        .fold(0.0_f64, f64::max);
    if !det.is_finite() || det.abs() <= 1e-12 * spread.max(1.0).powi(2) {
        return Err(Error::DegenerateAnchors(format!(
            "anchors are collinear (det = {det:e})"
        )));
    }
    let mut matrix = [[0.0; 3]; 2];
    for (r, row) in matrix.iter_mut().enumerate() {
        for (col, out) in row.iter_mut().enumerate() {
            let mut mk = m;
            for k in 0..3 {
                mk[k][col] = dst[k][r];
            }
            *out = det3(&mk) / det;
        }
    }
    AlignmentTransform::new(matrix)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Maps `ls` onto `avg` through the affine transform fixed by the eye and mouth centers.
pub fn align_to_average(ls: &LandmarkSet, avg: &LandmarkSet) -> Result<(LandmarkSet, AlignmentTransform)> {
    let transform = affine_from_anchors(&ls.anchors(), &avg.anchors())?;
    Ok((transform.apply_set(ls)?, transform))
}

/// Estimates a normalized average face from raw samples: the mean shape is
/// centered at the origin with unit RMS radius, refined once by aligning every
/// sample to the first estimate.
pub fn average_face(samples: &[LandmarkSet]) -> Result<LandmarkSet> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let first = normalize_shape(&mean_shape(samples)?)?;
    let aligned = samples
        .iter()
        .map(|s| align_to_average(s, &first).map(|(a, _)| a))
        .collect::<Result<Vec<_>>>()?;
    normalize_shape(&mean_shape(&aligned)?)
}

pub fn mean_shape(samples: &[LandmarkSet]) -> Result<LandmarkSet> {
    let mut acc = vec![0.0; LANDMARK_DIM];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.flatten()) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    LandmarkSet::from_flat(&acc)
}

fn normalize_shape(ls: &LandmarkSet) -> Result<LandmarkSet> {
    let c = ls.centroid();
    let rms = (ls
        .points()
        .iter()
        .map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
        .sum::<f64>()
        / NUM_LANDMARKS as f64)
        .sqrt();
    if rms <= 1e-12 {
        return Err(Error::InvalidLandmarks("average shape collapsed to a point".into()));
    }
    ls.map(|p| [(p[0] - c[0]) / rms, (p[1] - c[1]) / rms])
}
