use std::path::Path;

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};

const W_EPS: f64 = 1e-12;

/// Homogeneous `3 x 4` camera matrix plus a view rotation about the mesh
/// centroid, given as azimuth (about the y axis) then elevation (about the x
/// axis) in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    base: [[f64; 4]; 3],
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Serialize, Deserialize)]
struct ProjectionFile {
    /// Row-major entries of the `3 x 4` matrix.
    matrix: Vec<f64>,
    #[serde(default)]
    azimuth: f64,
    #[serde(default)]
    elevation: f64,
}

impl Projection {
    pub fn new(base: [[f64; 4]; 3], azimuth: f64, elevation: f64) -> Result<Self> {
        if base.iter().flatten().any(|v| !v.is_finite()) || !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::InvalidProjection("non-finite entry".into()));
        }
        let m = Matrix3x4::from_fn(|r, c| base[r][c]);
        let scale = m.amax().max(1.0);
        if m.rank(1e-12 * scale) < 3 {
            return Err(Error::InvalidProjection("matrix must have rank 3".into()));
        }
        Ok(Self {
            base,
            azimuth,
            elevation,
        })
    }

    /// Orthographic camera mapping model `(x, y)` to image `(s x + cx, cy - s y)`.
    pub fn orthographic(scale: f64, cx: f64, cy: f64) -> Self {
        Self::new(
            [[scale, 0.0, 0.0, cx], [0.0, -scale, 0.0, cy], [0.0, 0.0, 0.0, 1.0]],
            0.0,
            0.0,
        )
        .expect("orthographic camera has rank 3")
    }

    pub fn base(&self) -> &[[f64; 4]; 3] {
        &self.base
    }

    pub fn with_view(&self, azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth,
            elevation,
            ..*self
        }
    }

    /// Last row equal to `(0, 0, 0, 1)`.
    pub fn is_affine(&self) -> bool {
        self.base[2] == [0.0, 0.0, 0.0, 1.0]
    }

    /// `R = R_x(elevation) R_y(azimuth)`.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        let ry = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
        let rx = [[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]];
        mat3_mul(&rx, &ry)
    }

    /// Combined camera for a mesh whose view rotation pivots at `center`.
    pub fn camera(&self, center: [f64; 3]) -> Camera {
        let r = self.rotation();
        // Rigid part [R | c - R c].
        let mut rigid = [[0.0; 4]; 4];
        for i in 0..3 {
            rigid[i][..3].copy_from_slice(&r[i]);
            rigid[i][3] = center[i] - (0..3).map(|k| r[i][k] * center[k]).sum::<f64>();
        }
        rigid[3][3] = 1.0;
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                m[i][j] = (0..4).map(|k| self.base[i][k] * rigid[k][j]).sum();
            }
        }
        let affine = self.is_affine();
        let r0 = [m[0][0], m[0][1], m[0][2]];
        let r1 = [m[1][0], m[1][1], m[1][2]];
        let n = cross(&r0, &r1);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(W_EPS);
        Camera {
            m,
            affine,
            view_dir: n.map(|v| v / len),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = ProjectionFile {
            matrix: self.base.iter().flatten().copied().collect(),
            azimuth: self.azimuth,
            elevation: self.elevation,
        };
        blob::write_json(path, &f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: ProjectionFile = blob::read_json(path)?;
        if f.matrix.len() != 12 {
            return Err(Error::InvalidProjection(format!(
                "{}: expected 12 matrix entries, got {}",
                path.display(),
                f.matrix.len()
            )));
        }
        let mut base = [[0.0; 4]; 3];
        for (i, v) in f.matrix.iter().enumerate() {
            base[i / 4][i % 4] = *v;
        }
        Self::new(base, f.azimuth, f.elevation)
    }
}

/// Projection with the view rotation folded in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    m: [[f64; 4]; 3],
    affine: bool,
    view_dir: [f64; 3],
}

impl Camera {
    pub fn matrix(&self) -> &[[f64; 4]; 3] {
        &self.m
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }

    fn row(&self, i: usize, v: &[f64; 3]) -> f64 {
        self.m[i][0] * v[0] + self.m[i][1] * v[1] + self.m[i][2] * v[2] + self.m[i][3]
    }

    /// Homogeneous coordinate of `v`; identically 1 for affine cameras.
    pub fn w(&self, v: &[f64; 3]) -> Result<f64> {
        if self.affine {
            return Ok(1.0);
        }
        let w = self.row(2, v);
        if w.abs() < W_EPS {
            return Err(Error::BehindCamera { w });
        }
        Ok(w)
    }

    pub fn project(&self, v: &[f64; 3]) -> Result<[f64; 2]> {
        let w = self.w(v)?;
        Ok([self.row(0, v) / w, self.row(1, v) / w])
    }

    /// Image position and depth; smaller depth is nearer the viewer. Depth is
    /// `w` for perspective cameras and the coordinate along the viewing
    /// direction `r0 x r1` for affine ones.
    pub fn project_depth(&self, v: &[f64; 3]) -> Result<([f64; 2], f64)> {
        let p = self.project(v)?;
        let depth = if self.affine {
            self.view_dir.iter().zip(v).map(|(a, b)| a * b).sum()
        } else {
            self.row(2, v)
        };
        Ok((p, depth))
    }

    /// `d project / d v` as a `2 x 3` matrix.
    pub fn jacobian(&self, v: &[f64; 3]) -> Result<[[f64; 3]; 2]> {
        let w = self.w(v)?;
        let mut j = [[0.0; 3]; 2];
        if self.affine {
            for (r, row) in j.iter_mut().enumerate() {
                row.copy_from_slice(&self.m[r][..3]);
            }
            return Ok(j);
        }
        let (x, y) = (self.row(0, v), self.row(1, v));
        for c in 0..3 {
            j[0][c] = self.m[0][c] / w - x * self.m[2][c] / (w * w);
            j[1][c] = self.m[1][c] / w - y * self.m[2][c] / (w * w);
        }
        Ok(j)
    }
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
